#include "memgame/forward_model.hpp"

#include <cmath>

#include "memgame/errors.hpp"

namespace memgame {

PathBundle simulate_forward(const ModelSpec& model, const ControlPair& controls,
                            const NoiseBatch& noise, const ExecPolicy& policy) {
    const TimeGrid& grid = noise.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = noise.n_paths;
    const bool has_jumps = model.jump_spec.intensity > 0.0;

    PathBundle bundle;
    bundle.grid = grid;
    bundle.n_paths = n_paths;
    bundle.x0 = model.x0;
    bundle.X = PathMatrix(n_paths, n + 1);
    for (std::size_t i = 0; i < 2; ++i) {
        if (grid.delay_steps.size() > i && grid.delay_steps[i] > 0)
            bundle.mem[i] = PathMatrix(n_paths, n + 1);
        bundle.u[i] = PathMatrix(n_paths, n);
    }
    const std::size_t d1 = grid.delay_steps.size() > 0 ? grid.delay_steps[0] : 0;
    const std::size_t d2 = grid.delay_steps.size() > 1 ? grid.delay_steps[1] : 0;
    static const std::vector<JumpEvent> no_events;

    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            double* x = bundle.X.row(p);
            double* m1 = d1 > 0 ? bundle.mem[0].row(p) : nullptr;
            double* m2 = d2 > 0 ? bundle.mem[1].row(p) : nullptr;
            const double* db = noise.dB.row(p);
            const auto& events = has_jumps ? noise.jumps[p] : no_events;
            std::size_t ev = 0;

            x[0] = model.x0;
            if (m1) m1[0] = 0.0;
            if (m2) m2[0] = 0.0;

            FlowArgs args;
            double logx = 0.0; // ln(X / x0), log scheme only
            for (std::size_t s = 0; s < n; ++s) {
                args.t = grid.time(s);
                args.x = x[s];
                args.y[0] = s >= d1 ? x[s - d1] : model.x0;
                args.y[1] = s >= d2 ? x[s - d2] : model.x0;
                args.m[0] = m1 ? m1[s] : 0.0;
                args.m[1] = m2 ? m2[s] : 0.0;
                args.u[0] = controls[0].value(s, args.t, args.x);
                args.u[1] = controls[1].value(s, args.t, args.x);
                bundle.u[0](p, s) = args.u[0];
                bundle.u[1](p, s) = args.u[1];

                if (model.scheme == ModelSpec::Scheme::explicit_euler) {
                    double dx =
                        model.drift(args) * grid.dt + model.diffusion(args) * db[s];
                    if (has_jumps) {
                        // realised jumps at the pre-jump state, then the compensator
                        while (ev < events.size() && events[ev].step == s) {
                            dx += model.jump_coef(
                                args, model.jump_spec.mark_values[events[ev].mark]);
                            ++ev;
                        }
                        double comp = 0.0;
                        for (std::size_t j = 0; j < model.jump_spec.n_marks(); ++j)
                            comp +=
                                model.jump_coef(args, model.jump_spec.mark_values[j]) *
                                model.jump_spec.nu(j);
                        dx -= comp * grid.dt;
                    }
                    x[s + 1] = x[s] + dx;
                } else {
                    // relative coefficients of the multiplicative model
                    const double br = model.drift(args) / args.x;
                    const double sr = model.diffusion(args) / args.x;
                    double dlog = (br - 0.5 * sr * sr) * grid.dt + sr * db[s];
                    if (has_jumps) {
                        while (ev < events.size() && events[ev].step == s) {
                            const double rel =
                                model.jump_coef(
                                    args, model.jump_spec.mark_values[events[ev].mark]) /
                                args.x;
                            if (!(1.0 + rel > 0.0))
                                throw NumericalBlowup(noise.first_path + p, s, rel);
                            dlog += std::log1p(rel);
                            ++ev;
                        }
                        double comp = 0.0;
                        for (std::size_t j = 0; j < model.jump_spec.n_marks(); ++j)
                            comp += model.jump_coef(args,
                                                    model.jump_spec.mark_values[j]) /
                                    args.x * model.jump_spec.nu(j);
                        dlog -= comp * grid.dt;
                    }
                    logx += dlog;
                    x[s + 1] = model.x0 * std::exp(logx);
                }
                if (!(std::abs(x[s + 1]) <= model.blowup_guard))
                    throw NumericalBlowup(noise.first_path + p, s, x[s + 1]);

                // sliding-window update of the noisy memory
                if (m1) m1[s + 1] = m1[s] + x[s] * db[s] -
                                    (s >= d1 ? x[s - d1] * db[s - d1] : 0.0);
                if (m2) m2[s + 1] = m2[s] + x[s] * db[s] -
                                    (s >= d2 ? x[s - d2] * db[s - d2] : 0.0);
            }
        }
    });
    return bundle;
}

MeanVar noisy_memory_variance_probe(double x0, double delta, double t,
                                    const NoiseBatch& noise, const ExecPolicy& policy) {
    ModelSpec model;
    model.x0 = x0;
    model.drift = [](const FlowArgs&) { return 0.0; };
    model.diffusion = [](const FlowArgs&) { return 0.0; };

    TimeGrid grid = noise.grid;
    NoiseBatch probe_noise = noise;
    // the probe measures player 1's memory window
    probe_noise.grid.delay_steps.assign(2, 0);
    probe_noise.grid.delay_steps[0] =
        static_cast<std::size_t>(std::llround(delta / grid.dt));

    ControlPair controls{ControlProcess::constant(0.0, grid.n_steps, 0),
                         ControlProcess::constant(0.0, grid.n_steps, 1)};
    PathBundle bundle = simulate_forward(model, controls, probe_noise, policy);

    const auto step = static_cast<std::size_t>(std::llround(t / grid.dt));
    MeanVar mv = block_mean_var(policy, bundle.n_paths, [&](std::size_t p) {
        return bundle.memory(0, p, step);
    });
    // report the variance of Lambda(t); se() then gives the normal-theory
    // spread sqrt(2/(n-1)) * var of the variance estimate
    MeanVar out;
    out.n = mv.n;
    out.mean = mv.variance;
    if (mv.n > 1)
        out.variance = 2.0 * mv.variance * mv.variance * static_cast<double>(mv.n) /
                       static_cast<double>(mv.n - 1);
    return out;
}

} // namespace memgame
