#include "memgame/game.hpp"

#include <algorithm>
#include <cmath>

#include "memgame/conditional.hpp"
#include "memgame/errors.hpp"

namespace memgame {

namespace {

FlowArgs flow_at(const PathBundle& paths, std::size_t p, std::size_t s) {
    FlowArgs a;
    a.t = paths.grid.time(s);
    a.x = paths.X(p, s);
    for (std::size_t i = 0; i < 2; ++i) {
        a.y[i] = paths.y(i, p, s);
        a.m[i] = paths.memory(i, p, s);
        a.u[i] = paths.control(i, p, s);
    }
    return a;
}

// int f dt (trapezoid) + phi(X(T)) per path
std::vector<double> forward_samples(const GameModel& model, int player,
                                    const PathBundle& paths, const ExecPolicy& policy) {
    const auto& perf = model.players[player].performance;
    const std::size_t n = paths.grid.n_steps;
    std::vector<double> out(paths.n_paths, 0.0);
    if (!perf.running_reward && !perf.bequest) return out;
    parallel_for(policy, paths.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            double acc = 0.0;
            if (perf.running_reward) {
                double prev = perf.running_reward(flow_at(paths, p, 0));
                for (std::size_t s = 1; s <= n; ++s) {
                    const double cur = perf.running_reward(flow_at(paths, p, s));
                    acc += 0.5 * (prev + cur) * paths.grid.dt;
                    prev = cur;
                }
            }
            if (perf.bequest) acc += perf.bequest(paths.X(p, n));
            out[p] = acc;
        }
    });
    return out;
}

} // namespace

PerformanceEstimate estimate_performance(const GameModel& model, int player,
                                         const PathBundle& paths,
                                         const NoiseBatch& noise,
                                         const SolverConfig& config) {
    const auto& perf = model.players[player].performance;
    PerformanceEstimate est;
    est.samples = forward_samples(model, player, paths, config.policy);
    est.forward_part =
        block_sum(config.policy, est.samples.size(),
                  [&](std::size_t p) { return est.samples[p]; }) /
        static_cast<double>(est.samples.size());

    if (perf.utility_weight) {
        BsdeSolution sol =
            solve_bsde_lsmc(model.players[player].bsde, paths, noise, config.basis,
                            config.policy, config.regressors);
        est.w0 = sol.w0();
        const double psi = perf.utility_weight(est.w0);
        double psip;
        if (perf.utility_weight_prime) {
            psip = perf.utility_weight_prime(est.w0);
        } else {
            const double h = 1e-5 * std::max(1.0, std::abs(est.w0));
            psip = (perf.utility_weight(est.w0 + h) - perf.utility_weight(est.w0 - h)) /
                   (2.0 * h);
        }
        // psi linearised around W(0): keeps the sample mean equal to J and
        // lets common-random-number differences see the W(0) sensitivity
        const double w0 = est.w0;
        parallel_for(config.policy, est.samples.size(),
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t p = lo; p < hi; ++p)
                             est.samples[p] +=
                                 psi + psip * (sol.w0_samples[p] - w0);
                     });
    }
    MeanVar mv = block_mean_var(config.policy, est.samples.size(),
                                [&](std::size_t p) { return est.samples[p]; });
    est.value = mv.mean;
    est.se = mv.se();
    return est;
}

PerformanceEstimate estimate_performance(const GameModel& model, int player,
                                         const ControlPair& controls,
                                         const NoiseBatch& noise,
                                         const SolverConfig& config) {
    PathBundle paths = simulate_forward(model.forward, controls, noise, config.policy);
    return estimate_performance(model, player, paths, noise, config);
}

std::vector<Direction> direction_dictionary(const TimeGrid& grid, std::size_t n_t0) {
    std::vector<Direction> dirs;
    for (std::size_t k = 0; k < n_t0; ++k) {
        const double t0 = grid.horizon * static_cast<double>(k) /
                          static_cast<double>(n_t0);
        Direction d;
        d.name = "step(" + std::to_string(t0) + ")";
        d.beta.assign(grid.n_steps, 0.0);
        for (std::size_t s = 0; s < grid.n_steps; ++s)
            if (grid.time(s) > t0) d.beta[s] = 1.0;
        dirs.push_back(std::move(d));
    }
    Direction c;
    c.name = "const";
    c.beta.assign(grid.n_steps, 1.0);
    dirs.push_back(std::move(c));
    return dirs;
}

namespace {

ControlProcess bump_control(const ControlProcess& c, const std::vector<double>& beta,
                            double s, const TimeGrid& grid, double lo, double hi) {
    if (c.kind == ControlProcess::Kind::piecewise_constant) {
        ControlProcess out = c;
        for (std::size_t step = 0; step < out.values.size(); ++step) {
            out.values[step] += s * beta[step < beta.size() ? step : beta.size() - 1];
            if (out.values[step] < lo || out.values[step] > hi)
                throw AdmissibilityViolation("bumped control left the admissible box");
        }
        return out;
    }
    auto base = c.rule;
    const double dt = grid.dt;
    const std::size_t n = grid.n_steps;
    ControlProcess out = ControlProcess::from_rule(
        [base, beta, s, dt, n, lo, hi](double t, double x) {
            std::size_t step = static_cast<std::size_t>(std::llround(t / dt));
            if (step >= n) step = n - 1;
            const double v =
                base(t, x) + s * beta[step < beta.size() ? step : beta.size() - 1];
            if (v < lo || v > hi)
                throw AdmissibilityViolation("bumped control left the admissible box");
            return v;
        },
        c.player);
    return out;
}

} // namespace

GateauxResult gateaux_derivative(const GameModel& model, int player,
                                 const ControlPair& controls,
                                 const std::vector<double>& beta, double bump,
                                 const NoiseBatch& noise, const SolverConfig& config,
                                 bool richardson) {
    const double lo = model.players[player].control_lo;
    const double hi = model.players[player].control_hi;

    GateauxResult r;
    r.bump = bump;
    r.kappa = 1e300;
    if (controls[player].kind == ControlProcess::Kind::piecewise_constant) {
        // admissibility radius of the perturbation (assumption A2's kappa)
        for (std::size_t s = 0; s < controls[player].values.size(); ++s) {
            const double b = beta[s < beta.size() ? s : beta.size() - 1];
            if (b == 0.0) continue;
            const double v = controls[player].values[s];
            r.kappa = std::min(r.kappa,
                               std::min((hi - v) / std::abs(b), (v - lo) / std::abs(b)));
        }
        if (bump >= r.kappa)
            throw AdmissibilityViolation("central-difference bump exceeds kappa");
    }

    auto eval = [&](double s) {
        ControlPair bumped = controls;
        bumped[player] = bump_control(controls[player], beta, s, noise.grid, lo, hi);
        return estimate_performance(model, player, bumped, noise, config);
    };
    const PerformanceEstimate up = eval(bump);
    const PerformanceEstimate dn = eval(-bump);
    r.derivative = (up.value - dn.value) / (2.0 * bump);
    MeanVar mv = block_mean_var(config.policy, up.samples.size(), [&](std::size_t p) {
        return (up.samples[p] - dn.samples[p]) / (2.0 * bump);
    });
    r.se = mv.se();
    if (richardson) {
        const PerformanceEstimate up2 = eval(bump / 2.0);
        const PerformanceEstimate dn2 = eval(-bump / 2.0);
        const double d2 = (up2.value - dn2.value) / bump;
        r.richardson_gap = std::abs(d2 - r.derivative);
    }
    return r;
}

HamiltonianFoc hamiltonian_foc_statistics(const GameModel& model, int player,
                                          const PathBundle& paths,
                                          const BsdeSolution& bsde,
                                          const AdjointSolution& adjoint,
                                          const RegressionBasis& basis,
                                          const ExecPolicy& policy) {
    const auto& ham = model.players[player].hamiltonian;
    const std::size_t n = paths.grid.n_steps;
    const std::size_t n_paths = paths.n_paths;
    const std::size_t n_marks =
        ham.jump_spec.intensity > 0.0 ? ham.jump_spec.n_marks() : 0;

    HamiltonianFoc foc;
    foc.mean.resize(n);
    foc.se.resize(n);
    foc.conditional_rms.resize(n);
    std::vector<double> values(n_paths), fitted(n_paths);
    for (std::size_t s = 0; s < n; ++s) {
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                AdjointState st = path_state(paths, bsde, p, s, n_marks);
                st.lambda = adjoint.lambda(p, s);
                st.p = adjoint.pqr.W(p, s);
                st.q = adjoint.pqr.Z(p, s);
                for (std::size_t j = 0; j < n_marks; ++j)
                    st.r[j] = adjoint.pqr.K[j](p, s);
                values[p] = hamiltonian_partial(ham, st, HArg::u_own);
            }
        });
        MeanVar mv =
            block_mean_var(policy, n_paths, [&](std::size_t p) { return values[p]; });
        foc.mean[s] = mv.mean;
        foc.se[s] = mv.se();
        PathStateConditional cs(paths, s, basis, RegressorSet{}, policy);
        cs.fit(values.data(), fitted.data());
        foc.conditional_rms[s] = std::sqrt(
            block_sum(policy, n_paths,
                      [&](std::size_t p) { return fitted[p] * fitted[p]; }) /
            static_cast<double>(n_paths));
    }
    return foc;
}

double gateaux_hamiltonian_form(const HamiltonianFoc& foc,
                                const std::vector<double>& beta, double dt,
                                double* se_out) {
    double v = 0.0, var = 0.0;
    for (std::size_t s = 0; s < foc.mean.size(); ++s) {
        const double b = beta[s < beta.size() ? s : beta.size() - 1];
        v += b * foc.mean[s] * dt;
        var += b * b * foc.se[s] * foc.se[s] * dt * dt;
    }
    if (se_out) *se_out = std::sqrt(var);
    return v;
}

ControlFamily ControlFamily::piecewise_bins(const TimeGrid& grid, std::size_t n_bins,
                                            double lo, double hi,
                                            std::vector<double> initial, int player) {
    ControlFamily fam;
    fam.dim = n_bins;
    fam.lo.assign(n_bins, lo);
    fam.hi.assign(n_bins, hi);
    fam.initial = std::move(initial);
    const std::size_t n = grid.n_steps;
    fam.make = [n, n_bins, player](const std::vector<double>& params) {
        std::vector<double> per_step(n);
        for (std::size_t s = 0; s < n; ++s) {
            std::size_t b = (s * n_bins) / n;
            if (b >= n_bins) b = n_bins - 1;
            per_step[s] = params[b];
        }
        return ControlProcess::piecewise(std::move(per_step), player);
    };
    return fam;
}

BestResponse best_response(const GameModel& model, int player,
                           const ControlProcess& opponent, const ControlFamily& family,
                           const NoiseBatch& noise, const SolverConfig& config,
                           std::size_t max_sweeps, double improve_tol) {
    if (family.dim > 20)
        throw ConfigError("control family dimension above the coordinate-search limit");

    // smaller common-random-number batch for the line searches
    NoiseBatch search_storage;
    const NoiseBatch* search = &noise;
    if (config.search_paths > 0 && config.search_paths < noise.n_paths) {
        search_storage = sample_noise(noise.grid, config.search_paths, noise.seed,
                                      noise.jump_spec, 0, config.policy);
        search = &search_storage;
    }
    SolverConfig scfg = config;
    scfg.basis = config.search_basis;
    scfg.regressors = config.search_regressors;

    auto eval = [&](const std::vector<double>& params) {
        ControlPair pair;
        pair[player] = family.make(params);
        pair[1 - player] = opponent;
        return estimate_performance(model, player, pair, *search, scfg).value;
    };

    std::vector<double> params = family.initial;
    double best = eval(params);
    bool improving = true;
    std::size_t sweep = 0;
    const double golden = 0.6180339887498949;
    for (; sweep < max_sweeps && improving; ++sweep) {
        improving = false;
        for (std::size_t i = 0; i < family.dim; ++i) {
            double a = family.lo[i], b = family.hi[i];
            const double span_tol = 1e-3 * (b - a);
            auto h = [&](double v) {
                std::vector<double> q = params;
                q[i] = v;
                return eval(q);
            };
            double x1 = b - golden * (b - a);
            double x2 = a + golden * (b - a);
            double f1 = h(x1), f2 = h(x2);
            while (b - a > span_tol) {
                if (f1 < f2) {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + golden * (b - a);
                    f2 = h(x2);
                } else {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - golden * (b - a);
                    f1 = h(x1);
                }
            }
            const double xc = f1 > f2 ? x1 : x2;
            const double fc = std::max(f1, f2);
            if (fc > best + improve_tol * (1.0 + std::abs(best))) {
                params[i] = xc;
                best = fc;
                improving = true;
            }
        }
    }

    BestResponse br;
    br.params = params;
    br.control = family.make(params);
    br.converged = !improving || sweep < max_sweeps;
    br.sweeps = sweep;

    ControlPair pair;
    pair[player] = br.control;
    pair[1 - player] = opponent;
    PerformanceEstimate full = estimate_performance(model, player, pair, noise, config);
    br.value = full.value;
    br.value_se = full.se;
    return br;
}

namespace {

bool sample_psi_monotone(const PerformanceSpec& perf, double w0, double spread) {
    if (!perf.utility_weight) return true;
    const double lo = w0 - 4.0 * spread - 1.0;
    const double hi = w0 + 4.0 * spread + 1.0;
    const int n = 64;
    double prev = perf.utility_weight(lo);
    for (int i = 1; i <= n; ++i) {
        const double w = lo + (hi - lo) * static_cast<double>(i) / n;
        const double cur = perf.utility_weight(w);
        if (cur < prev - 1e-12 * (1.0 + std::abs(prev))) return false;
        prev = cur;
    }
    return true;
}

} // namespace

NashCertificate certify_nash(const GameModel& model, const ControlPair& candidates,
                             const std::array<ControlFamily, 2>& families,
                             const NoiseBatch& noise, const SolverConfig& config,
                             const NashTolerances& tol) {
    NashCertificate cert;
    cert.scope_note =
        "best-response gaps certified against the supplied control families; "
        "first-order and concavity checks cover the full admissible set";

    PathBundle bundle = simulate_forward(model.forward, candidates, noise, config.policy);
    const TimeGrid& grid = bundle.grid;
    const std::size_t n = grid.n_steps;

    bool all_pass = true;
    for (int player = 0; player < 2; ++player) {
        PlayerCertificate& pc = cert.players[player];
        const PlayerSpec& ps = model.players[player];
        const std::size_t n_marks =
            ps.hamiltonian.jump_spec.intensity > 0.0 ? ps.hamiltonian.jump_spec.n_marks()
                                                     : 0;

        PerformanceEstimate jc =
            estimate_performance(model, player, bundle, noise, config);
        pc.j_candidate = jc.value;
        pc.j_candidate_se = jc.se;

        BsdeSolution bsde = solve_bsde_lsmc(ps.bsde, bundle, noise, config.basis,
                                            config.policy, config.regressors);
        PathMatrix lambda = solve_lambda_forward(ps.hamiltonian, ps.adjoint_terminal,
                                                 bundle, bsde, noise, config.policy);
        AdjointSolution adjoint;
        if (ps.adjoint_p_solver) {
            adjoint.lambda = lambda;
            adjoint.pqr = ps.adjoint_p_solver(bundle, lambda, noise, config);
            adjoint.p2 = PathMatrix(bundle.n_paths, n + 1);
            adjoint.q2 = PathMatrix(bundle.n_paths, n + 1);
        } else {
            adjoint = solve_adjoint_triple(ps.hamiltonian, ps.adjoint_terminal, bundle,
                                           bsde, lambda, noise, config.basis,
                                           config.policy, config.regressors);
        }

        // first-order condition along the candidate
        pc.foc = hamiltonian_foc_statistics(model, player, bundle, bsde, adjoint,
                                            config.basis, config.policy);
        pc.foc_scale.assign(n, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            for (const double factor : {2.0, 0.5}) {
                const double probe = std::abs(block_sum(
                    config.policy, bundle.n_paths,
                    [&](std::size_t p) {
                        AdjointState st = path_state(bundle, bsde, p, s, n_marks);
                        st.lambda = adjoint.lambda(p, s);
                        st.p = adjoint.pqr.W(p, s);
                        st.q = adjoint.pqr.Z(p, s);
                        for (std::size_t j = 0; j < n_marks; ++j)
                            st.r[j] = adjoint.pqr.K[j](p, s);
                        st.u[player] *= factor;
                        return hamiltonian_partial(ps.hamiltonian, st, HArg::u_own);
                    }) / static_cast<double>(bundle.n_paths));
                pc.foc_scale[s] = std::max(pc.foc_scale[s], probe);
            }
        }
        pc.foc_worst_excess = -1e300;
        for (std::size_t s = 0; s < n; ++s) {
            const double allowance =
                3.0 * pc.foc.se[s] + tol.foc_rel * pc.foc_scale[s] + 1e-12;
            pc.foc_worst_excess =
                std::max(pc.foc_worst_excess, std::abs(pc.foc.mean[s]) - allowance);
        }
        pc.pass_foc = pc.foc_worst_excess <= 0.0;

        pc.concavity = check_concavity_hat_hamiltonian(
            ps.hamiltonian, bundle, bsde, adjoint, ps.control_lo, ps.control_hi,
            tol.concavity_samples, noise.seed + 97 * (player + 1), config.policy);
        pc.pass_concavity =
            pc.concavity.n_violations == 0 && pc.concavity.lambda_terminal_nonneg;

        MeanVar w0_spread =
            block_mean_var(config.policy, bsde.w0_samples.size(),
                           [&](std::size_t p) { return bsde.w0_samples[p]; });
        pc.psi_monotone = sample_psi_monotone(ps.performance, bsde.w0(),
                                              std::sqrt(w0_spread.variance));

        // control scale for the central-difference bump
        const double control_scale = block_sum(
            config.policy, bundle.n_paths, [&](std::size_t p) {
                double acc = 0.0;
                for (std::size_t s = 0; s < n; ++s)
                    acc += std::abs(bundle.u[player](p, s));
                return acc / static_cast<double>(n);
            }) / static_cast<double>(bundle.n_paths);
        const double bump = tol.bump_rel * std::max(control_scale, 1e-6);

        // smaller common-random-number batch for the central differences
        NoiseBatch deriv_storage;
        const NoiseBatch* deriv_noise = &noise;
        if (config.derivative_paths > 0 && config.derivative_paths < noise.n_paths) {
            deriv_storage = sample_noise(grid, config.derivative_paths, noise.seed,
                                         noise.jump_spec, 0, config.policy);
            deriv_noise = &deriv_storage;
        }

        pc.pass_gateaux = true;
        for (const Direction& dir : direction_dictionary(grid)) {
            GateauxResult g = gateaux_derivative(model, player, candidates, dir.beta,
                                                 bump, *deriv_noise, config);
            PlayerCertificate::DirectionalDerivative dd;
            dd.direction = dir.name;
            dd.value = g.derivative;
            dd.se = g.se;
            dd.hamiltonian_form =
                gateaux_hamiltonian_form(pc.foc, dir.beta, grid.dt, &dd.hamiltonian_form_se);
            pc.gateaux.push_back(dd);
            double beta_integral = 0.0;
            for (std::size_t s = 0; s < grid.n_steps; ++s)
                beta_integral += dir.beta[s] * grid.dt;
            const double allowance =
                tol.derivative_sigmas * g.se +
                tol.derivative_dt_coeff * grid.dt * beta_integral *
                    (1.0 + std::abs(jc.value));
            if (std::abs(g.derivative) > allowance) pc.pass_gateaux = false;
        }

        BestResponse br = best_response(model, player, candidates[1 - player],
                                        families[player], noise, config);
        pc.best_response_params = br.params;
        pc.best_response_converged = br.converged;

        ControlPair br_pair;
        br_pair[player] = br.control;
        br_pair[1 - player] = candidates[1 - player];
        PerformanceEstimate jbr =
            estimate_performance(model, player, br_pair, noise, config);
        pc.best_response_gap = jbr.value - jc.value;
        MeanVar gap_mv =
            block_mean_var(config.policy, jbr.samples.size(), [&](std::size_t p) {
                return jbr.samples[p] - jc.samples[p];
            });
        pc.best_response_gap_se = gap_mv.se();
        pc.pass_gap = pc.best_response_gap <=
                      tol.gap_sigmas * pc.best_response_gap_se +
                          1e-10 * (1.0 + std::abs(jc.value));

        all_pass = all_pass && pc.pass_gap && pc.pass_gateaux && pc.pass_foc &&
                   pc.pass_concavity && pc.psi_monotone;
    }
    cert.pass = all_pass;
    return cert;
}

} // namespace memgame
