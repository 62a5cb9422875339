#include "memgame/bsde.hpp"

#include <cmath>
#include <memory>

#include "memgame/conditional.hpp"
#include "memgame/errors.hpp"

namespace memgame {

namespace {

bool has_spread(const std::vector<double>& col, const ExecPolicy& policy) {
    MeanVar mv = block_mean_var(policy, col.size(), [&](std::size_t p) { return col[p]; });
    return std::sqrt(mv.variance) > 1e-12 * (1.0 + std::abs(mv.mean));
}

// number of mark-j jumps of path p in step s
std::size_t count_jumps(const NoiseBatch& noise, std::size_t path, std::size_t step,
                        std::size_t mark) {
    std::size_t c = 0;
    for (const JumpEvent& ev : noise.jumps[path])
        if (ev.step == step && ev.mark == mark) ++c;
    return c;
}

void sample_driver_slopes(const DriverSpec& spec, const PathBundle& paths,
                          const NoiseBatch& noise, BsdeSolution& sol) {
    if (!spec.driver) return;
    const std::size_t n = paths.grid.n_steps;
    const std::size_t n_marks = noise.jump_spec.n_marks();
    const std::size_t n_samples = std::min<std::size_t>(64, paths.n_paths);
    std::vector<double> kbuf(std::max<std::size_t>(n_marks, 1), 0.0);
    double max_slope = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t p = (i * paths.n_paths) / n_samples;
        const std::size_t s = n > 1 ? (i * (n - 1)) / n_samples : 0;
        DriverArgs a;
        a.step = s;
        a.path = p;
        a.flow.t = paths.grid.time(s);
        a.flow.x = paths.X(p, s);
        for (std::size_t j = 0; j < 2; ++j) {
            a.flow.y[j] = paths.y(j, p, s);
            a.flow.m[j] = paths.memory(j, p, s);
            a.flow.u[j] = paths.control(j, p, s);
        }
        a.w = sol.W(p, n);
        a.z = 0.0;
        a.k = kbuf.data();
        a.n_marks = n_marks;
        a.partial = &sol;

        const double h = 1e-4 * (1.0 + std::abs(a.w));
        auto slope = [&](double& slot) {
            const double keep = slot;
            slot = keep + h;
            const double up = spec.driver(a);
            slot = keep - h;
            const double dn = spec.driver(a);
            slot = keep;
            return std::abs(up - dn) / (2.0 * h);
        };
        max_slope = std::max(max_slope, slope(a.w));
        max_slope = std::max(max_slope, slope(a.z));
        for (std::size_t j = 0; j < n_marks; ++j)
            max_slope = std::max(max_slope, slope(kbuf[j]));
    }
    sol.max_sampled_slope = max_slope;
    sol.lipschitz_warning = max_slope > spec.lipschitz_bound;
}

} // namespace

BsdeSolution solve_bsde_lsmc(const DriverSpec& spec, const PathBundle& paths,
                             const NoiseBatch& noise, const RegressionBasis& basis,
                             const ExecPolicy& policy, const RegressorSet& regressors) {
    const TimeGrid& grid = paths.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = paths.n_paths;
    const std::size_t n_marks =
        noise.jump_spec.intensity > 0.0 ? noise.jump_spec.n_marks() : 0;

    BsdeSolution sol;
    sol.W = PathMatrix(n_paths, n + 1);
    sol.Z = PathMatrix(n_paths, n);
    sol.K.assign(n_marks, PathMatrix(n_paths, n));

    // terminal condition, exact by construction (absent data reads as zero)
    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p)
            sol.W(p, n) = spec.terminal_by_path
                              ? spec.terminal_by_path(p, paths.X(p, n))
                              : (spec.terminal ? spec.terminal(paths.X(p, n)) : 0.0);
    });

    sample_driver_slopes(spec, paths, noise, sol);

    std::vector<double> continuation(n_paths), target(n_paths), fitted(n_paths);

    for (std::size_t s = n; s-- > 0;) {
        PathStateConditional cs(paths, s, basis, regressors, policy);

        // continuation value E^[W_{s+1} | F_s]
        std::vector<double> next(n_paths);
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) next[p] = sol.W(p, s + 1);
        });
        cs.fit(next.data(), continuation.data());

        // Z from the centred covariation target: E[(W_{s+1}-CW) dB | F_s]/dt.
        // Centring leaves the conditional expectation unchanged and removes
        // the 1/dt variance blow-up.
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p)
                target[p] = (next[p] - continuation[p]) * noise.dB(p, s) / grid.dt;
        });
        cs.fit(target.data(), fitted.data());
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) sol.Z(p, s) = fitted[p];
        });

        for (std::size_t j = 0; j < n_marks; ++j) {
            const double nu_dt = noise.jump_spec.nu(j) * grid.dt;
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) {
                    const double comp =
                        static_cast<double>(count_jumps(noise, p, s, j)) - nu_dt;
                    target[p] = (next[p] - continuation[p]) * comp / nu_dt;
                }
            });
            cs.fit(target.data(), fitted.data());
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) sol.K[j](p, s) = fitted[p];
            });
        }

        // explicit driver step on the regressed values
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> klocal(std::max<std::size_t>(n_marks, 1), 0.0);
            for (std::size_t p = lo; p < hi; ++p) {
                DriverArgs a;
                a.step = s;
                a.path = p;
                a.flow.t = grid.time(s);
                a.flow.x = paths.X(p, s);
                for (std::size_t j = 0; j < 2; ++j) {
                    a.flow.y[j] = paths.y(j, p, s);
                    a.flow.m[j] = paths.memory(j, p, s);
                    a.flow.u[j] = paths.control(j, p, s);
                }
                a.w = continuation[p];
                a.z = sol.Z(p, s);
                for (std::size_t j = 0; j < n_marks; ++j) klocal[j] = sol.K[j](p, s);
                a.k = klocal.data();
                a.n_marks = n_marks;
                a.partial = &sol;
                const double g = spec.driver ? spec.driver(a) : 0.0;
                sol.W(p, s) = continuation[p] + g * grid.dt;
                if (s == 0) target[p] = g; // reused below for the w0 samples
            }
        });

        if (s == 0) {
            sol.w0_samples.resize(n_paths);
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p)
                    sol.w0_samples[p] = next[p] + target[p] * grid.dt;
            });
        }
    }
    return sol;
}

BsdeSolution solve_linear_bsde_gamma(const PathMatrix& gamma, const LinearSource& source,
                                     const TimeGrid& grid, const RegressionBasis& basis,
                                     const ExecPolicy& policy, bool trapezoid) {
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = gamma.n_paths();
    const auto* det = std::get_if<std::vector<double>>(&source);
    const auto* per_path = std::get_if<PathMatrix>(&source);

    auto src = [&](std::size_t p, std::size_t s) {
        return det ? (*det)[s] : (*per_path)(p, s);
    };

    // backward accumulation of the Gamma-weighted source integral
    PathMatrix integral(n_paths, n + 1);
    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            integral(p, n) = 0.0;
            for (std::size_t s = n; s-- > 0;) {
                const double inc =
                    trapezoid ? 0.5 * (src(p, s) * gamma(p, s) +
                                       src(p, s + 1) * gamma(p, s + 1)) * grid.dt
                              : src(p, s) * gamma(p, s) * grid.dt;
                integral(p, s) = integral(p, s + 1) + inc;
            }
        }
    });

    BsdeSolution sol;
    sol.W = PathMatrix(n_paths, n + 1);
    std::vector<double> col(n_paths), target(n_paths), fitted(n_paths);
    for (std::size_t s = 0; s <= n; ++s) {
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                col[p] = gamma(p, s);
                target[p] = integral(p, s);
            }
        });
        if (has_spread(col, policy)) {
            std::vector<const double*> vars{col.data()};
            StepRegression reg(vars, n_paths, basis, policy);
            reg.fit(target.data(), fitted.data());
        } else {
            const double m =
                block_sum(policy, n_paths, [&](std::size_t p) { return target[p]; }) /
                static_cast<double>(n_paths);
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) fitted[p] = m;
            });
        }
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                const double g = gamma(p, s);
                if (std::abs(g) < 1e-12)
                    throw DomainError("integrating factor vanished along a path");
                sol.W(p, s) = fitted[p] / g;
            }
        });
    }
    sol.w0_samples.assign(n_paths, sol.W(0, 0));
    return sol;
}

} // namespace memgame
