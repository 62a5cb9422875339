#include "memgame/malliavin.hpp"

#include <cmath>

#include "memgame/errors.hpp"

namespace memgame {

namespace {
std::size_t step_of(double t0, const TimeGrid& grid) {
    return static_cast<std::size_t>(std::llround(t0 / grid.dt));
}
} // namespace

WienerFunctional WienerFunctional::constant(double c) {
    WienerFunctional f;
    f.name = "const(" + std::to_string(c) + ")";
    f.value = [c](const std::vector<double>&, const TimeGrid&) { return c; };
    f.projected_derivative = [](const std::vector<double>&, const TimeGrid&,
                                std::size_t) { return 0.0; };
    f.analytic_mean = c;
    f.analytic_second_moment = c * c;
    return f;
}

WienerFunctional WienerFunctional::brownian(double t0) {
    WienerFunctional f;
    f.name = "B(" + std::to_string(t0) + ")";
    f.value = [t0](const std::vector<double>& b, const TimeGrid& g) {
        return b[step_of(t0, g)];
    };
    // D_t B(t0) = 1_{t <= t0}
    f.projected_derivative = [t0](const std::vector<double>&, const TimeGrid& g,
                                  std::size_t s) {
        return s < step_of(t0, g) ? 1.0 : 0.0;
    };
    f.analytic_mean = 0.0;
    f.analytic_second_moment = t0;
    return f;
}

WienerFunctional WienerFunctional::brownian_squared(double t0) {
    WienerFunctional f;
    f.name = "B(" + std::to_string(t0) + ")^2";
    f.value = [t0](const std::vector<double>& b, const TimeGrid& g) {
        const double v = b[step_of(t0, g)];
        return v * v;
    };
    // E[D_t B(t0)^2 | F_t] = 2 B(t) on t <= t0
    f.projected_derivative = [t0](const std::vector<double>& b, const TimeGrid& g,
                                  std::size_t s) {
        return s < step_of(t0, g) ? 2.0 * b[s] : 0.0;
    };
    f.analytic_mean = t0;
    f.analytic_second_moment = 3.0 * t0 * t0;
    return f;
}

WienerFunctional WienerFunctional::brownian_cubed(double t0) {
    WienerFunctional f;
    f.name = "B(" + std::to_string(t0) + ")^3";
    f.value = [t0](const std::vector<double>& b, const TimeGrid& g) {
        const double v = b[step_of(t0, g)];
        return v * v * v;
    };
    // E[D_t B(t0)^3 | F_t] = 3 E[B(t0)^2 | F_t] = 3 (B(t)^2 + (t0 - t))
    f.projected_derivative = [t0](const std::vector<double>& b, const TimeGrid& g,
                                  std::size_t s) {
        if (s >= step_of(t0, g)) return 0.0;
        const double bt = b[s];
        return 3.0 * (bt * bt + (t0 - g.time(s)));
    };
    f.analytic_mean = 0.0;
    f.analytic_second_moment = 15.0 * t0 * t0 * t0;
    return f;
}

WienerFunctional WienerFunctional::increment(double t0, double t1) {
    WienerFunctional f;
    f.name = "B(" + std::to_string(t1) + ")-B(" + std::to_string(t0) + ")";
    f.value = [t0, t1](const std::vector<double>& b, const TimeGrid& g) {
        return b[step_of(t1, g)] - b[step_of(t0, g)];
    };
    f.projected_derivative = [t0, t1](const std::vector<double>&, const TimeGrid& g,
                                      std::size_t s) {
        return (s >= step_of(t0, g) && s < step_of(t1, g)) ? 1.0 : 0.0;
    };
    f.analytic_mean = 0.0;
    f.analytic_second_moment = t1 - t0;
    return f;
}

WienerFunctional WienerFunctional::product(double t0, double t1) {
    WienerFunctional f;
    f.name = "B(" + std::to_string(t0) + ")B(" + std::to_string(t1) + ")";
    f.value = [t0, t1](const std::vector<double>& b, const TimeGrid& g) {
        return b[step_of(t0, g)] * b[step_of(t1, g)];
    };
    // Leibniz: D_t(B(t0)B(t1)) = B(t1) 1_{t<=t0} + B(t0) 1_{t<=t1}; projecting
    // gives 2B(t) before t0 and B(t0) on (t0, t1]
    f.projected_derivative = [t0, t1](const std::vector<double>& b, const TimeGrid& g,
                                      std::size_t s) {
        const std::size_t s0 = step_of(t0, g), s1 = step_of(t1, g);
        if (s < s0) return 2.0 * b[s];
        if (s < s1) return b[s0];
        return 0.0;
    };
    f.analytic_mean = std::min(t0, t1);
    // E[B(t0)^2 B(t1)^2] = t0 t1 + 2 t0^2 for t0 <= t1
    f.analytic_second_moment = t0 * t1 + 2.0 * t0 * t0;
    return f;
}

WienerFunctional WienerFunctional::combine(double a, const WienerFunctional& f,
                                           double b, const WienerFunctional& g) {
    WienerFunctional h;
    h.name = std::to_string(a) + "*" + f.name + "+" + std::to_string(b) + "*" + g.name;
    auto fv = f.value, gv = g.value;
    h.value = [a, b, fv, gv](const std::vector<double>& lv, const TimeGrid& grid) {
        return a * fv(lv, grid) + b * gv(lv, grid);
    };
    auto fd = f.projected_derivative, gd = g.projected_derivative;
    h.projected_derivative = [a, b, fd, gd](const std::vector<double>& lv,
                                            const TimeGrid& grid, std::size_t s) {
        return a * fd(lv, grid, s) + b * gd(lv, grid, s);
    };
    h.analytic_mean = a * f.analytic_mean + b * g.analytic_mean;
    // no cross moment in general; keep a conservative scale
    h.analytic_second_moment =
        2.0 * (a * a * f.analytic_second_moment + b * b * g.analytic_second_moment);
    h.has_derivative = f.has_derivative && g.has_derivative;
    return h;
}

namespace {

struct TwoSideSums {
    double sum_l = 0.0, sumsq_l = 0.0;
    double sum_r = 0.0, sumsq_r = 0.0;
};

// Streams paths in fixed blocks; per_path(levels, dB row) returns (lhs, rhs)
// samples. Deterministic:the block partition depends only on block_size.
template <typename PerPath>
TwoSideSums stream_two_sided(const TimeGrid& grid, const IdentityCheckConfig& cfg,
                             PerPath&& per_path) {
    return block_reduce<TwoSideSums>(
        cfg.policy, cfg.n_paths,
        [&](TwoSideSums& acc, std::size_t lo, std::size_t hi) {
            NoiseBatch block =
                sample_noise(grid, hi - lo, cfg.seed, JumpSpec::none(), lo,
                             ExecPolicy::serial());
            std::vector<double> levels;
            for (std::size_t p = 0; p < block.n_paths; ++p) {
                block.brownian_path(p, levels);
                const auto [l, r] = per_path(levels, block.dB.row(p));
                acc.sum_l += l;
                acc.sumsq_l += l * l;
                acc.sum_r += r;
                acc.sumsq_r += r * r;
            }
        },
        [](TwoSideSums& t, const TwoSideSums& p) {
            t.sum_l += p.sum_l;
            t.sumsq_l += p.sumsq_l;
            t.sum_r += p.sum_r;
            t.sumsq_r += p.sumsq_r;
        });
}

IdentityReport finish_report(const std::string& fname, const std::string& check,
                             const TwoSideSums& sums, const TimeGrid& grid,
                             const IdentityCheckConfig& cfg) {
    const double n = static_cast<double>(cfg.n_paths);
    IdentityReport rep;
    rep.functional = fname;
    rep.check = check;
    rep.lhs = sums.sum_l / n;
    rep.rhs = sums.sum_r / n;
    const double var_l = std::max(0.0, sums.sumsq_l / n - rep.lhs * rep.lhs);
    const double var_r = std::max(0.0, sums.sumsq_r / n - rep.rhs * rep.rhs);
    rep.se_lhs = std::sqrt(var_l / n);
    rep.se_rhs = std::sqrt(var_r / n);
    const double scale = std::max({1.0, std::abs(rep.lhs), std::abs(rep.rhs)});
    rep.tolerance = 3.0 * (rep.se_lhs + rep.se_rhs) +
                    cfg.discretization_constant * grid.dt * scale;
    rep.pass = std::abs(rep.lhs - rep.rhs) <= rep.tolerance;
    return rep;
}

void require_derivative(const WienerFunctional& f) {
    if (!f.has_derivative || !f.projected_derivative)
        throw CatalogMiss("no closed-form Malliavin derivative for " + f.name);
}

} // namespace

IdentityReport check_duality(const WienerFunctional& f, const AdaptedProcess& phi,
                             const TimeGrid& grid, const IdentityCheckConfig& cfg) {
    require_derivative(f);
    TwoSideSums sums = stream_two_sided(
        grid, cfg, [&](const std::vector<double>& levels, const double* db) {
            double stoch_int = 0.0;
            double time_int = 0.0;
            for (std::size_t s = 0; s < grid.n_steps; ++s) {
                const double ph = phi(levels, grid, s);
                stoch_int += ph * db[s];
                time_int += f.projected_derivative(levels, grid, s) * ph * grid.dt;
            }
            return std::pair<double, double>(f.value(levels, grid) * stoch_int,
                                             time_int);
        });
    return finish_report(f.name, "duality", sums, grid, cfg);
}

IdentityReport check_clark_ocone(const WienerFunctional& f, const TimeGrid& grid,
                                 const IdentityCheckConfig& cfg) {
    require_derivative(f);
    TwoSideSums sums = stream_two_sided(
        grid, cfg, [&](const std::vector<double>& levels, const double* db) {
            double reconstruction = f.analytic_mean;
            for (std::size_t s = 0; s < grid.n_steps; ++s)
                reconstruction += f.projected_derivative(levels, grid, s) * db[s];
            const double err = reconstruction - f.value(levels, grid);
            return std::pair<double, double>(err * err, 0.0);
        });
    IdentityReport rep = finish_report(f.name, "clark-ocone", sums, grid, cfg);
    // tolerance scale for the MSE follows the functional's second moment
    const double scale = std::max(1.0, f.analytic_second_moment);
    rep.tolerance = 3.0 * rep.se_lhs + cfg.discretization_constant * grid.dt * scale;
    rep.pass = rep.lhs <= rep.tolerance;
    return rep;
}

IdentityReport check_variance_identity(const WienerFunctional& f, const TimeGrid& grid,
                                       const IdentityCheckConfig& cfg) {
    require_derivative(f);
    const double mean = f.analytic_mean;
    TwoSideSums sums = stream_two_sided(
        grid, cfg, [&](const std::vector<double>& levels, const double*) {
            double energy = 0.0;
            for (std::size_t s = 0; s < grid.n_steps; ++s) {
                const double d = f.projected_derivative(levels, grid, s);
                energy += d * d * grid.dt;
            }
            const double centered = f.value(levels, grid) - mean;
            return std::pair<double, double>(energy, centered * centered);
        });
    return finish_report(f.name, "variance", sums, grid, cfg);
}

std::vector<double> projected_derivative_regression(
    const std::vector<double>& f_values, const NoiseBatch& noise, std::size_t step,
    const RegressionBasis& basis, const ExecPolicy& policy,
    const std::vector<const double*>& regressors) {
    const std::size_t n_paths = noise.n_paths;
    std::vector<double> target(n_paths);
    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p)
            target[p] = f_values[p] * noise.dB(p, step) / noise.grid.dt;
    });

    std::vector<double> level_col;
    std::vector<const double*> vars = regressors;
    if (vars.empty()) {
        level_col.resize(n_paths);
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> levels;
            for (std::size_t p = lo; p < hi; ++p) {
                noise.brownian_path(p, levels);
                level_col[p] = levels[step];
            }
        });
        vars.push_back(level_col.data());
    }

    std::vector<double> fitted(n_paths);
    // at t = 0 the sigma-field is trivial: plain mean
    bool degenerate = step == 0;
    if (!degenerate) {
        MeanVar mv = block_mean_var(policy, n_paths,
                                    [&](std::size_t p) { return vars[0][p]; });
        degenerate = std::sqrt(mv.variance) <= 1e-12 * (1.0 + std::abs(mv.mean));
    }
    if (degenerate) {
        const double m =
            block_sum(policy, n_paths, [&](std::size_t p) { return target[p]; }) /
            static_cast<double>(n_paths);
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) fitted[p] = m;
        });
        return fitted;
    }
    StepRegression reg(vars, n_paths, basis, policy);
    reg.fit(target.data(), fitted.data());
    return fitted;
}

} // namespace memgame
