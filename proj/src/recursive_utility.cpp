#include "memgame/recursive_utility.hpp"

#include <algorithm>
#include <cmath>

#include "memgame/errors.hpp"

namespace memgame {

double StepFunction::at(double t) const {
    if (values.size() == 1) return values[0];
    const double width = horizon / static_cast<double>(values.size());
    auto bin = static_cast<std::size_t>(t / width);
    if (bin >= values.size()) bin = values.size() - 1;
    return values[bin];
}

double StepFunction::integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (values.size() == 1) return values[0] * t;
    const double width = horizon / static_cast<double>(values.size());
    double acc = 0.0;
    for (std::size_t b = 0; b < values.size(); ++b) {
        const double lo = width * static_cast<double>(b);
        if (lo >= t) break;
        const double hi = std::min(t, lo + width);
        acc += values[b] * (hi - lo);
    }
    if (t > horizon) acc += values.back() * (t - horizon);
    return acc;
}

std::vector<double> StepFunction::breakpoints() const {
    std::vector<double> pts;
    const double width = horizon / static_cast<double>(values.size());
    for (std::size_t b = 1; b < values.size(); ++b)
        pts.push_back(width * static_cast<double>(b));
    return pts;
}

void RecursiveUtilityParams::validate() const {
    if (kappa[0] != 0.0 || kappa[1] != 0.0)
        throw ConfigError("noisy-memory weight kappa must be 0 in this model");
    if (!(x0 > 0.0)) throw ConfigError("initial wealth must be positive");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (!(c_min > 0.0) || !(c_max > c_min))
        throw ConfigError("consumption bounds must satisfy 0 < c_min < c_max");
    for (int i = 0; i < 2; ++i)
        if (delta[i] < 0.0 || delta[i] > horizon)
            throw ConfigError("delays must lie in [0, horizon]");
    jumps.validate();
}

double closed_form_lambda(const RecursiveUtilityParams& params, int player, double t) {
    return std::exp(params.alpha[player].integral(t));
}

namespace {

// int_a^b lambda_i(s) weight(s) ds with lambda piecewise exponential and
// weight piecewise constant: closed form per merged piece.
double integrate_lambda_weighted(const RecursiveUtilityParams& params, int player,
                                 double a, double b, const StepFunction* weight) {
    if (b <= a) return 0.0;
    std::vector<double> cuts{a, b};
    for (double c : params.alpha[player].breakpoints())
        if (c > a && c < b) cuts.push_back(c);
    if (weight)
        for (double c : weight->breakpoints())
            if (c > a && c < b) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        if (hi <= lo) continue;
        const double mid = 0.5 * (lo + hi);
        const double al = params.alpha[player].at(mid);
        const double w = weight ? weight->at(mid) : 1.0;
        const double lam_lo = closed_form_lambda(params, player, lo);
        const double len = hi - lo;
        const double piece = std::abs(al) > 1e-14
                                 ? lam_lo * (std::exp(al * len) - 1.0) / al
                                 : lam_lo * len;
        acc += w * piece;
    }
    return acc;
}

} // namespace

double consumption_denominator(const RecursiveUtilityParams& params, int player,
                               double t) {
    const double T = params.horizon;
    const double delta = params.delta[player];
    // int_t^T lambda(s) ds + int_{t+delta}^T lambda(v) eta(v) dv
    double d = integrate_lambda_weighted(params, player, t, T, nullptr);
    const double lo = std::min(t + delta, T);
    d += integrate_lambda_weighted(params, player, lo, T, &params.eta[player]);
    return d;
}

double closed_form_consumption(const RecursiveUtilityParams& params, int player,
                               double t, double min_gap) {
    if (t > params.horizon - min_gap || t > params.horizon - 1e-12)
        throw HorizonBoundary("consumption rate undefined this close to the horizon");
    return closed_form_lambda(params, player, t) /
           consumption_denominator(params, player, t);
}

GameModel build_recursive_utility_game(const RecursiveUtilityParams& params,
                                       const TimeGrid& grid) {
    params.validate();

    GameModel model;
    model.forward.x0 = params.x0;
    model.forward.jump_spec = params.jumps;
    const StepFunction mu = params.mu;
    const StepFunction sigma = params.sigma;
    model.forward.drift = [mu](const FlowArgs& a) {
        return a.x * (mu.at(a.t) - a.u[0] - a.u[1]);
    };
    model.forward.diffusion = [sigma](const FlowArgs& a) {
        return a.x * sigma.at(a.t);
    };
    model.forward.jump_coef = [](const FlowArgs& a, double zeta) { return a.x * zeta; };
    // the market is strictly multiplicative and the equilibrium consumption
    // rate grows like 1/(T-t): stepping ln X keeps the state positive where
    // plain Euler would cross zero in the last few steps
    model.forward.scheme = ModelSpec::Scheme::log_euler;

    for (int i = 0; i < 2; ++i) {
        PlayerSpec& ps = model.players[i];
        const StepFunction alpha = params.alpha[i];
        const StepFunction eta = params.eta[i];

        // per-step tables: the evaluators run once per path and step, so the
        // exp(int alpha) discount is not recomputed inside the hot loops
        const double dt = grid.dt;
        const std::size_t n = grid.n_steps;
        auto discount = std::make_shared<std::vector<double>>(n + 1);
        auto eta_at = std::make_shared<std::vector<double>>(n + 1);
        auto alpha_at = std::make_shared<std::vector<double>>(n + 1);
        for (std::size_t s = 0; s <= n; ++s) {
            const double t = grid.time(s);
            (*discount)[s] = std::exp(alpha.integral(t));
            (*eta_at)[s] = eta.at(t);
            (*alpha_at)[s] = alpha.at(t);
        }
        auto step_of = [dt, n](double t) {
            auto s = static_cast<std::size_t>(std::llround(t / dt));
            return s > n ? n : s;
        };

        auto g_formula = [alpha_at, eta_at, step_of, i](double t, double x,
                                                        double y_own, double w,
                                                        double u_own) {
            if (!(y_own > 0.0))
                throw DomainError("ln(Y_" + std::to_string(i + 1) +
                                  ") undefined: delayed state not positive");
            const double cx = u_own * x;
            if (!(cx > 0.0))
                throw DomainError("ln(c X) undefined: consumption value not positive");
            const std::size_t s = step_of(t);
            return (*alpha_at)[s] * w + (*eta_at)[s] * std::log(y_own) + std::log(cx);
        };

        ps.bsde.driver = [g_formula, i](const DriverArgs& a) {
            return g_formula(a.flow.t, a.flow.x, a.flow.y[i], a.w, a.flow.u[i]);
        };
        ps.bsde.terminal = [](double) { return 0.0; };

        // J_i = W_i(0); the driver is linear in w with deterministic weight, so
        //   W_i(0) = E[ int_0^T exp(int_0^t alpha) (eta ln Y_i + ln(c_i X)) dt ]
        // and the trapezoid estimate of the right-hand side carries none of the
        // left-endpoint quadrature bias of the backward recursion. The W(0)
        // route stays available through the bsde spec above.
        ps.performance.running_reward = [discount, eta_at, step_of, i](const FlowArgs& a) {
            if (!(a.y[i] > 0.0) || !(a.u[i] * a.x > 0.0))
                throw DomainError("recursive utility integrand left its domain");
            const std::size_t s = step_of(a.t);
            return (*discount)[s] *
                   ((*eta_at)[s] * std::log(a.y[i]) + std::log(a.u[i] * a.x));
        };

        HamiltonianSpec& h = ps.hamiltonian;
        h.player = i;
        h.driver = [g_formula, i](const AdjointState& st) {
            return g_formula(st.t, st.x, st.y[i], st.w, st.u[i]);
        };
        h.drift = model.forward.drift;
        h.diffusion = model.forward.diffusion;
        h.jump_coef = model.forward.jump_coef;
        h.jump_spec = params.jumps;

        const JumpSpec jumps = params.jumps;
        h.analytic[HArg::x] = [mu, sigma, jumps](const AdjointState& st) {
            double v = st.lambda / st.x + st.p * (mu.at(st.t) - st.u[0] - st.u[1]) +
                       st.q * sigma.at(st.t);
            for (std::size_t j = 0; j < st.r.size() && j < jumps.n_marks(); ++j)
                v += st.r[j] * jumps.mark_values[j] * jumps.nu(j);
            return v;
        };
        h.analytic[HArg::y_own] = [eta, i](const AdjointState& st) {
            return st.lambda * eta.at(st.t) / st.y[i];
        };
        h.analytic[HArg::m_own] = [](const AdjointState&) { return 0.0; };
        h.analytic[HArg::w] = [alpha](const AdjointState& st) {
            return st.lambda * alpha.at(st.t);
        };
        h.analytic[HArg::z] = [](const AdjointState&) { return 0.0; };
        h.analytic[HArg::u_own] = [i](const AdjointState& st) {
            return st.lambda / st.u[i] - st.p * st.x;
        };
        h.analytic_k = [](const AdjointState&, std::size_t) { return 0.0; };

        ps.adjoint_terminal.psi_prime = [](double) { return 1.0; };

        // The adjoint BSDE drift carries -(c1 + c2), which blows up like
        // 2/(T-t) at the equilibrium: the explicit backward recursion loses
        // order-one accuracy in the last steps. Its integrating-factor
        // solution X(t) p(t) = E[int_t^T (lambda + advanced eta term) ds|F_t]
        // is exact in Gamma = X/x0, so solve that instead; q follows from the
        // diffusion loading of D(t)/X.
        const std::size_t di =
            grid.delay_steps.size() > static_cast<std::size_t>(i)
                ? grid.delay_steps[i]
                : 0;
        const double x0 = params.x0;
        ps.adjoint_p_solver = [discount, eta_at, sigma, di, x0, n](
                                  const PathBundle& paths, const PathMatrix&,
                                  const NoiseBatch& noise, const SolverConfig& config) {
            const TimeGrid& g = paths.grid;
            PathMatrix gamma(paths.n_paths, n + 1);
            PathMatrix source(paths.n_paths, n + 1);
            parallel_for(config.policy, paths.n_paths,
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t p = lo; p < hi; ++p)
                                 for (std::size_t s = 0; s <= n; ++s) {
                                     gamma(p, s) = paths.X(p, s) / x0;
                                     double w = (*discount)[s];
                                     if (di > 0 && s + di <= n - 1)
                                         w += (*discount)[s + di] * (*eta_at)[s + di];
                                     source(p, s) = w / paths.X(p, s);
                                 }
                         });
            BsdeSolution sol = solve_linear_bsde_gamma(
                gamma, source, g, config.basis, config.policy, /*trapezoid=*/true);
            sol.Z = PathMatrix(paths.n_paths, n);
            parallel_for(config.policy, paths.n_paths,
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t p = lo; p < hi; ++p)
                                 for (std::size_t s = 0; s < n; ++s)
                                     sol.Z(p, s) = -sigma.at(g.time(s)) * sol.W(p, s);
                         });
            (void)noise;
            return sol;
        };

        ps.control_lo = params.c_min;
        ps.control_hi = params.c_max;
    }
    return model;
}

ControlProcess closed_form_control(const RecursiveUtilityParams& params, int player,
                                   const TimeGrid& grid) {
    std::vector<double> values(grid.n_steps);
    for (std::size_t s = 0; s < grid.n_steps; ++s) {
        const double c = closed_form_consumption(params, player, grid.time(s));
        values[s] = std::clamp(c, params.c_min, params.c_max);
    }
    return ControlProcess::piecewise(std::move(values), player);
}

BenchmarkReport run_benchmark(const RecursiveUtilityParams& params,
                              const BenchmarkConfig& config) {
    params.validate();
    const TimeGrid grid = make_grid(params.horizon, config.n_steps,
                                    {params.delta[0], params.delta[1]});
    const NoiseBatch noise =
        sample_noise(grid, config.n_paths, config.seed, params.jumps, 0, config.policy);
    GameModel model = build_recursive_utility_game(params, grid);

    SolverConfig solver;
    solver.basis = RegressionBasis::polynomial(2);
    solver.regressors.use_memory = false;   // no Lambda dependence in this model
    solver.regressors.use_inverse_x = true; // the adjoint behaves like D(t)/X
    solver.search_basis = RegressionBasis::polynomial(2);
    solver.search_regressors.use_x = true;
    solver.search_regressors.use_y = false;
    solver.search_regressors.use_memory = false;
    solver.search_paths = config.search_paths;
    solver.derivative_paths = config.derivative_paths;
    solver.policy = config.policy;

    // candidate pair: the closed-form equilibrium, optionally scaled to build
    // a negative control
    ControlPair candidates;
    for (int i = 0; i < 2; ++i) {
        candidates[i] = closed_form_control(params, i, grid);
        for (double& v : candidates[i].values)
            v = std::clamp(v * config.candidate_scale[i], params.c_min, params.c_max);
    }

    BenchmarkReport report;

    // families around the candidate's bin profile
    std::array<ControlFamily, 2> families;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> initial(config.n_bins);
        std::vector<double> lo(config.n_bins), hi(config.n_bins);
        for (std::size_t b = 0; b < config.n_bins; ++b) {
            const std::size_t mid_step =
                (b * grid.n_steps + grid.n_steps / 2) / config.n_bins;
            const double v = candidates[i].values[mid_step];
            initial[b] = v;
            lo[b] = std::max(params.c_min, v / 4.0);
            hi[b] = std::min(params.c_max, v * 4.0);
        }
        families[i] = ControlFamily::piecewise_bins(grid, config.n_bins, params.c_min,
                                                    params.c_max, initial, i);
        families[i].lo = lo;
        families[i].hi = hi;
    }

    report.certificate = certify_nash(model, candidates, families, noise, solver,
                                      config.tolerances);

    // best response vs the closed form at the bin midpoints
    report.pass_best_response = true;
    for (std::size_t b = 0; b < config.n_bins; ++b)
        report.bin_mid_t.push_back(params.horizon *
                                   (static_cast<double>(b) + 0.5) /
                                   static_cast<double>(config.n_bins));
    for (int i = 0; i < 2; ++i) {
        for (std::size_t b = 0; b < config.n_bins; ++b) {
            const double cstar =
                closed_form_consumption(params, i, report.bin_mid_t[b]);
            const double br = report.certificate.players[i].best_response_params[b];
            const double rel = std::abs(br - cstar) / std::abs(cstar);
            report.c_star_mid[i].push_back(cstar);
            report.br_values[i].push_back(br);
            report.br_rel_err[i].push_back(rel);
            if (rel > config.br_rel_tol) report.pass_best_response = false;
        }
    }

    // x Gamma(t) = X(t): Gamma is the same scheme started at 1 on the same noise
    PathBundle bundle =
        simulate_forward(model.forward, candidates, noise, config.policy);
    ModelSpec gamma_model = model.forward;
    gamma_model.x0 = 1.0;
    PathBundle gamma =
        simulate_forward(gamma_model, candidates, noise, config.policy);
    struct MaxRel {
        double v = 0.0;
    };
    MaxRel mr = block_reduce<MaxRel>(
        config.policy, bundle.n_paths,
        [&](MaxRel& m, std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p)
                for (std::size_t s = 0; s <= grid.n_steps; ++s) {
                    const double x = bundle.X(p, s);
                    const double g = params.x0 * gamma.X(p, s);
                    m.v = std::max(m.v, std::abs(x - g) / (std::abs(x) + 1e-12));
                }
        },
        [](MaxRel& t, const MaxRel& p) { t.v = std::max(t.v, p.v); });
    report.gamma_identity_max_rel = mr.v;
    report.pass_gamma = mr.v <= 1e-10;

    // X(t) p_i(t) against the quadrature of the closed-form representation
    report.pass_xp = true;
    for (int k = 0; k < 10; ++k)
        report.xp_times.push_back(params.horizon * static_cast<double>(k) / 10.0);
    for (int i = 0; i < 2; ++i) {
        const PlayerSpec& ps = model.players[i];
        BsdeSolution bsde = solve_bsde_lsmc(ps.bsde, bundle, noise, solver.basis,
                                            config.policy, solver.regressors);
        PathMatrix lambda = solve_lambda_forward(ps.hamiltonian, ps.adjoint_terminal,
                                                 bundle, bsde, noise, config.policy);
        BsdeSolution p_solution =
            ps.adjoint_p_solver
                ? ps.adjoint_p_solver(bundle, lambda, noise, solver)
                : solve_adjoint_triple(ps.hamiltonian, ps.adjoint_terminal, bundle,
                                       bsde, lambda, noise, solver.basis,
                                       config.policy, solver.regressors)
                      .pqr;
        for (double t : report.xp_times) {
            const auto s = static_cast<std::size_t>(std::llround(t / grid.dt));
            const double numeric =
                block_sum(config.policy, bundle.n_paths,
                          [&](std::size_t p) {
                              return bundle.X(p, s) * p_solution.W(p, s);
                          }) /
                static_cast<double>(bundle.n_paths);
            const double quad = consumption_denominator(params, i, t);
            const double rel = std::abs(numeric - quad) / std::abs(quad);
            report.xp_numeric[i].push_back(numeric);
            report.xp_quadrature[i].push_back(quad);
            report.xp_rel_err[i].push_back(rel);
            if (rel > config.xp_rel_tol) report.pass_xp = false;
        }
    }
    return report;
}

} // namespace memgame
