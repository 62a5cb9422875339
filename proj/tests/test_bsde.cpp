#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "memgame/bsde.hpp"
#include "memgame/errors.hpp"

using namespace memgame;

namespace {

ControlPair zero_controls(std::size_t n_steps) {
    return {ControlProcess::constant(0.0, n_steps, 0),
            ControlProcess::constant(0.0, n_steps, 1)};
}

PathBundle constant_paths(const TimeGrid& g, const NoiseBatch& noise, double x0) {
    ModelSpec m;
    m.x0 = x0;
    m.drift = [](const FlowArgs&) { return 0.0; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    return simulate_forward(m, zero_controls(g.n_steps), noise);
}

PathBundle brownian_paths(const TimeGrid& g, const NoiseBatch& noise) {
    ModelSpec m;
    m.x0 = 0.0;
    m.drift = [](const FlowArgs&) { return 0.0; };
    m.diffusion = [](const FlowArgs&) { return 1.0; };
    return simulate_forward(m, zero_controls(g.n_steps), noise);
}

} // namespace

TEST_CASE("linear driver reproduces the deterministic exponential solution") {
    TimeGrid g = make_grid(1.0, 200, {});
    NoiseBatch noise = sample_noise(g, 20000, 5);
    PathBundle paths = constant_paths(g, noise, 1.0);

    DriverSpec spec;
    spec.driver = [](const DriverArgs& a) { return a.w + 1.0; };
    spec.terminal = [](double) { return 0.0; };
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2));

    CHECK(sol.w0() == doctest::Approx(std::exp(1.0) - 1.0).epsilon(0.02));
    // terminal exact, Z indistinguishable from zero
    for (std::size_t p = 0; p < 50; ++p) CHECK(sol.W(p, g.n_steps) == 0.0);
    double zmax = 0.0;
    for (std::size_t s = 0; s < g.n_steps; ++s)
        zmax = std::max(zmax, std::abs(sol.Z(0, s)));
    CHECK(zmax < 0.2);
}

TEST_CASE("terminal Brownian value gives the martingale representation") {
    TimeGrid g = make_grid(1.0, 50, {});
    NoiseBatch noise = sample_noise(g, 40000, 19);
    PathBundle paths = brownian_paths(g, noise);

    DriverSpec spec;
    spec.terminal = [](double x) { return x; };
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2));

    // W(t) tracks B(t): mean-square difference small
    for (std::size_t s = 0; s < g.n_steps; s += 10) {
        MeanVar mv = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                    [&](std::size_t p) {
                                        const double d = sol.W(p, s) - paths.X(p, s);
                                        return d * d;
                                    });
        CHECK(mv.mean < 5e-3);
    }
    // Z within 5% of 1 uniformly over the steps
    for (std::size_t s = 0; s < g.n_steps; ++s) {
        MeanVar mz = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                    [&](std::size_t p) { return sol.Z(p, s); });
        CHECK(std::abs(mz.mean - 1.0) < 0.05);
    }
}

TEST_CASE("zero data returns the zero solution exactly") {
    TimeGrid g = make_grid(1.0, 30, {});
    NoiseBatch noise = sample_noise(g, 2000, 3);
    PathBundle paths = brownian_paths(g, noise);

    DriverSpec spec;
    spec.terminal = [](double) { return 0.0; };
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2));
    for (std::size_t p = 0; p < paths.n_paths; p += 97)
        for (std::size_t s = 0; s <= g.n_steps; ++s) {
            CHECK(sol.W(p, s) == 0.0);
            if (s < g.n_steps) CHECK(sol.Z(p, s) == 0.0);
        }
}

TEST_CASE("tower property: chained and direct projections agree") {
    TimeGrid g = make_grid(1.0, 40, {});
    NoiseBatch noise = sample_noise(g, 30000, 23);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle paths = simulate_forward(m, zero_controls(g.n_steps), noise);

    DriverSpec spec;
    spec.terminal = [](double x) { return x; };
    RegressionBasis basis = RegressionBasis::polynomial(2);
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, basis);

    // direct projection of the terminal payoff on F_s
    std::vector<double> terminal(paths.n_paths), direct(paths.n_paths);
    for (std::size_t p = 0; p < paths.n_paths; ++p)
        terminal[p] = paths.X(p, g.n_steps);
    MeanVar sd_h = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                  [&](std::size_t p) { return terminal[p]; });

    for (std::size_t s : {10u, 20u, 30u}) {
        PathStateConditional cs(paths, s, basis, RegressorSet{}, ExecPolicy::parallel());
        cs.fit(terminal.data(), direct.data());
        MeanVar diff = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                      [&](std::size_t p) {
                                          const double d = sol.W(p, s) - direct[p];
                                          return d * d;
                                      });
        CHECK(std::sqrt(diff.mean) < 0.02 * std::sqrt(sd_h.variance));
    }
}

TEST_CASE("a larger driver constant raises the solution") {
    TimeGrid g = make_grid(1.0, 100, {});
    NoiseBatch noise = sample_noise(g, 5000, 7);
    PathBundle paths = constant_paths(g, noise, 1.0);

    auto solve_with = [&](double b) {
        DriverSpec spec;
        spec.driver = [b](const DriverArgs& a) { return a.w + b; };
        spec.terminal = [](double) { return 0.0; };
        return solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2)).w0();
    };
    CHECK(solve_with(2.0) > solve_with(1.0));
}

TEST_CASE("jump terminal recovers the mark loading") {
    TimeGrid g = make_grid(1.0, 50, {});
    JumpSpec jumps;
    jumps.intensity = 5.0;
    jumps.mark_values = {0.5};
    jumps.mark_probs = {1.0};
    NoiseBatch noise = sample_noise(g, 40000, 29, jumps);

    ModelSpec m;
    m.x0 = 0.0;
    m.drift = [](const FlowArgs&) { return 0.0; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    m.jump_coef = [](const FlowArgs&, double zeta) { return zeta; };
    m.jump_spec = jumps;
    PathBundle paths = simulate_forward(m, zero_controls(g.n_steps), noise);

    DriverSpec spec;
    spec.terminal = [](double x) { return x; };
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2));
    REQUIRE(sol.K.size() == 1);
    // K(t, zeta) = zeta = 0.5 for the compensated-jump martingale
    for (std::size_t s = 5; s < g.n_steps; s += 11) {
        MeanVar mk = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                    [&](std::size_t p) { return sol.K[0](p, s); });
        CHECK(mk.mean == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("insufficient paths for the basis dimension are rejected") {
    TimeGrid g = make_grid(1.0, 10, {});
    NoiseBatch noise = sample_noise(g, 20, 1);
    PathBundle paths = brownian_paths(g, noise);
    DriverSpec spec;
    spec.terminal = [](double x) { return x; };
    CHECK_THROWS_AS(
        solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(2)),
        InsufficientPaths);
}

TEST_CASE("integrating-factor representation: unit source gives T - t") {
    TimeGrid g = make_grid(1.0, 100, {});
    NoiseBatch noise = sample_noise(g, 4000, 31);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle paths = simulate_forward(m, zero_controls(g.n_steps), noise);

    // Gamma = X / x0, source = lambda / X with lambda == 1: the weighted
    // integrand collapses to a constant and X p is deterministic
    PathMatrix gamma(paths.n_paths, g.n_steps + 1);
    PathMatrix source(paths.n_paths, g.n_steps);
    for (std::size_t p = 0; p < paths.n_paths; ++p) {
        for (std::size_t s = 0; s <= g.n_steps; ++s) gamma(p, s) = paths.X(p, s);
        for (std::size_t s = 0; s < g.n_steps; ++s) source(p, s) = 1.0 / paths.X(p, s);
    }
    BsdeSolution sol = solve_linear_bsde_gamma(gamma, source, g,
                                               RegressionBasis::polynomial(2));
    for (std::size_t s = 0; s <= g.n_steps; s += 10) {
        const double expected = 1.0 - g.time(s);
        for (std::size_t p = 0; p < paths.n_paths; p += 501)
            CHECK(paths.X(p, s) * sol.W(p, s) ==
                  doctest::Approx(expected).epsilon(2e-5));
    }
}

TEST_CASE("integrating-factor representation: delayed weight adds its window") {
    // alpha = 0, eta = 1, delta = 0.5: X(0) p(0) = 1 + 0.5
    TimeGrid g = make_grid(1.0, 100, {0.5});
    NoiseBatch noise = sample_noise(g, 4000, 37);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle paths = simulate_forward(m, zero_controls(g.n_steps), noise);

    const std::size_t d = g.delay_steps[0];
    PathMatrix gamma(paths.n_paths, g.n_steps + 1);
    PathMatrix source(paths.n_paths, g.n_steps);
    for (std::size_t p = 0; p < paths.n_paths; ++p) {
        for (std::size_t s = 0; s <= g.n_steps; ++s) gamma(p, s) = paths.X(p, s);
        for (std::size_t s = 0; s < g.n_steps; ++s) {
            const double advanced = s + d <= g.n_steps - 1 ? 1.0 : 0.0;
            source(p, s) = (1.0 + advanced) / paths.X(p, s);
        }
    }
    BsdeSolution sol = solve_linear_bsde_gamma(gamma, source, g,
                                               RegressionBasis::polynomial(2));
    CHECK(paths.X(0, 0) * sol.W(0, 0) == doctest::Approx(1.5).epsilon(2e-5));
}

TEST_CASE("integrating-factor representation: zero source gives zero") {
    TimeGrid g = make_grid(1.0, 20, {});
    NoiseBatch noise = sample_noise(g, 500, 2);
    PathBundle paths = brownian_paths(g, noise);
    PathMatrix gamma(paths.n_paths, g.n_steps + 1, 1.0);
    std::vector<double> source(g.n_steps, 0.0);
    BsdeSolution sol = solve_linear_bsde_gamma(gamma, source, g,
                                               RegressionBasis::polynomial(1));
    for (std::size_t s = 0; s <= g.n_steps; s += 5) CHECK(sol.W(0, s) == 0.0);
}

TEST_CASE("driver slope sampling flags a stiff driver") {
    TimeGrid g = make_grid(1.0, 10, {});
    NoiseBatch noise = sample_noise(g, 200, 41);
    PathBundle paths = constant_paths(g, noise, 1.0);
    DriverSpec spec;
    spec.driver = [](const DriverArgs& a) { return 1e4 * a.w; };
    spec.terminal = [](double) { return 1.0; };
    spec.lipschitz_bound = 100.0;
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(1));
    CHECK(sol.lipschitz_warning);
    CHECK(sol.max_sampled_slope == doctest::Approx(1e4).epsilon(1e-6));
}

TEST_CASE("the deterministic linear-driver error halves with the step") {
    auto solve_at = [](std::size_t n_steps) {
        TimeGrid g = make_grid(1.0, n_steps, {});
        NoiseBatch noise = sample_noise(g, 500, 5);
        PathBundle paths = constant_paths(g, noise, 1.0);
        DriverSpec spec;
        spec.driver = [](const DriverArgs& a) { return a.w + 1.0; };
        spec.terminal = [](double) { return 0.0; };
        return solve_bsde_lsmc(spec, paths, noise, RegressionBasis::polynomial(1)).w0();
    };
    const double target = std::exp(1.0) - 1.0;
    const double err_coarse = std::abs(solve_at(100) - target);
    const double err_fine = std::abs(solve_at(200) - target);
    CHECK(err_fine < err_coarse);
    CHECK(err_coarse / err_fine == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("indicator-bin basis tracks the martingale representation") {
    TimeGrid g = make_grid(1.0, 25, {});
    NoiseBatch noise = sample_noise(g, 20000, 43);
    PathBundle paths = brownian_paths(g, noise);
    DriverSpec spec;
    spec.terminal = [](double x) { return x; };
    BsdeSolution sol = solve_bsde_lsmc(spec, paths, noise, RegressionBasis::bins(16));
    for (std::size_t s = 5; s < g.n_steps; s += 7) {
        MeanVar mv = block_mean_var(ExecPolicy::parallel(), paths.n_paths,
                                    [&](std::size_t p) {
                                        const double d = sol.W(p, s) - paths.X(p, s);
                                        return d * d;
                                    });
        // bin means approximate E[B(T)|F_s] = B(s) to the bin width
        CHECK(mv.mean < 0.05);
    }
}
