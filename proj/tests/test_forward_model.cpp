#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "memgame/errors.hpp"
#include "memgame/forward_model.hpp"

using namespace memgame;

namespace {

ModelSpec zero_model(double x0) {
    ModelSpec m;
    m.x0 = x0;
    m.drift = [](const FlowArgs&) { return 0.0; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    return m;
}

ControlPair zero_controls(std::size_t n_steps) {
    return {ControlProcess::constant(0.0, n_steps, 0),
            ControlProcess::constant(0.0, n_steps, 1)};
}

} // namespace

TEST_CASE("zero coefficients keep X constant and Lambda a Brownian window") {
    TimeGrid g = make_grid(1.0, 100, {0.3, 0.0});
    NoiseBatch noise = sample_noise(g, 500, 21);
    PathBundle b = simulate_forward(zero_model(3.0), zero_controls(g.n_steps), noise);

    std::vector<double> levels;
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        noise.brownian_path(p, levels);
        for (std::size_t s = 0; s <= g.n_steps; ++s) {
            CHECK(b.X(p, s) == 3.0);
            CHECK(b.y(0, p, s) == 3.0);
            CHECK(b.y(1, p, s) == 3.0);
            const std::size_t lo = s >= 30 ? s - 30 : 0;
            const double window = 3.0 * (levels[s] - levels[lo]);
            CHECK(b.memory(0, p, s) == doctest::Approx(window).epsilon(1e-12));
            CHECK(b.memory(1, p, s) == 0.0);
        }
    }
}

TEST_CASE("geometric model matches the lognormal mean") {
    TimeGrid g = make_grid(1.0, 100, {});
    const std::size_t n_paths = 100000;
    NoiseBatch noise = sample_noise(g, n_paths, 17);

    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);

    MeanVar mv = block_mean_var(ExecPolicy::parallel(), n_paths,
                                [&](std::size_t p) { return b.X(p, g.n_steps); });
    CHECK(std::abs(mv.mean - std::exp(0.05)) < 3.0 * mv.se());
}

TEST_CASE("deterministic delay drift follows the method-of-steps solution") {
    TimeGrid g = make_grid(1.0, 200, {0.5});
    NoiseBatch noise = sample_noise(g, 1, 1);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return a.y[0]; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);

    CHECK(b.X(0, 100) == doctest::Approx(1.5).epsilon(0.005));
    CHECK(b.X(0, 200) == doctest::Approx(2.125).epsilon(0.005));
}

TEST_CASE("memory bookkeeping: the sliding-window recurrence is bit-exact") {
    TimeGrid g = make_grid(1.0, 80, {0.25, 0.1});
    NoiseBatch noise = sample_noise(g, 200, 33);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.1 * a.y[0] - 0.05 * a.m[1]; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);

    const std::size_t d0 = g.delay_steps[0];
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        double lam = 0.0;
        for (std::size_t s = 0; s < g.n_steps; ++s) {
            CHECK(b.memory(0, p, s) == lam); // bit-level
            lam += b.X(p, s) * noise.dB(p, s);
            if (s >= d0) lam -= b.X(p, s - d0) * noise.dB(p, s - d0);
        }
        // and the window sum agrees up to floating reassociation
        for (std::size_t s = 0; s <= g.n_steps; s += 17) {
            double window = 0.0;
            const std::size_t lo = s >= d0 ? s - d0 : 0;
            for (std::size_t r = lo; r + 1 <= s; ++r)
                window += b.X(p, r) * noise.dB(p, r);
            CHECK(b.memory(0, p, s) == doctest::Approx(window).epsilon(1e-12));
        }
    }
}

TEST_CASE("delay lookup equals the shifted path exactly") {
    TimeGrid g = make_grid(1.0, 60, {0.2});
    NoiseBatch noise = sample_noise(g, 50, 8);
    ModelSpec m;
    m.x0 = 2.0;
    m.drift = [](const FlowArgs& a) { return 0.3 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.1 * a.x; };
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);
    const std::size_t d = g.delay_steps[0];
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t s = 0; s <= g.n_steps; ++s)
            CHECK(b.y(0, p, s) == (s >= d ? b.X(p, s - d) : 2.0));
}

TEST_CASE("no-delay no-jump run reproduces a plain Euler diffusion") {
    TimeGrid g = make_grid(1.0, 50, {0.0, 0.0});
    NoiseBatch noise = sample_noise(g, 100, 4);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.07 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.3 * a.x; };
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);

    for (std::size_t p = 0; p < b.n_paths; ++p) {
        double x = 1.0;
        for (std::size_t s = 0; s < g.n_steps; ++s) {
            const double dx = 0.07 * x * g.dt + 0.3 * x * noise.dB(p, s);
            x = x + dx;
            CHECK(b.X(p, s + 1) == x); // bit-level
        }
    }
}

TEST_CASE("compensated jumps keep the pure-jump model a martingale") {
    TimeGrid g = make_grid(1.0, 100, {});
    JumpSpec jumps;
    jumps.intensity = 4.0;
    jumps.mark_values = {-0.05, 0.08};
    jumps.mark_probs = {0.5, 0.5};
    const std::size_t n_paths = 50000;
    NoiseBatch noise = sample_noise(g, n_paths, 13, jumps);

    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs&) { return 0.0; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    m.jump_coef = [](const FlowArgs& a, double zeta) { return a.x * zeta; };
    m.jump_spec = jumps;
    PathBundle b = simulate_forward(m, zero_controls(g.n_steps), noise);

    MeanVar mv = block_mean_var(ExecPolicy::parallel(), n_paths,
                                [&](std::size_t p) { return b.X(p, g.n_steps); });
    CHECK(std::abs(mv.mean - 1.0) < 3.0 * mv.se());
}

TEST_CASE("noisy memory variance matches the Ito isometry") {
    TimeGrid g = make_grid(1.0, 100, {0.3});
    NoiseBatch noise = sample_noise(g, 100000, 77);

    MeanVar full = noisy_memory_variance_probe(2.0, 0.3, 1.0, noise);
    CHECK(std::abs(full.mean - 1.2) < 3.0 * full.se());

    MeanVar truncated = noisy_memory_variance_probe(2.0, 0.3, 0.1, noise);
    CHECK(std::abs(truncated.mean - 0.4) < 3.0 * truncated.se());

    MeanVar zero = noisy_memory_variance_probe(0.0, 0.3, 1.0, noise);
    CHECK(zero.mean == 0.0);
}

TEST_CASE("divergence trips the guard rail") {
    TimeGrid g = make_grid(1.0, 20, {});
    NoiseBatch noise = sample_noise(g, 4, 2);
    ModelSpec m;
    m.x0 = 10.0;
    m.blowup_guard = 1e6;
    m.drift = [](const FlowArgs& a) { return a.x * a.x * a.x; };
    m.diffusion = [](const FlowArgs&) { return 0.0; };
    CHECK_THROWS_AS(simulate_forward(m, zero_controls(g.n_steps), noise),
                    NumericalBlowup);
}

TEST_CASE("weak error of the geometric model stays within 3 SE plus C dt") {
    for (std::size_t n_steps : {50u, 100u, 200u}) {
        TimeGrid g = make_grid(1.0, n_steps, {});
        NoiseBatch noise = sample_noise(g, 100000, 1700 + n_steps);
        ModelSpec m;
        m.x0 = 1.0;
        m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
        m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
        PathBundle b = simulate_forward(m, {ControlProcess::constant(0.0, g.n_steps, 0),
                                            ControlProcess::constant(0.0, g.n_steps, 1)},
                                        noise);
        MeanVar mv = block_mean_var(ExecPolicy::parallel(), b.n_paths,
                                    [&](std::size_t p) { return b.X(p, g.n_steps); });
        INFO("n_steps = ", n_steps);
        CHECK(std::abs(mv.mean - std::exp(0.05)) <= 3.0 * mv.se() + 0.5 * g.dt);
    }
}
