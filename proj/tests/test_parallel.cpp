#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "memgame/bsde.hpp"
#include "memgame/malliavin.hpp"
#include "memgame/parallel.hpp"

using namespace memgame;

// The OpenMP kernels must be bit-identical to the serial reference: partial
// sums are confined to fixed blocks and merged in block order, so the thread
// count cannot reorder any floating-point reduction.

namespace {

bool same_bits(const PathMatrix& a, const PathMatrix& b) {
    return a.data().size() == b.data().size() &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.data().size() * sizeof(double)) == 0;
}

ControlPair zero_controls(std::size_t n_steps) {
    return {ControlProcess::constant(0.0, n_steps, 0),
            ControlProcess::constant(0.0, n_steps, 1)};
}

} // namespace

TEST_CASE("block reductions match the serial reference bit for bit") {
    const std::size_t n = 123457;
    auto f = [](std::size_t i) {
        return std::sin(static_cast<double>(i) * 0.1) / (1.0 + 0.01 * i);
    };
    const double serial = block_sum(ExecPolicy::serial(), n, f);
    const double parallel = block_sum(ExecPolicy::parallel(), n, f);
    CHECK(serial == parallel);

    MeanVar ms = block_mean_var(ExecPolicy::serial(), n, f);
    MeanVar mp = block_mean_var(ExecPolicy::parallel(), n, f);
    CHECK(ms.mean == mp.mean);
    CHECK(ms.variance == mp.variance);
}

TEST_CASE("noise generation is independent of the execution policy") {
    TimeGrid g = make_grid(1.0, 60, {});
    JumpSpec jumps;
    jumps.intensity = 1.5;
    jumps.mark_values = {-0.1, 0.2};
    jumps.mark_probs = {0.3, 0.7};
    NoiseBatch serial = sample_noise(g, 5000, 99, jumps, 0, ExecPolicy::serial());
    NoiseBatch parallel = sample_noise(g, 5000, 99, jumps, 0, ExecPolicy::parallel());
    CHECK(same_bits(serial.dB, parallel.dB));
    REQUIRE(serial.jumps.size() == parallel.jumps.size());
    for (std::size_t p = 0; p < serial.jumps.size(); ++p)
        REQUIRE(serial.jumps[p].size() == parallel.jumps[p].size());
}

TEST_CASE("forward simulation is independent of the execution policy") {
    TimeGrid g = make_grid(1.0, 80, {0.25, 0.1});
    NoiseBatch noise = sample_noise(g, 4000, 7);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x + 0.02 * a.y[0]; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle serial =
        simulate_forward(m, zero_controls(g.n_steps), noise, ExecPolicy::serial());
    PathBundle parallel =
        simulate_forward(m, zero_controls(g.n_steps), noise, ExecPolicy::parallel());
    CHECK(same_bits(serial.X, parallel.X));
    CHECK(same_bits(serial.mem[0], parallel.mem[0]));
    CHECK(same_bits(serial.mem[1], parallel.mem[1]));
}

TEST_CASE("the backward solver is independent of the execution policy") {
    TimeGrid g = make_grid(1.0, 40, {0.2, 0.0});
    NoiseBatch noise = sample_noise(g, 4000, 21);
    ModelSpec m;
    m.x0 = 1.0;
    m.drift = [](const FlowArgs& a) { return 0.05 * a.x; };
    m.diffusion = [](const FlowArgs& a) { return 0.2 * a.x; };
    PathBundle ps = simulate_forward(m, zero_controls(g.n_steps), noise,
                                     ExecPolicy::serial());
    PathBundle pp = simulate_forward(m, zero_controls(g.n_steps), noise,
                                     ExecPolicy::parallel());

    DriverSpec spec;
    spec.driver = [](const DriverArgs& a) { return 0.3 * a.w + 0.1 * a.z; };
    spec.terminal = [](double x) { return x * x; };
    BsdeSolution serial = solve_bsde_lsmc(spec, ps, noise,
                                          RegressionBasis::polynomial(2),
                                          ExecPolicy::serial());
    BsdeSolution parallel = solve_bsde_lsmc(spec, pp, noise,
                                            RegressionBasis::polynomial(2),
                                            ExecPolicy::parallel());
    CHECK(same_bits(serial.W, parallel.W));
    CHECK(same_bits(serial.Z, parallel.Z));
}

TEST_CASE("malliavin identity checks are independent of the execution policy") {
    TimeGrid g = make_grid(1.0, 50, {});
    IdentityCheckConfig serial_cfg;
    serial_cfg.n_paths = 30000;
    serial_cfg.seed = 5;
    serial_cfg.policy = ExecPolicy::serial();
    IdentityCheckConfig parallel_cfg = serial_cfg;
    parallel_cfg.policy = ExecPolicy::parallel();

    AdaptedProcess phi = [](const std::vector<double>& b, const TimeGrid&,
                            std::size_t s) { return b[s]; };
    IdentityReport rs =
        check_duality(WienerFunctional::brownian_squared(1.0), phi, g, serial_cfg);
    IdentityReport rp =
        check_duality(WienerFunctional::brownian_squared(1.0), phi, g, parallel_cfg);
    CHECK(rs.lhs == rp.lhs);
    CHECK(rs.rhs == rp.rhs);
    CHECK(rs.se_lhs == rp.se_lhs);
}
