// Times the OpenMP path-parallel kernels against the serial reference
// implementation. The two must agree bit for bit (see test_parallel); this
// tool reports how much the threads actually buy.
#include <chrono>
#include <cstdio>
#include <string>
#include "memgame/bsde.hpp"
#include "memgame/malliavin.hpp"
using namespace memgame;
namespace {
template <typename Fn>
double time_call(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}
void report(const std::string& name, double serial, double parallel) {
    std::printf("%-28s %10.3f s %10.3f s %8.2fx\n", name.c_str(), serial, parallel,
                parallel > 0 ? serial / parallel : 0.0);
}
} // namespace
int main(int argc, char** argv) {
    std::size_t n_paths = 200000;
    std::size_t n_steps = 100;
    if (argc > 1) n_paths = std::stoul(argv[1]);
    if (argc > 2) n_steps = std::stoul(argv[2]);
    const TimeGrid grid = make_grid(1.0, n_steps, {0.25, 0.1});
    const ExecPolicy serial = ExecPolicy::serial();
    const ExecPolicy parallel = ExecPolicy::parallel();
    std::printf("paths %zu, steps %zu\n", n_paths, n_steps);
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial", "openmp", "speedup");
    // noise generation
    NoiseBatch noise_s, noise_p;
    const double t_noise_s =
        time_call([&] { noise_s = sample_noise(grid, n_paths, 7, JumpSpec::none(), 0, serial); });
    const double t_noise_p =
        time_call([&] { noise_p = sample_noise(grid, n_paths, 7, JumpSpec::none(), 0, parallel); });
    report("noise generation", t_noise_s, t_noise_p);
    // forward simulation with delay and noisy memory
    ModelSpec model;
    model.x0 = 1.0;
    model.drift = [](const FlowArgs& a) { return 0.05 * a.x + 0.02 * a.y[0]; };
    model.diffusion = [](const FlowArgs& a) { return 0.2 * a.x + 0.01 * a.m[1]; };
    ControlPair controls{ControlProcess::constant(0.0, n_steps, 0),
                         ControlProcess::constant(0.0, n_steps, 1)};
    PathBundle paths_s, paths_p;
    const double t_fwd_s =
        time_call([&] { paths_s = simulate_forward(model, controls, noise_s, serial); });
    const double t_fwd_p =
        time_call([&] { paths_p = simulate_forward(model, controls, noise_p, parallel); });
    report("forward simulation", t_fwd_s, t_fwd_p);
    // backward solve
    DriverSpec driver;
    driver.driver = [](const DriverArgs& a) { return 0.5 * a.w + 0.1 * a.z; };
    driver.terminal = [](double x) { return x * x; };
    const RegressionBasis basis = RegressionBasis::polynomial(2);
    const double t_bsde_s =
        time_call([&] { solve_bsde_lsmc(driver, paths_s, noise_s, basis, serial); });
    const double t_bsde_p =
        time_call([&] { solve_bsde_lsmc(driver, paths_p, noise_p, basis, parallel); });
    report("backward lsmc solve", t_bsde_s, t_bsde_p);
    // malliavin duality check (streamed)
    IdentityCheckConfig cfg_s;
    cfg_s.n_paths = n_paths;
    cfg_s.seed = 11;
    cfg_s.policy = serial;
    IdentityCheckConfig cfg_p = cfg_s;
    cfg_p.policy = parallel;
    const TimeGrid flat = make_grid(1.0, n_steps, {});
    AdaptedProcess phi = [](const std::vector<double>& b, const TimeGrid&,
                            std::size_t s) { return b[s]; };
    const WienerFunctional f = WienerFunctional::brownian_squared(1.0);
    const double t_mal_s = time_call([&] { check_duality(f, phi, flat, cfg_s); });
    const double t_mal_p = time_call([&] { check_duality(f, phi, flat, cfg_p); });
    report("malliavin duality check", t_mal_s, t_mal_p);
    return 0;
}
