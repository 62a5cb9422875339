#ifndef MEMGAME_RECURSIVE_UTILITY_HPP
#define MEMGAME_RECURSIVE_UTILITY_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "memgame/game.hpp"

namespace memgame {

// Piecewise-constant function of time on equal bins of [0, horizon]; one
// value makes it constant. Integrals are exact per bin.
struct StepFunction {
    double horizon = 1.0;
    std::vector<double> values{0.0};

    static StepFunction constant(double v, double horizon = 1.0) {
        StepFunction f;
        f.horizon = horizon;
        f.values.assign(1, v);
        return f;
    }

    double at(double t) const;
    double integral(double t) const; // int_0^t
    std::vector<double> breakpoints() const;
};

// Two-player consumption game with recursive utility: the market follows
//   dX = X [mu dt + sigma dB + int zeta Ntilde] - (c1 + c2) X dt
// and player i's utility is W_i(0) of the backward equation with driver
//   alpha_i(t) w + eta_i(t) ln Y_i + ln(c_i X).
// The noisy-memory weight is fixed at zero: the model the closed forms solve
// carries no Lambda term, and ln(Lambda) would not be defined anyway.
struct RecursiveUtilityParams {
    std::array<StepFunction, 2> alpha;
    std::array<StepFunction, 2> eta;
    std::array<double, 2> kappa{0.0, 0.0}; // must stay 0
    std::array<double, 2> delta{0.0, 0.0};
    StepFunction mu = StepFunction::constant(0.0);
    StepFunction sigma = StepFunction::constant(0.0);
    JumpSpec jumps;      // marks read as relative jump sizes of X
    double x0 = 1.0;
    double horizon = 1.0;
    double c_min = 1e-4;
    double c_max = 1e4;

    void validate() const;
};

// lambda_i(t) = exp(int_0^t alpha_i), exact for the piecewise-constant alpha
double closed_form_lambda(const RecursiveUtilityParams& params, int player, double t);

// c*_i(t) = lambda_i(t) / int_t^T (lambda_i(s) + lambda_i(s+delta) eta_i(s+delta)
// 1_{[0, T-delta]}(s)) ds; the integrand is deterministic so the conditional
// expectation is plain quadrature (exact per piece). Throws HorizonBoundary
// for t within min_gap of the horizon.
double closed_form_consumption(const RecursiveUtilityParams& params, int player,
                               double t, double min_gap = 0.0);

// the denominator above (the X p quadrature of the adjoint representation)
double consumption_denominator(const RecursiveUtilityParams& params, int player,
                               double t);

GameModel build_recursive_utility_game(const RecursiveUtilityParams& params,
                                       const TimeGrid& grid);

// closed-form equilibrium sampled on the grid (piecewise-constant control)
ControlProcess closed_form_control(const RecursiveUtilityParams& params, int player,
                                   const TimeGrid& grid);

struct BenchmarkConfig {
    std::size_t n_steps = 200;
    std::size_t n_paths = 20000;
    std::size_t search_paths = 3000;
    std::size_t derivative_paths = 4000;
    std::size_t n_bins = 10;
    uint64_t seed = 1;
    NashTolerances tolerances;
    double br_rel_tol = 0.05;  // best response vs closed form, per bin
    double xp_rel_tol = 0.02;  // X p vs quadrature
    std::array<double, 2> candidate_scale{1.0, 1.0}; // e.g. {2, 1} off-equilibrium
    ExecPolicy policy = ExecPolicy::parallel();
};

struct BenchmarkReport {
    std::vector<double> bin_mid_t;
    std::array<std::vector<double>, 2> c_star_mid;  // closed form at bin midpoints
    std::array<std::vector<double>, 2> br_values;   // fitted best response
    std::array<std::vector<double>, 2> br_rel_err;

    NashCertificate certificate;

    double gamma_identity_max_rel = 0.0; // x Gamma vs X, pathwise

    std::vector<double> xp_times;
    std::array<std::vector<double>, 2> xp_numeric;
    std::array<std::vector<double>, 2> xp_quadrature;
    std::array<std::vector<double>, 2> xp_rel_err;

    bool pass_best_response = false;
    bool pass_xp = false;
    bool pass_gamma = false;

    bool pass() const {
        return certificate.pass && pass_best_response && pass_xp && pass_gamma;
    }
};

// End-to-end benchmark: builds the game, certifies the (scaled) closed-form
// candidate pair, checks x Gamma = X pathwise and the X p representation
// against quadrature.
BenchmarkReport run_benchmark(const RecursiveUtilityParams& params,
                              const BenchmarkConfig& config);

} // namespace memgame

#endif
