#ifndef MEMGAME_BSDE_HPP
#define MEMGAME_BSDE_HPP

#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

#include "memgame/conditional.hpp"
#include "memgame/forward_model.hpp"
#include "memgame/matrix.hpp"
#include "memgame/regression.hpp"

namespace memgame {

struct BsdeSolution;

// Arguments of the BSDE driver g(t, X, Y, Lambda, W, Z, K, u). step/path and
// the partially solved backward system are exposed so that drivers built on
// top of this engine (the adjoint equations) can read their own future
// slices and per-step auxiliaries.
struct DriverArgs {
    std::size_t step = 0;
    std::size_t path = 0;
    FlowArgs flow;
    double w = 0.0;
    double z = 0.0;
    const double* k = nullptr; // per mark
    std::size_t n_marks = 0;
    const BsdeSolution* partial = nullptr; // slices > step already solved
};

// Driver and terminal data of dW = -g dt + Z dB + int K dNtilde, W(T) = h(X(T)).
struct DriverSpec {
    std::function<double(const DriverArgs&)> driver;
    std::function<double(double x_terminal)> terminal;
    // terminal condition that needs path context (adjoint: phi' + h' lambda(T));
    // wins over `terminal` when set
    std::function<double(std::size_t path, double x_terminal)> terminal_by_path;
    double lipschitz_bound = 100.0; // sampled-slope warning threshold
};

struct BsdeSolution {
    PathMatrix W;               // n_paths x (n_steps + 1)
    PathMatrix Z;               // n_paths x n_steps
    std::vector<PathMatrix> K;  // one matrix per mark
    // per-path step-0 regressands; their mean is W(0) and their spread carries
    // the Monte Carlo error of the W(0) estimate
    std::vector<double> w0_samples;

    double w0() const { return W(0, 0); }
    double k_at(std::size_t mark, std::size_t path, std::size_t step) const {
        return K.empty() ? 0.0 : K[mark](path, step);
    }

    bool lipschitz_warning = false;
    double max_sampled_slope = 0.0;
};

// Least-squares Monte Carlo backward induction with the explicit
// (forward-evaluated) driver: W_s = E^[W_{s+1}|F_s] + g(...) dt,
// Z_s = E^[(W_{s+1} - E^[W_{s+1}|F_s]) dB_s | F_s] / dt and the analogous
// compensated-count projection for K. Cross-sections with no regressor
// spread (step 0, degenerate models) collapse to plain means.
BsdeSolution solve_bsde_lsmc(const DriverSpec& driver, const PathBundle& paths,
                             const NoiseBatch& noise, const RegressionBasis& basis,
                             const ExecPolicy& policy = ExecPolicy::parallel(),
                             const RegressorSet& regressors = RegressorSet{});

// Per-step deterministic source or a full per-path matrix.
using LinearSource = std::variant<std::vector<double>, PathMatrix>;

// Linear-BSDE solution through its integrating-factor representation
//   Gamma(t) p(t) = E[ int_t^T source(s) Gamma(s) ds | F_t ],
// with Gamma the caller-simulated geometric factor (Gamma(0) = 1). Returns
// p in the W slot of the solution. The weighting absorbs stiff linear drift
// coefficients exactly, which the explicit backward recursion cannot.
// Trapezoid accumulation needs source values at step n_steps as well.
BsdeSolution solve_linear_bsde_gamma(const PathMatrix& gamma, const LinearSource& source,
                                     const TimeGrid& grid, const RegressionBasis& basis,
                                     const ExecPolicy& policy = ExecPolicy::parallel(),
                                     bool trapezoid = false);

} // namespace memgame

#endif
