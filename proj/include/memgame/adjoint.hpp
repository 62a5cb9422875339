#ifndef MEMGAME_ADJOINT_HPP
#define MEMGAME_ADJOINT_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "memgame/bsde.hpp"
#include "memgame/hamiltonian.hpp"

namespace memgame {

// Boundary data of the adjoint pair: lambda(0) = psi'(W(0)) and
// p(T) = phi'(X(T)) + h'(X(T)) lambda(T). Null members read as 0.
struct AdjointTerminalSpec {
    std::function<double(double w0)> psi_prime;
    std::function<double(double x_terminal)> phi_prime;
    std::function<double(double x_terminal)> h_prime;
};

// Hamiltonian argument tuple along a simulated path at (path, step); the
// multiplier slots are left at zero for the caller to fill.
AdjointState path_state(const PathBundle& paths, const BsdeSolution& bsde,
                        std::size_t path, std::size_t step, std::size_t n_marks);

// (lambda, p, q, r) plus the (p2, q2) auxiliaries of the triple-system
// reduction. p1/q1/r1 live in the W/Z/K slots of `pqr`.
struct AdjointSolution {
    PathMatrix lambda; // n_paths x (n_steps + 1)
    BsdeSolution pqr;
    PathMatrix p2; // n_paths x n_steps
    PathMatrix q2; // n_paths x n_steps

    double q2_mean(std::size_t step) const;
};

// Forward Euler for d lambda = dH/dw dt + dH/dz dB + grad_k H dNtilde with
// lambda(0) = psi'(W(0)). Only the driver part of H touches (w, z, k), so the
// step needs no (p, q, r) values.
PathMatrix solve_lambda_forward(const HamiltonianSpec& spec,
                                const AdjointTerminalSpec& terminal,
                                const PathBundle& paths, const BsdeSolution& bsde,
                                const NoiseBatch& noise,
                                const ExecPolicy& policy = ExecPolicy::parallel());

// Triple-system solve: p2 from the conditional window integral of dH/dLambda,
// q2 from the projected-derivative regression over the same window, then the
// (p1, q1, r1) BSDE with driver mu1 = q2 + dH/dx(t) + dH/dy(t + delta) 1.
// Requires dH/dLambda evaluable along the path without (p, q, r) (the
// coefficients b, sigma, gamma must not depend on the noisy memory).
AdjointSolution solve_adjoint_triple(const HamiltonianSpec& spec,
                                     const AdjointTerminalSpec& terminal,
                                     const PathBundle& paths, const BsdeSolution& bsde,
                                     const PathMatrix& lambda, const NoiseBatch& noise,
                                     const RegressionBasis& basis,
                                     const ExecPolicy& policy = ExecPolicy::parallel(),
                                     const RegressorSet& regressors = RegressorSet{});

// Closed-form E[D_{t_s} (dH/dLambda(t_r)) | F_{t_s}] when one exists; used by
// the residual verifier to keep the check independent of the pipeline.
using MalliavinOracle =
    std::function<double(std::size_t path, std::size_t t_step, std::size_t s_step)>;

struct ResidualReport {
    std::vector<double> mean_residual_by_step; // drift mismatch per unit time
    double mean_abs_residual = 0.0;
    // signed residual accumulated over the horizon: the martingale noise
    // telescopes away while a one-signed drift mismatch adds up, so this is
    // the statistic whose decay under grid refinement is visible above the
    // Monte Carlo floor
    double total_drift_mismatch = 0.0;
    // signed horizon integral of (pipeline q2 - oracle Malliavin window):
    // the exact content of the triple-system reduction, with the Hamiltonian
    // terms of both drifts cancelling pathwise. Zero when no oracle is given.
    double malliavin_mismatch_total = 0.0;
    // max |lambda via H - lambda via calligraphic H| over paths and steps
    double lambda_structural_max_diff = 0.0;
};

// Plugs (p1, q1, r1, lambda) into the noisy-memory BSDE whose drift carries
// the Malliavin window term and reports the per-step mean residual; also
// re-steps lambda through the q2 x + H Hamiltonian to confirm both forward
// equations produce the same paths.
ResidualReport verify_noisy_memory_residual(const HamiltonianSpec& spec,
                                         const AdjointSolution& adjoint,
                                         const PathBundle& paths,
                                         const BsdeSolution& bsde,
                                         const NoiseBatch& noise,
                                         const RegressionBasis& basis,
                                         const MalliavinOracle& oracle = nullptr,
                                         const ExecPolicy& policy = ExecPolicy::parallel());

struct ConcavityReport {
    std::size_t n_samples = 0;
    std::size_t n_violations = 0;
    double worst_gap = 0.0;          // most negative concavity gap found
    double lambda_terminal_min = 0.0;
    bool lambda_terminal_nonneg = true;

    double violation_fraction() const {
        return n_samples ? static_cast<double>(n_violations) /
                               static_cast<double>(n_samples)
                         : 0.0;
    }
};

// Midpoint-concavity sampling of hat-H (own control maximised out by golden
// section on [control_lo, control_hi]) in (x, y_own, m_own, w, z, k) around
// simulated states, with the multipliers frozen at the solved values. Under
// full information the conditional expectation collapses pathwise, so hat-H
// is evaluated directly.
ConcavityReport check_concavity_hat_hamiltonian(
    const HamiltonianSpec& spec, const PathBundle& paths, const BsdeSolution& bsde,
    const AdjointSolution& adjoint, double control_lo, double control_hi,
    std::size_t n_samples, uint64_t seed,
    const ExecPolicy& policy = ExecPolicy::parallel());

} // namespace memgame

#endif
