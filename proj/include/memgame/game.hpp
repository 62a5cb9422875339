#ifndef MEMGAME_GAME_HPP
#define MEMGAME_GAME_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memgame/adjoint.hpp"
#include "memgame/bsde.hpp"
#include "memgame/forward_model.hpp"

namespace memgame {

// J_i = E[ int f_i dt + phi_i(X(T)) + psi_i(W_i(0)) ]
struct PerformanceSpec {
    std::function<double(const FlowArgs&)> running_reward; // f_i, null == 0
    std::function<double(double)> bequest;                 // phi_i, null == 0
    std::function<double(double)> utility_weight;          // psi_i, null == 0
    std::function<double(double)> utility_weight_prime;    // psi_i'
};

struct SolverConfig {
    RegressionBasis basis = RegressionBasis::polynomial(2);
    RegressorSet regressors;
    // lighter settings used inside the best-response search loop
    RegressionBasis search_basis = RegressionBasis::polynomial(2);
    RegressorSet search_regressors;
    std::size_t search_paths = 0;     // 0: same noise as the outer estimate
    std::size_t derivative_paths = 0; // 0: same noise for the Gateaux bumps
    ExecPolicy policy = ExecPolicy::parallel();
};

// Everything attached to one player: objective, backward equation, the
// Hamiltonian (for the maximum-principle checks) and the admissible box.
struct PlayerSpec {
    PerformanceSpec performance;
    DriverSpec bsde;
    HamiltonianSpec hamiltonian;
    AdjointTerminalSpec adjoint_terminal;
    double control_lo = -1e12;
    double control_hi = 1e12;

    // Optional replacement for the generic backward solve of the adjoint
    // (p, q, r). Models whose adjoint equation is linear with a stiff drift
    // coefficient (the consumption game: -(c1+c2) ~ -2/(T-t) near the
    // horizon) supply their integrating-factor representation here; the
    // explicit recursion cannot track e^{c dt} once c dt is order one.
    std::function<BsdeSolution(const PathBundle& paths, const PathMatrix& lambda,
                               const NoiseBatch& noise, const SolverConfig& config)>
        adjoint_p_solver;
};

struct GameModel {
    ModelSpec forward;
    std::array<PlayerSpec, 2> players;
};

struct PerformanceEstimate {
    double value = 0.0;
    double se = 0.0;
    double forward_part = 0.0; // E[int f dt + phi(X_T)]
    double w0 = 0.0;           // W_i(0)
    // per-path contributions with mean == value (psi linearised around W(0));
    // differences of these under common random numbers drive the gradient
    // and gap estimates
    std::vector<double> samples;
};

PerformanceEstimate estimate_performance(const GameModel& model, int player,
                                         const ControlPair& controls,
                                         const NoiseBatch& noise,
                                         const SolverConfig& config);

// same, with the forward paths already simulated under `controls`
PerformanceEstimate estimate_performance(const GameModel& model, int player,
                                         const PathBundle& paths,
                                         const NoiseBatch& noise,
                                         const SolverConfig& config);

// Directions for the necessary-principle checks: step functions 1_{(t0, T)}
// on an equispaced t0 grid plus the constant direction.
struct Direction {
    std::string name;
    std::vector<double> beta; // per step
};
std::vector<Direction> direction_dictionary(const TimeGrid& grid, std::size_t n_t0 = 10);

struct GateauxResult {
    double derivative = 0.0;
    double se = 0.0;
    double bump = 0.0;           // s0 actually used
    // largest |s| keeping u + s beta inside the box (piecewise candidates
    // only; infinite when the direction never binds)
    double kappa = 0.0;
    double richardson_gap = 0.0; // |D(s0) - D(s0/2)| when requested
};

// Central difference (J(u + s0 b) - J(u - s0 b)) / (2 s0) under common random
// numbers. Throws AdmissibilityViolation when the bump leaves the box.
GateauxResult gateaux_derivative(const GameModel& model, int player,
                                 const ControlPair& controls,
                                 const std::vector<double>& beta, double bump,
                                 const NoiseBatch& noise, const SolverConfig& config,
                                 bool richardson = false);

// The Hamiltonian form E[int beta dH/du dt] of the same derivative, evaluated
// from solved adjoints; cross-checks the central differences.
struct HamiltonianFoc {
    // per-step statistics of dH_i/dv at v = u_i(t)
    std::vector<double> mean, se, conditional_rms;
};
HamiltonianFoc hamiltonian_foc_statistics(const GameModel& model, int player,
                                          const PathBundle& paths,
                                          const BsdeSolution& bsde,
                                          const AdjointSolution& adjoint,
                                          const RegressionBasis& basis,
                                          const ExecPolicy& policy);

double gateaux_hamiltonian_form(const HamiltonianFoc& foc,
                                const std::vector<double>& beta, double dt,
                                double* se_out = nullptr);

// Finite-dimensional control family searched by the best response.
struct ControlFamily {
    std::size_t dim = 0;
    std::function<ControlProcess(const std::vector<double>&)> make;
    std::vector<double> lo, hi; // per-parameter box
    std::vector<double> initial;

    // piecewise-constant on n_bins equal time bins
    static ControlFamily piecewise_bins(const TimeGrid& grid, std::size_t n_bins,
                                        double lo, double hi,
                                        std::vector<double> initial, int player);
};

struct BestResponse {
    std::vector<double> params;
    ControlProcess control;
    double value = 0.0;
    double value_se = 0.0;
    bool converged = true;
    std::size_t sweeps = 0;
};

// Coordinate ascent with golden-section line searches under common random
// numbers; deterministic given the noise batch.
BestResponse best_response(const GameModel& model, int player,
                           const ControlProcess& opponent, const ControlFamily& family,
                           const NoiseBatch& noise, const SolverConfig& config,
                           std::size_t max_sweeps = 3, double improve_tol = 1e-7);

struct NashTolerances {
    double gap_sigmas = 3.0;
    double derivative_sigmas = 3.0;
    // dt allowance of the derivative gate: under common random numbers the
    // difference estimator can be noise-free, so the gate needs the same
    // "sigmas + C dt" form as the Malliavin checks to absorb the O(dt)
    // quadrature offset of the discretised objective
    double derivative_dt_coeff = 2.0;
    double foc_rel = 0.05;   // FOC mean vs off-candidate scale
    double bump_rel = 1e-3;  // central-difference bump, relative to control scale
    std::size_t concavity_samples = 10000;
};

struct PlayerCertificate {
    double j_candidate = 0.0, j_candidate_se = 0.0;
    double best_response_gap = 0.0, best_response_gap_se = 0.0;
    std::vector<double> best_response_params;
    bool best_response_converged = true;

    struct DirectionalDerivative {
        std::string direction;
        double value = 0.0, se = 0.0;
        double hamiltonian_form = 0.0, hamiltonian_form_se = 0.0;
    };
    std::vector<DirectionalDerivative> gateaux;

    HamiltonianFoc foc;
    std::vector<double> foc_scale; // off-candidate magnitude per step
    double foc_worst_excess = 0.0; // worst |mean| - (3 se + rel scale), <= 0 passes

    ConcavityReport concavity;
    bool psi_monotone = true;

    bool pass_gap = false, pass_gateaux = false, pass_foc = false,
         pass_concavity = false;
};

struct NashCertificate {
    std::array<PlayerCertificate, 2> players;
    bool pass = false;
    // the verdict is relative to the searched family, not the full
    // admissible set; the necessary-condition checks compensate
    std::string scope_note;
};

NashCertificate certify_nash(const GameModel& model, const ControlPair& candidates,
                             const std::array<ControlFamily, 2>& families,
                             const NoiseBatch& noise, const SolverConfig& config,
                             const NashTolerances& tol = NashTolerances{});

} // namespace memgame

#endif
