#ifndef MEMGAME_HAMILTONIAN_HPP
#define MEMGAME_HAMILTONIAN_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "memgame/forward_model.hpp"
#include "memgame/time_grid.hpp"

namespace memgame {

// Full argument tuple of one player's Hamiltonian
//   H = f(t,x,y_i,m_i,u_i) + lambda g(t,x,y,m,w,z,k,u) + p b + q sigma
//       + sum_j r_j gamma(.., zeta_j) nu_j.
// w/z/k are the player's backward solution slots, (lambda, p, q, r) the
// adjoint multipliers.
struct AdjointState {
    double t = 0.0;
    double x = 0.0;
    std::array<double, 2> y{0.0, 0.0};
    std::array<double, 2> m{0.0, 0.0};
    double w = 0.0;
    double z = 0.0;
    std::vector<double> k;
    std::array<double, 2> u{0.0, 0.0};
    double lambda = 0.0;
    double p = 0.0;
    double q = 0.0;
    std::vector<double> r;

    FlowArgs flow() const {
        FlowArgs fa;
        fa.t = t;
        fa.x = x;
        fa.y = y;
        fa.m = m;
        fa.u = u;
        return fa;
    }
};

// Differentiation slots the adjoint equations need (all own-player).
enum class HArg { x, y_own, m_own, w, z, u_own };

struct HamiltonianSpec {
    int player = 0; // which y/m/u slot is "own"

    std::function<double(const AdjointState&)> reward;  // f_i, null == 0
    std::function<double(const AdjointState&)> driver;  // g_i, null == 0
    std::function<double(const FlowArgs&)> drift;       // b
    std::function<double(const FlowArgs&)> diffusion;   // sigma
    std::function<double(const FlowArgs&, double)> jump_coef; // gamma
    JumpSpec jump_spec;

    // analytic partials; central finite differences fill the gaps
    std::map<HArg, std::function<double(const AdjointState&)>> analytic;
    std::function<double(const AdjointState&, std::size_t mark)> analytic_k;
};

double evaluate_hamiltonian(const HamiltonianSpec& spec, const AdjointState& state);

// dH/d(arg); analytic when supplied, else central difference with
// h = 1e-5 max(1, |v|)
double hamiltonian_partial(const HamiltonianSpec& spec, const AdjointState& state,
                           HArg arg);

// gradient w.r.t. the mark-j component of k (finite mark space)
double hamiltonian_partial_k(const HamiltonianSpec& spec, const AdjointState& state,
                             std::size_t mark);

} // namespace memgame

#endif
