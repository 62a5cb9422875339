#include "memgame/hamiltonian.hpp"

#include <cmath>

namespace memgame {

double evaluate_hamiltonian(const HamiltonianSpec& spec, const AdjointState& state) {
    const FlowArgs fa = state.flow();
    double h = 0.0;
    if (spec.reward) h += spec.reward(state);
    if (spec.driver) h += state.lambda * spec.driver(state);
    if (spec.drift) h += state.p * spec.drift(fa);
    if (spec.diffusion) h += state.q * spec.diffusion(fa);
    if (spec.jump_coef && spec.jump_spec.intensity > 0.0)
        for (std::size_t j = 0; j < spec.jump_spec.n_marks(); ++j)
            h += state.r[j] * spec.jump_coef(fa, spec.jump_spec.mark_values[j]) *
                 spec.jump_spec.nu(j);
    return h;
}

namespace {
double* slot_of(AdjointState& s, HArg arg, int player) {
    switch (arg) {
        case HArg::x: return &s.x;
        case HArg::y_own: return &s.y[player];
        case HArg::m_own: return &s.m[player];
        case HArg::w: return &s.w;
        case HArg::z: return &s.z;
        case HArg::u_own: return &s.u[player];
    }
    return nullptr;
}
} // namespace

double hamiltonian_partial(const HamiltonianSpec& spec, const AdjointState& state,
                           HArg arg) {
    auto it = spec.analytic.find(arg);
    if (it != spec.analytic.end()) return it->second(state);

    AdjointState bumped = state;
    double* v = slot_of(bumped, arg, spec.player);
    const double h = 1e-5 * std::max(1.0, std::abs(*v));
    const double keep = *v;
    *v = keep + h;
    const double up = evaluate_hamiltonian(spec, bumped);
    *v = keep - h;
    const double dn = evaluate_hamiltonian(spec, bumped);
    return (up - dn) / (2.0 * h);
}

double hamiltonian_partial_k(const HamiltonianSpec& spec, const AdjointState& state,
                             std::size_t mark) {
    if (spec.analytic_k) return spec.analytic_k(state, mark);
    if (state.k.size() <= mark) return 0.0;
    AdjointState bumped = state;
    const double keep = bumped.k[mark];
    const double h = 1e-5 * std::max(1.0, std::abs(keep));
    bumped.k[mark] = keep + h;
    const double up = evaluate_hamiltonian(spec, bumped);
    bumped.k[mark] = keep - h;
    const double dn = evaluate_hamiltonian(spec, bumped);
    return (up - dn) / (2.0 * h);
}

} // namespace memgame
