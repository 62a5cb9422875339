#ifndef MEMGAME_TIME_GRID_HPP
#define MEMGAME_TIME_GRID_HPP

#include <cstddef>
#include <vector>

#include "memgame/errors.hpp"

namespace memgame {

// Uniform grid on [0, T] with per-player delays snapped to whole steps, so a
// delay lookup is an array offset and never interpolates.
struct TimeGrid {
    double horizon = 0.0;                 // T
    std::size_t n_steps = 0;              // number of Euler steps
    double dt = 0.0;                      // T / n_steps
    std::vector<std::size_t> delay_steps; // d_i with d_i * dt = delta_i

    double time(std::size_t step) const { return static_cast<double>(step) * dt; }
    std::size_t n_players() const { return delay_steps.size(); }
    double delta(std::size_t player) const {
        return static_cast<double>(delay_steps[player]) * dt;
    }
};

// Finite mark measure for the compensated Poisson driver:
// nu({zeta_j}) = intensity * prob_j. intensity = 0 turns jumps off.
struct JumpSpec {
    double intensity = 0.0;
    std::vector<double> mark_values;
    std::vector<double> mark_probs;

    std::size_t n_marks() const { return mark_values.size(); }
    double nu(std::size_t mark) const { return intensity * mark_probs[mark]; }
    double mean_mark() const {
        double m = 0.0;
        for (std::size_t j = 0; j < mark_values.size(); ++j)
            m += mark_values[j] * mark_probs[j];
        return m;
    }
    void validate() const;

    static JumpSpec none() { return JumpSpec{}; }
};

// Builds the grid; throws InvalidHorizon / NonCommensurateDelay.
TimeGrid make_grid(double horizon, std::size_t n_steps,
                   const std::vector<double>& deltas);

} // namespace memgame

#endif
