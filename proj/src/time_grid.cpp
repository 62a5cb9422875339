#include "memgame/time_grid.hpp"

#include <cmath>
#include <string>

namespace memgame {

void JumpSpec::validate() const {
    if (intensity < 0.0) throw ConfigError("jump intensity must be >= 0");
    if (mark_values.size() != mark_probs.size())
        throw ConfigError("mark values and probabilities differ in length");
    if (intensity > 0.0) {
        if (mark_values.empty())
            throw ConfigError("positive jump intensity requires at least one mark");
        double total = 0.0;
        for (double p : mark_probs) {
            if (p < 0.0) throw ConfigError("mark probabilities must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("mark probabilities must sum to 1 (got " +
                              std::to_string(total) + ")");
    }
}

TimeGrid make_grid(double horizon, std::size_t n_steps,
                   const std::vector<double>& deltas) {
    if (!(horizon > 0.0)) throw InvalidHorizon("horizon must be positive");
    if (n_steps < 1) throw InvalidHorizon("need at least one step");

    TimeGrid grid;
    grid.horizon = horizon;
    grid.n_steps = n_steps;
    grid.dt = horizon / static_cast<double>(n_steps);
    grid.delay_steps.reserve(deltas.size());

    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const double delta = deltas[i];
        if (delta < 0.0 || delta > horizon)
            throw DeltaExceedsHorizon("delta[" + std::to_string(i) +
                                      "] outside [0, T]");
        const double exact = delta / grid.dt;
        const double rounded = std::round(exact);
        // Snap to the grid; reject anything that is not a whole number of steps.
        if (std::abs(rounded - exact) > 1e-9 * std::max(1.0, std::abs(exact)))
            throw NonCommensurateDelay(
                "delta[" + std::to_string(i) + "] = " + std::to_string(delta) +
                " is not an integer multiple of dt = " + std::to_string(grid.dt));
        grid.delay_steps.push_back(static_cast<std::size_t>(rounded));
    }
    return grid;
}

} // namespace memgame
