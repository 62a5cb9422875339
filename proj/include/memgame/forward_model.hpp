#ifndef MEMGAME_FORWARD_MODEL_HPP
#define MEMGAME_FORWARD_MODEL_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "memgame/matrix.hpp"
#include "memgame/noise.hpp"
#include "memgame/parallel.hpp"
#include "memgame/time_grid.hpp"

namespace memgame {

// Arguments fed to the forward coefficients b, sigma, gamma: current state,
// both players' delayed values y_i = X(t - delta_i) and noisy memories
// m_i = int_{t-delta_i}^t X dB, and both controls.
struct FlowArgs {
    double t = 0.0;
    double x = 0.0;
    std::array<double, 2> y{0.0, 0.0};
    std::array<double, 2> m{0.0, 0.0};
    std::array<double, 2> u{0.0, 0.0};
};

// Control of one player: either a per-step array (the family the optimizer
// searches) or a state-feedback rule evaluated along the path.
struct ControlProcess {
    enum class Kind { piecewise_constant, feedback };

    Kind kind = Kind::piecewise_constant;
    std::vector<double> values;                      // per step
    std::function<double(double t, double x)> rule;  // feedback kind
    int player = 0;

    double value(std::size_t step, double t, double x) const {
        if (kind == Kind::feedback) return rule(t, x);
        return values[step < values.size() ? step : values.size() - 1];
    }

    static ControlProcess constant(double v, std::size_t n_steps, int player = 0) {
        ControlProcess c;
        c.values.assign(n_steps, v);
        c.player = player;
        return c;
    }
    static ControlProcess piecewise(std::vector<double> per_step, int player = 0) {
        ControlProcess c;
        c.values = std::move(per_step);
        c.player = player;
        return c;
    }
    static ControlProcess from_rule(std::function<double(double, double)> rule,
                                    int player = 0) {
        ControlProcess c;
        c.kind = Kind::feedback;
        c.rule = std::move(rule);
        c.player = player;
        return c;
    }
};

using ControlPair = std::array<ControlProcess, 2>;

// Coefficients of the controlled forward SDE
//   dX = b dt + sigma dB + int gamma(.., zeta) Ntilde(dt, dzeta),  X(0) = x0.
// gamma may be empty when jump_spec.intensity == 0.
//
// Schemes: explicit Euler on X, or Euler on ln X for strictly multiplicative
// models (b, sigma, gamma all proportional to x). The log scheme keeps X
// positive no matter how hard the drift pulls, which matters for consumption
// models whose optimal rate blows up near the horizon.
struct ModelSpec {
    enum class Scheme { explicit_euler, log_euler };

    double x0 = 0.0;
    std::function<double(const FlowArgs&)> drift;
    std::function<double(const FlowArgs&)> diffusion;
    std::function<double(const FlowArgs&, double zeta)> jump_coef;
    JumpSpec jump_spec;
    Scheme scheme = Scheme::explicit_euler;
    double blowup_guard = 1e12;
};

// Simulated forward system. X and the memories are stored; the delayed value
// Y_i is a lookup (constant pre-history: X = x0 on [-max delta, 0)), and
// m_i is identically zero for a player with zero delay.
struct PathBundle {
    TimeGrid grid;
    std::size_t n_paths = 0;
    double x0 = 0.0;

    PathMatrix X;                     // n_paths x (n_steps + 1)
    std::array<PathMatrix, 2> mem;    // noisy memory, empty when delay = 0
    std::array<PathMatrix, 2> u;      // applied controls, n_paths x n_steps

    std::size_t delay_steps(std::size_t player) const {
        return grid.delay_steps.size() > player ? grid.delay_steps[player] : 0;
    }
    double y(std::size_t player, std::size_t path, std::size_t step) const {
        const std::size_t d = delay_steps(player);
        return step >= d ? X(path, step - d) : x0;
    }
    double memory(std::size_t player, std::size_t path, std::size_t step) const {
        return mem[player].empty() ? 0.0 : mem[player](path, step);
    }
    double control(std::size_t player, std::size_t path, std::size_t step) const {
        // beyond the last step (terminal evaluations) the last value is held
        const std::size_t s = step < grid.n_steps ? step : grid.n_steps - 1;
        return u[player](path, s);
    }
};

// Explicit Euler-Maruyama over the batch. Coefficients are evaluated at the
// pre-jump state (the discrete left limit). Throws NumericalBlowup when |X|
// passes the guard.
PathBundle simulate_forward(const ModelSpec& model, const ControlPair& controls,
                            const NoiseBatch& noise,
                            const ExecPolicy& policy = ExecPolicy::parallel());

// Monte Carlo variance of the noisy memory of a constant path (b=sigma=gamma=0,
// X == x0); the Ito isometry gives x0^2 * min(delta, t).
MeanVar noisy_memory_variance_probe(double x0, double delta, double t,
                                    const NoiseBatch& noise,
                                    const ExecPolicy& policy = ExecPolicy::parallel());

} // namespace memgame

#endif
