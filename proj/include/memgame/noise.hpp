#ifndef MEMGAME_NOISE_HPP
#define MEMGAME_NOISE_HPP

#include <cstdint>
#include <cstddef>
#include <vector>

#include "memgame/matrix.hpp"
#include "memgame/parallel.hpp"
#include "memgame/time_grid.hpp"

namespace memgame {

// Counter-based uniform/normal draws. Every variate is a pure function of
// (seed, path, step, stream), so a batch can be generated in blocks, in
// parallel, or re-generated path by path and the numbers never change.
namespace rng {

uint64_t counter_hash(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream);

// uniform in (0, 1]
double uniform(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream);

// standard normal (Box-Muller on two counter uniforms)
double normal(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream);

} // namespace rng

struct JumpEvent {
    uint32_t step;
    uint32_t mark;
};

// One seeded batch of driving noise on a grid: Brownian increments plus the
// compensated-Poisson events. Immutable after construction; many solver
// threads may read it concurrently.
struct NoiseBatch {
    TimeGrid grid;
    JumpSpec jump_spec;
    std::size_t n_paths = 0;
    std::size_t first_path = 0; // global index of path 0 (for streamed blocks)
    uint64_t seed = 0;

    PathMatrix dB;                             // n_paths x n_steps, N(0, dt)
    std::vector<std::vector<JumpEvent>> jumps; // per path, ascending step
    double mark_compensator_dt = 0.0;          // intensity * E[zeta] * dt

    // B(t_s) for one path, s = 0..n_steps (prefix sums of dB; B(0) = 0).
    void brownian_path(std::size_t path, std::vector<double>& out) const;

    // Sum over jumps in one step of zeta minus the compensator: the increment
    // of the compensated integral of zeta against N-tilde.
    double compensated_mark_increment(std::size_t path, std::size_t step) const;
};

NoiseBatch sample_noise(const TimeGrid& grid, std::size_t n_paths, uint64_t seed,
                        const JumpSpec& jump_spec = JumpSpec::none(),
                        std::size_t first_path = 0,
                        const ExecPolicy& policy = ExecPolicy::parallel());

} // namespace memgame

#endif
