#include "memgame/noise.hpp"

#include <cmath>

namespace memgame {
namespace rng {

namespace {
// splitmix64 finaliser
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace

uint64_t counter_hash(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream) {
    uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ path);
    h = mix64(h ^ (step * 0x100000001b3ULL + stream));
    return h;
}

double uniform(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream) {
    const uint64_t h = counter_hash(seed, path, step, stream);
    return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
}

double normal(uint64_t seed, uint64_t path, uint64_t step, uint64_t stream) {
    const double u1 = uniform(seed, path, step, stream);
    const double u2 = uniform(seed, path, step, stream + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

} // namespace rng

namespace {
// Fixed stream layout per (path, step): 0/1 gaussian pair, 2 poisson count,
// 3+j mark draw of the j-th jump.
constexpr uint64_t kStreamGauss = 0;
constexpr uint64_t kStreamPoisson = 2;
constexpr uint64_t kStreamMarks = 3;

std::size_t poisson_inverse(double lambda_dt, double u) {
    // Inversion by sequential search; lambda*dt is small at desk scale.
    std::size_t k = 0;
    double p = std::exp(-lambda_dt);
    double cum = p;
    while (u > cum && k < 1024) {
        ++k;
        p *= lambda_dt / static_cast<double>(k);
        cum += p;
    }
    return k;
}

uint32_t sample_mark(const JumpSpec& spec, double u) {
    double cum = 0.0;
    for (std::size_t j = 0; j < spec.n_marks(); ++j) {
        cum += spec.mark_probs[j];
        if (u <= cum) return static_cast<uint32_t>(j);
    }
    return static_cast<uint32_t>(spec.n_marks() - 1);
}
} // namespace

void NoiseBatch::brownian_path(std::size_t path, std::vector<double>& out) const {
    out.assign(grid.n_steps + 1, 0.0);
    const double* row = dB.row(path);
    for (std::size_t s = 0; s < grid.n_steps; ++s) out[s + 1] = out[s] + row[s];
}

double NoiseBatch::compensated_mark_increment(std::size_t path, std::size_t step) const {
    double inc = -mark_compensator_dt;
    for (const JumpEvent& ev : jumps[path])
        if (ev.step == step) inc += jump_spec.mark_values[ev.mark];
    return inc;
}

NoiseBatch sample_noise(const TimeGrid& grid, std::size_t n_paths, uint64_t seed,
                        const JumpSpec& jump_spec, std::size_t first_path,
                        const ExecPolicy& policy) {
    jump_spec.validate();

    NoiseBatch batch;
    batch.grid = grid;
    batch.jump_spec = jump_spec;
    batch.n_paths = n_paths;
    batch.first_path = first_path;
    batch.seed = seed;
    batch.dB = PathMatrix(n_paths, grid.n_steps);
    batch.jumps.resize(n_paths);
    batch.mark_compensator_dt =
        jump_spec.intensity > 0.0 ? jump_spec.intensity * jump_spec.mean_mark() * grid.dt
                                  : 0.0;

    const double sqrt_dt = std::sqrt(grid.dt);
    const double lambda_dt = jump_spec.intensity * grid.dt;

    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const uint64_t gp = first_path + p; // global path id
            double* row = batch.dB.row(p);
            for (std::size_t s = 0; s < grid.n_steps; ++s)
                row[s] = sqrt_dt * rng::normal(seed, gp, s, kStreamGauss);
            if (lambda_dt > 0.0) {
                auto& events = batch.jumps[p];
                for (std::size_t s = 0; s < grid.n_steps; ++s) {
                    const std::size_t count = poisson_inverse(
                        lambda_dt, rng::uniform(seed, gp, s, kStreamPoisson));
                    for (std::size_t j = 0; j < count; ++j) {
                        const double u = rng::uniform(seed, gp, s, kStreamMarks + j);
                        events.push_back({static_cast<uint32_t>(s),
                                          sample_mark(jump_spec, u)});
                    }
                }
            }
        }
    });
    return batch;
}

} // namespace memgame
