#ifndef MEMGAME_PARALLEL_HPP
#define MEMGAME_PARALLEL_HPP

#include <cmath>
#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace memgame {

// Execution policy for the path-parallel kernels.
//
// Results are bit-identical between serial() and parallel() runs: reductions
// are accumulated per fixed-size block and the block partials are combined
// in block order, so neither the thread count nor the schedule can change
// the floating-point summation order. The serial path is the reference
// implementation the tests compare against.
struct ExecPolicy {
    bool use_threads = true;
    std::size_t block_size = 8192;

    static ExecPolicy serial() { return ExecPolicy{false, 8192}; }
    static ExecPolicy parallel() { return ExecPolicy{true, 8192}; }
};

namespace detail {
inline std::size_t block_count(std::size_t n, std::size_t block) {
    return block == 0 ? 1 : (n + block - 1) / block;
}
} // namespace detail

// Runs body(lo, hi) over disjoint index ranges. No reduction: safe whenever
// iterations touch disjoint state (e.g. one path per index). Exceptions from
// worker blocks are captured and rethrown on the calling thread.
template <typename Body>
void parallel_for(const ExecPolicy& policy, std::size_t n, Body&& body) {
    if (n == 0) return;
    const std::size_t nb = detail::block_count(n, policy.block_size);
#ifdef _OPENMP
    if (policy.use_threads && nb > 1) {
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) shared(error)
        for (long long b = 0; b < static_cast<long long>(nb); ++b) {
            try {
                const std::size_t lo = static_cast<std::size_t>(b) * policy.block_size;
                const std::size_t hi =
                    lo + policy.block_size < n ? lo + policy.block_size : n;
                body(lo, hi);
            } catch (...) {
#pragma omp critical(memgame_parallel_error)
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
        return;
    }
#endif
    body(0, n);
}

// Deterministic reduction: accumulate(slot, lo, hi) fills a zero-initialised
// partial of type Acc for indices [lo, hi); partials are then combined with
// merge(total, slot) in increasing block order.
template <typename Acc, typename Accumulate, typename Merge>
Acc block_reduce(const ExecPolicy& policy, std::size_t n,
                 Accumulate&& accumulate, Merge&& merge) {
    const std::size_t nb = detail::block_count(n, policy.block_size);
    std::vector<Acc> partials(nb);
#ifdef _OPENMP
    if (policy.use_threads && nb > 1) {
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) shared(error)
        for (long long b = 0; b < static_cast<long long>(nb); ++b) {
            try {
                const std::size_t lo = static_cast<std::size_t>(b) * policy.block_size;
                const std::size_t hi =
                    lo + policy.block_size < n ? lo + policy.block_size : n;
                accumulate(partials[static_cast<std::size_t>(b)], lo, hi);
            } catch (...) {
#pragma omp critical(memgame_parallel_error)
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
    } else
#endif
    {
        for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t lo = b * policy.block_size;
            const std::size_t hi = lo + policy.block_size < n ? lo + policy.block_size : n;
            accumulate(partials[b], lo, hi);
        }
    }
    Acc total{};
    for (std::size_t b = 0; b < nb; ++b) merge(total, partials[b]);
    return total;
}

// Common case: deterministic sum of a scalar per index.
template <typename Fn>
double block_sum(const ExecPolicy& policy, std::size_t n, Fn&& fn) {
    return block_reduce<double>(
        policy, n,
        [&](double& acc, std::size_t lo, std::size_t hi) {
            double s = 0.0;
            for (std::size_t i = lo; i < hi; ++i) s += fn(i);
            acc = s;
        },
        [](double& total, const double& part) { total += part; });
}

struct MeanVar {
    double mean = 0.0;
    double variance = 0.0; // unbiased (n-1 denominator)
    std::size_t n = 0;
    double se() const { return n > 0 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

// Deterministic mean/variance of fn(i) over i in [0, n).
template <typename Fn>
MeanVar block_mean_var(const ExecPolicy& policy, std::size_t n, Fn&& fn) {
    struct Part {
        double sum = 0.0;
        double sumsq = 0.0;
    };
    Part total = block_reduce<Part>(
        policy, n,
        [&](Part& acc, std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const double v = fn(i);
                acc.sum += v;
                acc.sumsq += v * v;
            }
        },
        [](Part& t, const Part& p) {
            t.sum += p.sum;
            t.sumsq += p.sumsq;
        });
    MeanVar mv;
    mv.n = n;
    if (n == 0) return mv;
    mv.mean = total.sum / static_cast<double>(n);
    if (n > 1) {
        const double ss = total.sumsq - static_cast<double>(n) * mv.mean * mv.mean;
        mv.variance = ss > 0.0 ? ss / static_cast<double>(n - 1) : 0.0;
    }
    return mv;
}

} // namespace memgame

#endif
