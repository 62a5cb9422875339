#include "memgame/conditional.hpp"

#include <cmath>

namespace memgame {

PathStateConditional::PathStateConditional(const PathBundle& paths, std::size_t step,
                                           const RegressionBasis& basis,
                                           const RegressorSet& set,
                                           const ExecPolicy& policy)
    : n_(paths.n_paths), policy_(policy) {
    auto add = [&](auto&& value_of) {
        std::vector<double> col(n_);
        parallel_for(policy_, n_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) col[p] = value_of(p);
        });
        MeanVar mv =
            block_mean_var(policy_, n_, [&](std::size_t p) { return col[p]; });
        // constant columns carry no information and break the normal equations
        if (std::sqrt(mv.variance) > 1e-12 * (1.0 + std::abs(mv.mean)))
            columns_.push_back(std::move(col));
    };
    if (set.use_x) add([&](std::size_t p) { return paths.X(p, step); });
    if (set.use_inverse_x) {
        bool safe = true;
        for (std::size_t p = 0; p < n_ && safe; ++p)
            safe = std::abs(paths.X(p, step)) > 1e-12;
        if (safe) add([&](std::size_t p) { return 1.0 / paths.X(p, step); });
    }
    for (std::size_t i = 0; i < 2; ++i) {
        if (paths.grid.delay_steps.size() <= i || paths.grid.delay_steps[i] == 0)
            continue;
        if (set.use_y) add([&](std::size_t p) { return paths.y(i, p, step); });
        if (set.use_memory)
            add([&](std::size_t p) { return paths.memory(i, p, step); });
    }
    if (!columns_.empty()) {
        std::vector<const double*> vars;
        vars.reserve(columns_.size());
        for (auto& c : columns_) vars.push_back(c.data());
        reg_ = std::make_unique<StepRegression>(vars, n_, basis, policy_);
    }
}

void PathStateConditional::fit(const double* target, double* out) const {
    if (reg_) {
        reg_->fit(target, out);
        return;
    }
    const double m = block_sum(policy_, n_, [&](std::size_t p) { return target[p]; }) /
                     static_cast<double>(n_);
    parallel_for(policy_, n_, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) out[p] = m;
    });
}

} // namespace memgame
