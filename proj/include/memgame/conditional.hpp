#ifndef MEMGAME_CONDITIONAL_HPP
#define MEMGAME_CONDITIONAL_HPP

#include <cstddef>
#include <memory>
#include <vector>

#include "memgame/forward_model.hpp"
#include "memgame/regression.hpp"

namespace memgame {

// Which state coordinates feed the regression basis. Zero-delay players drop
// out of the Y/Lambda lists automatically (their columns are constant resp.
// absent). use_inverse_x adds 1/X, which the adjoint of multiplicative
// models needs: p behaves like D(t)/X and no low-order polynomial in X can
// track that shape.
struct RegressorSet {
    bool use_x = true;
    bool use_y = true;
    bool use_memory = true;
    bool use_inverse_x = false;
};

// E^[ . | F_t] on one time slice: least squares on the state regressors
// (X, Y_i, Lambda_i as configured), or the plain mean when the slice carries
// no spread (step 0, deterministic models). The regressor choice discretises
// the conditional expectation; delay models are not Markovian in X alone, so
// this is the approximation the whole pipeline rests on.
class PathStateConditional {
  public:
    PathStateConditional(const PathBundle& paths, std::size_t step,
                         const RegressionBasis& basis, const RegressorSet& set,
                         const ExecPolicy& policy);

    // fitted conditional expectation of target per path
    void fit(const double* target, double* out) const;

    bool degenerate() const { return reg_ == nullptr; }

  private:
    std::size_t n_ = 0;
    ExecPolicy policy_;
    std::vector<std::vector<double>> columns_;
    std::unique_ptr<StepRegression> reg_;
};

} // namespace memgame

#endif
