#ifndef MEMGAME_REGRESSION_HPP
#define MEMGAME_REGRESSION_HPP

#include <cstddef>
#include <vector>

#include "memgame/parallel.hpp"

namespace memgame {

// How conditional expectations E[. | F_t] are discretised: least-squares
// projection on polynomials (total degree <= degree) of the time-t regressors,
// or on indicator functions of quantile bins of the first regressor.
struct RegressionBasis {
    enum class Kind { polynomial, indicator_bins };

    Kind kind = Kind::polynomial;
    int degree = 2;
    std::size_t n_bins = 8;
    double ridge = 1e-8;

    static RegressionBasis polynomial(int degree, double ridge = 1e-8) {
        RegressionBasis b;
        b.degree = degree;
        b.ridge = ridge;
        return b;
    }
    static RegressionBasis bins(std::size_t n_bins) {
        RegressionBasis b;
        b.kind = Kind::indicator_bins;
        b.n_bins = n_bins;
        return b;
    }
};

// One cross-section regression: basis columns are built from the given
// regressor arrays once, the Gram matrix is factorised once, and any number
// of targets can then be projected. Throws InsufficientPaths when
// n_paths < 10 x basis dimension and SingularRegression when the normal
// equations stay rank-deficient after ridge escalation.
class StepRegression {
  public:
    StepRegression(const std::vector<const double*>& vars, std::size_t n_paths,
                   const RegressionBasis& basis, const ExecPolicy& policy);

    std::size_t basis_dim() const { return n_basis_; }

    // Projects target onto the basis; fitted_out has n_paths entries.
    void fit(const double* target, double* fitted_out,
             std::vector<double>* coeffs_out = nullptr) const;

    // Coefficient-level access for diagnostics.
    std::vector<double> fit_coeffs(const double* target) const;

  private:
    void factorize(double ridge);

    std::size_t n_paths_;
    std::size_t n_basis_;
    ExecPolicy policy_;
    std::vector<std::vector<double>> columns_; // n_basis arrays of n_paths
    std::vector<double> chol_;                 // lower Cholesky factor of Gram
};

} // namespace memgame

#endif
