#include "memgame/regression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memgame/errors.hpp"

namespace memgame {

namespace {

// All exponent tuples with total degree <= degree over n_vars variables.
void enumerate_monomials(std::size_t n_vars, int degree,
                         std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
    if (current.size() == n_vars) {
        out.push_back(current);
        return;
    }
    int used = 0;
    for (int e : current) used += e;
    for (int e = 0; e + used <= degree; ++e) {
        current.push_back(e);
        enumerate_monomials(n_vars, degree, current, out);
        current.pop_back();
    }
}

// Cholesky of an m x m SPD matrix in place; returns false if not SPD.
bool cholesky(std::vector<double>& a, std::size_t m) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a[i * m + j];
            for (std::size_t k = 0; k < j; ++k) sum -= a[i * m + k] * a[j * m + k];
            if (i == j) {
                if (!(sum > 0.0)) return false;
                a[i * m + i] = std::sqrt(sum);
            } else {
                a[i * m + j] = sum / a[j * m + j];
            }
        }
    }
    return true;
}

void chol_solve(const std::vector<double>& l, std::size_t m, std::vector<double>& b) {
    for (std::size_t i = 0; i < m; ++i) {
        double sum = b[i];
        for (std::size_t k = 0; k < i; ++k) sum -= l[i * m + k] * b[k];
        b[i] = sum / l[i * m + i];
    }
    for (std::size_t ii = m; ii-- > 0;) {
        double sum = b[ii];
        for (std::size_t k = ii + 1; k < m; ++k) sum -= l[k * m + ii] * b[k];
        b[ii] = sum / l[ii * m + ii];
    }
}

} // namespace

StepRegression::StepRegression(const std::vector<const double*>& vars,
                               std::size_t n_paths, const RegressionBasis& basis,
                               const ExecPolicy& policy)
    : n_paths_(n_paths), n_basis_(0), policy_(policy) {
    if (basis.kind == RegressionBasis::Kind::polynomial) {
        std::vector<std::vector<int>> exponents;
        std::vector<int> current;
        enumerate_monomials(vars.size(), basis.degree, current, exponents);
        n_basis_ = exponents.size();
        columns_.assign(n_basis_, std::vector<double>(n_paths_));
        parallel_for(policy_, n_paths_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                for (std::size_t b = 0; b < n_basis_; ++b) {
                    double v = 1.0;
                    for (std::size_t k = 0; k < vars.size(); ++k)
                        for (int e = 0; e < exponents[b][k]; ++e) v *= vars[k][p];
                    columns_[b][p] = v;
                }
            }
        });
    } else {
        // quantile bins of the first regressor
        if (vars.empty()) throw SingularRegression("indicator basis needs a regressor");
        std::vector<double> sorted(vars[0], vars[0] + n_paths_);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> edges;
        for (std::size_t b = 1; b < basis.n_bins; ++b)
            edges.push_back(sorted[(b * n_paths_) / basis.n_bins]);
        n_basis_ = basis.n_bins;
        columns_.assign(n_basis_, std::vector<double>(n_paths_, 0.0));
        parallel_for(policy_, n_paths_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                const double x = vars[0][p];
                std::size_t bin = std::upper_bound(edges.begin(), edges.end(), x) -
                                  edges.begin();
                columns_[bin][p] = 1.0;
            }
        });
    }

    if (n_paths_ < 10 * n_basis_)
        throw InsufficientPaths("regression needs at least 10x the basis dimension (" +
                                std::to_string(n_basis_) + " columns, " +
                                std::to_string(n_paths_) + " paths)");
    factorize(basis.ridge);
}

void StepRegression::factorize(double ridge) {
    const std::size_t m = n_basis_;
    // Gram matrix G = A^T A / n, accumulated deterministically.
    std::vector<double> gram = block_reduce<std::vector<double>>(
        policy_, n_paths_,
        [&](std::vector<double>& acc, std::size_t lo, std::size_t hi) {
            acc.assign(m * m, 0.0);
            for (std::size_t p = lo; p < hi; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    const double ai = columns_[i][p];
                    for (std::size_t j = 0; j <= i; ++j)
                        acc[i * m + j] += ai * columns_[j][p];
                }
        },
        [&](std::vector<double>& total, const std::vector<double>& part) {
            if (total.empty()) total.assign(m * m, 0.0);
            for (std::size_t k = 0; k < part.size(); ++k) total[k] += part[k];
        });
    if (gram.empty()) gram.assign(m * m, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n_paths_);
    double trace = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            gram[i * m + j] *= inv_n;
            gram[j * m + i] = gram[i * m + j];
        }
        trace += gram[i * m + i];
    }
    const double scale = trace > 0.0 ? trace / static_cast<double>(m) : 1.0;

    double lam = ridge;
    for (int attempt = 0; attempt < 4; ++attempt) {
        chol_ = gram;
        for (std::size_t i = 0; i < m; ++i) chol_[i * m + i] += lam * scale;
        if (cholesky(chol_, m)) return;
        lam = lam > 0.0 ? lam * 100.0 : 1e-10;
    }
    throw SingularRegression("normal equations not positive definite after ridge escalation");
}

std::vector<double> StepRegression::fit_coeffs(const double* target) const {
    const std::size_t m = n_basis_;
    std::vector<double> rhs = block_reduce<std::vector<double>>(
        policy_, n_paths_,
        [&](std::vector<double>& acc, std::size_t lo, std::size_t hi) {
            acc.assign(m, 0.0);
            for (std::size_t p = lo; p < hi; ++p) {
                const double y = target[p];
                for (std::size_t i = 0; i < m; ++i) acc[i] += columns_[i][p] * y;
            }
        },
        [&](std::vector<double>& total, const std::vector<double>& part) {
            if (total.empty()) total.assign(m, 0.0);
            for (std::size_t k = 0; k < part.size(); ++k) total[k] += part[k];
        });
    if (rhs.empty()) rhs.assign(m, 0.0);
    for (double& v : rhs) v /= static_cast<double>(n_paths_);
    chol_solve(chol_, m, rhs);
    return rhs;
}

void StepRegression::fit(const double* target, double* fitted_out,
                         std::vector<double>* coeffs_out) const {
    const std::vector<double> beta = fit_coeffs(target);
    parallel_for(policy_, n_paths_, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            double v = 0.0;
            for (std::size_t b = 0; b < n_basis_; ++b) v += beta[b] * columns_[b][p];
            fitted_out[p] = v;
        }
    });
    if (coeffs_out) *coeffs_out = beta;
}

} // namespace memgame
