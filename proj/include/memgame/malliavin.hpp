#ifndef MEMGAME_MALLIAVIN_HPP
#define MEMGAME_MALLIAVIN_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memgame/noise.hpp"
#include "memgame/regression.hpp"
#include "memgame/time_grid.hpp"

namespace memgame {

// A Wiener functional with a closed-form projected Malliavin derivative
// E[D_t F | F_t]. Only the projection is ever evaluated; it is all the
// identity checks and the adjoint solver need. `levels` holds B(t_s) for
// s = 0..n_steps of one path.
struct WienerFunctional {
    std::string name;
    std::function<double(const std::vector<double>& levels, const TimeGrid&)> value;
    // E[D_t F | F_t] evaluated at the left endpoint of slice s
    std::function<double(const std::vector<double>& levels, const TimeGrid&,
                         std::size_t s)>
        projected_derivative;
    double analytic_mean = 0.0;        // E[F]
    double analytic_second_moment = 0.0; // E[F^2], used for tolerance scales
    bool has_derivative = true;

    // catalog
    static WienerFunctional constant(double c);
    static WienerFunctional brownian(double t0);          // B(t0)
    static WienerFunctional brownian_squared(double t0);  // B(t0)^2
    static WienerFunctional brownian_cubed(double t0);    // B(t0)^3
    static WienerFunctional increment(double t0, double t1);
    static WienerFunctional product(double t0, double t1); // B(t0) B(t1), t0 < t1
    // a F + b G (catalog closure under linear combination)
    static WienerFunctional combine(double a, const WienerFunctional& f,
                                    double b, const WienerFunctional& g);
};

struct IdentityReport {
    std::string functional;
    std::string check;
    double lhs = 0.0;
    double rhs = 0.0;
    double se_lhs = 0.0;
    double se_rhs = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Monte Carlo configuration of the identity checks. Paths are generated and
// consumed in fixed-size blocks, so the memory footprint stays flat at large
// path counts and the accumulation order (hence the result) never changes.
struct IdentityCheckConfig {
    std::size_t n_paths = 100000;
    uint64_t seed = 1;
    // sides must agree within 3(se_lhs + se_rhs) + C dt max(1, |lhs|, |rhs|);
    // C is calibrated on the B(1)^2 case
    double discretization_constant = 2.0;
    ExecPolicy policy = ExecPolicy::parallel();
};

// adapted integrand phi(t_s) evaluated on the Brownian path
using AdaptedProcess =
    std::function<double(const std::vector<double>& levels, const TimeGrid&,
                         std::size_t s)>;

// E[F int phi dB] = E[int E[D_t F|F_t] phi dt]
IdentityReport check_duality(const WienerFunctional& f, const AdaptedProcess& phi,
                             const TimeGrid& grid, const IdentityCheckConfig& cfg);

// F = E[F] + int E[D_t F|F_t] dB; lhs of the report is the mean-square
// reconstruction error, rhs is 0
IdentityReport check_clark_ocone(const WienerFunctional& f, const TimeGrid& grid,
                                 const IdentityCheckConfig& cfg);

// E[int E[D_t F|F_t]^2 dt] = Var(F)
IdentityReport check_variance_identity(const WienerFunctional& f, const TimeGrid& grid,
                                       const IdentityCheckConfig& cfg);

// Regression estimate of E[D_t F | F_t] per path at one step, from the
// localised duality E[F dB_t | F_t] ~ E[D_t F|F_t] dt. Regressors default to
// the Brownian level at the step; callers with richer state pass their own.
std::vector<double> projected_derivative_regression(
    const std::vector<double>& f_values, const NoiseBatch& noise, std::size_t step,
    const RegressionBasis& basis, const ExecPolicy& policy = ExecPolicy::parallel(),
    const std::vector<const double*>& regressors = {});

} // namespace memgame

#endif
