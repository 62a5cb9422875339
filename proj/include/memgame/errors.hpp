#ifndef MEMGAME_ERRORS_HPP
#define MEMGAME_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memgame {

// Grid / model construction errors.
struct InvalidHorizon : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonCommensurateDelay : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DeltaExceedsHorizon : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Simulation diverged past the guard rail.
struct NumericalBlowup : std::runtime_error {
    std::size_t path;
    std::size_t step;
    NumericalBlowup(std::size_t p, std::size_t s, double value)
        : std::runtime_error("numerical blowup at path " + std::to_string(p) +
                             ", step " + std::to_string(s) + " (|X| = " +
                             std::to_string(value) + ")"),
          path(p), step(s) {}
};

// Regression failures.
struct SingularRegression : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientPaths : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malliavin catalog lookup failed.
struct CatalogMiss : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Model evaluator received an out-of-domain value (e.g. ln of a non-positive).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Control perturbation left the admissible box.
struct AdmissibilityViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Closed-form consumption requested too close to the horizon.
struct HorizonBoundary : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Configuration file problems (CLI exit code 2).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

} // namespace memgame

#endif
