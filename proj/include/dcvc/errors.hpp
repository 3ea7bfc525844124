#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace dcvc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed scenario files, bad index sets.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A load schedule without breakpoints.
class EmptySchedule : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// The subset enumeration would visit more than 2^20 subsets.
class TooManyFlexibleLoads : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Curtailment was requested for an equilibrium that is not the gated
/// boundary point of the all-flexible subset.
class WrongEquilibriumKind : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// The flexible-load gate hit (or crossed) its pole 1 + kappa*(g_bar - g) = 0.
class SingularGate : public NumericalError {
public:
    SingularGate(const std::string& what, std::size_t load,
                 double time = std::numeric_limits<double>::quiet_NaN())
        : NumericalError(what), load_(load), time_(time) {}

    std::size_t load() const noexcept { return load_; }
    /// Simulation time of the event, NaN outside of integration.
    double time() const noexcept { return time_; }

private:
    std::size_t load_;
    double time_;
};

/// An integration step produced a non-finite or out-of-orthant state.
class StepRejected : public NumericalError {
public:
    StepRejected(const std::string& what, double time)
        : NumericalError(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// The secular solver could not bracket the expected number of roots.
class NumericalBreakdown : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace dcvc
