#pragma once

#include "dcvc/scenario.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dcvc {

enum class SweepParam { p0_scale, g_l, kappa };

const char* to_string(SweepParam p);
/// Throws ConfigError on anything but "p0_scale", "g_l" or "kappa".
SweepParam parse_sweep_param(const std::string& name);

/// The scenario with one parameter replaced (or, for p0_scale, every demand
/// breakpoint multiplied).
Scenario with_parameter(const Scenario& sc, SweepParam p, double value);

struct BranchSummary {
    double g_eq = 0.0;
    double v = 0.0;
    Classification verdict = Classification::stable;
};

struct SweepPoint {
    double value = 0.0;
    double P0_total = 0.0;
    double P_max = 0.0;
    std::size_t equilibria = 0;
    std::size_t stable = 0;
    /// The two ungated roots (or the single fold root, stored as low).
    std::optional<BranchSummary> ungated_low;
    std::optional<BranchSummary> ungated_high;
    /// See operating_point().
    std::optional<Equilibrium> operating;
    std::optional<SimTrace> simulation;
};

struct FoldPoint {
    double value = 0.0;
    double g_eq = 0.0;
    double v = 0.0;
};

struct SweepResult {
    SweepParam param = SweepParam::p0_scale;
    std::vector<SweepPoint> points;
    /// Parameter value where the ungated roots merge, refined by bisection
    /// inside the first bracketing grid interval.
    std::optional<FoldPoint> fold;
};

/// Equilibria are evaluated at the demand reached after the last breakpoint.
SweepResult run_sweep(const Scenario& sc, SweepParam p, double from, double to, std::size_t steps, bool simulate);

void write_sweep_csv(std::ostream& os, const SweepResult& r, std::size_t n_loads);

namespace cli {

/// Entry point of the dcvc executable. args excludes the program name.
/// Returns 0 on success (converged or horizon reached), 2 on voltage
/// collapse, 1 on any error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cli

}  // namespace dcvc
