#pragma once

// The load-satisfiability game: each load is a player whose strategy is its
// own conductance and whose payoff is chosen so that the inflexible load
// dynamics are exactly myopic gradient ascent on it.

#include "dcvc/network.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dcvc {

/// Payoff of load i at its conductance g_i against the aggregate conductance
/// of all other loads.
double utility_at(const SystemConfig& cfg, std::size_t i, double g_i, double g_others);

double utility(const SystemConfig& cfg, const ConductanceState& s, std::size_t i);
/// d u_i / d g_i, equal to -dP_i.
double utility_gradient(const SystemConfig& cfg, const ConductanceState& s, std::size_t i);
/// d^2 u_i / d g_i^2, equal to -dP_i/dg_i.
double utility_curvature(const SystemConfig& cfg, const ConductanceState& s, std::size_t i);

struct LneTolerances {
    double grad = 0.0;
    double curv = 0.0;

    /// 1e-8 (E g_l)^2 on the gradient and 1e-10 (E g_l)^2 on the curvature.
    static LneTolerances defaults(const SystemConfig& cfg);
};

struct GameCheckReport {
    ConductanceState point;
    std::vector<double> gradient;
    std::vector<double> curvature;
    bool is_lne = false;          ///< strict first- and second-order test holds for every player
    bool is_equilibrium = false;  ///< first-order test alone
};

/// Second-order sufficient test for a strict local Nash equilibrium. Values
/// sitting exactly on a tolerance count as failures.
GameCheckReport check_lne(const SystemConfig& cfg, const ConductanceState& s, const LneTolerances& tol);
GameCheckReport check_lne(const SystemConfig& cfg, const ConductanceState& s);

enum class DominanceVerdict {
    dominant_at_infinity,  ///< utility strictly increasing over the grid tail
    not_increasing,
};

struct DominanceScan {
    DominanceVerdict verdict = DominanceVerdict::not_increasing;
    /// First grid index from which utility is strictly increasing to the end.
    std::optional<std::size_t> increasing_from;
    std::vector<double> utility;
    /// Secant slope over the last two grid points.
    double tail_slope = 0.0;
};

/// Evaluates load i's utility along an increasing grid of own conductances
/// with the opponents' aggregate conductance held fixed. Numerical evidence
/// only; the dominant strategy lives at infinity.
DominanceScan dominance_scan(const SystemConfig& cfg, std::size_t i, double g_others,
                             std::span<const double> grid);

}  // namespace dcvc
