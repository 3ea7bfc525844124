#pragma once

// Equilibria of the gated dynamics. Every equilibrium belongs to a family
// indexed by the subset G of flexible loads whose gate is closed
// (g_i = g_bar_i); all remaining loads meet their demand exactly. Within a
// family the aggregate conductance of the ungated loads solves a scalar
// quadratic, giving at most two points.

#include "dcvc/dynamics.hpp"
#include "dcvc/network.hpp"

#include <string>
#include <vector>

namespace dcvc {

enum class Branch {
    low,   ///< smaller aggregate root (the power-flow "nose" upper half)
    high,  ///< larger aggregate root
    fold,  ///< double root at the capacity bound; non-hyperbolic
};

/// Position relative to M = { g : sum g_i < g_l }.
enum class Region { interior_M, boundary_M, exterior_M };

const char* to_string(Branch b);
const char* to_string(Region r);

/// Relative tolerance on |g_eq - g_l| used to tag the boundary of M.
inline constexpr double kBoundaryTol = 1e-12;

Region region_of(const SystemConfig& cfg, double g_eq);

struct Equilibrium {
    ConductanceState g_star;
    IndexSet subset_G;
    Branch branch = Branch::low;
    Region region = Region::interior_M;
    PowerFlow flow;
};

/// Builds an Equilibrium record (flow and region) for a known fixed point.
Equilibrium make_equilibrium(const SystemConfig& cfg, ConductanceState g, IndexSet G, Branch branch);

/// Largest fixed-point residual: |alpha_i| over G and |dP_i| over the rest.
double equilibrium_residual(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq);

enum class SubsetStatus {
    feasible,
    capacity_exceeded,  ///< ungated demand exceeds the line capacity left by G
    negative_target,    ///< some g_bar_i, i in G, is negative
    gate_pole,          ///< every candidate sits on an ungated flexible gate's pole
};

const char* to_string(SubsetStatus s);

struct SubsetSolution {
    std::vector<Equilibrium> equilibria;
    SubsetStatus status = SubsetStatus::feasible;
    std::string diagnostic;
};

/// Solves one family. G must be a subset of the flexible loads.
SubsetSolution solve_subset(const SystemConfig& cfg, const ControllerParams& ctrl, const IndexSet& G);
std::vector<Equilibrium> solve_subset_equilibria(const SystemConfig& cfg, const ControllerParams& ctrl,
                                                 const IndexSet& G);

inline constexpr std::size_t kMaxEnumeratedFlexible = 20;

/// Union over every subset G of the flexible loads, deduplicated with an
/// absolute tolerance of 1e-9 in conductance space.
std::vector<Equilibrium> enumerate_equilibria(const SystemConfig& cfg, const ControllerParams& ctrl);

struct CurtailmentReport {
    std::vector<std::size_t> loads;     ///< the flexible loads
    std::vector<double> dP;             ///< measured mismatch at the equilibrium
    std::vector<double> dP_target;      ///< (P_max - P0_tot) / gamma_i
    double deficit = 0.0;               ///< P_max - P0_tot
    double multiplier = 0.0;            ///< common value of theta_i dP_i
    double stationarity_violation = 0.0;
    double feasibility_violation = 0.0;
    double max_violation = 0.0;
};

/// Curtailment shares of the flexible loads and the KKT residuals of the
/// weighted least-squares allocation problem. Requires the gated equilibrium
/// of G = F on the boundary of M.
CurtailmentReport curtailment_report(const SystemConfig& cfg, const Equilibrium& eq);

/// Shares measured at an arbitrary state (used on simulated end states).
CurtailmentReport curtailment_at(const SystemConfig& cfg, const ConductanceState& s);

}  // namespace dcvc
