#pragma once

// Static power flow of a star DC network: one source of voltage E behind a
// single line of conductance g_l feeding n parallel loads of conductance g_i.
// Units are SI throughout (volts, siemens, watts).

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace dcvc {

inline constexpr double kDefaultKappa = 10.0;

/// Sorted, duplicate-free list of zero-based load indices.
using IndexSet = std::vector<std::size_t>;

struct NetworkParams {
    double E = 0.0;    ///< source voltage
    double g_l = 0.0;  ///< line conductance
};

enum class LoadKind { flexible, inflexible };

struct LoadSpec {
    double P0 = 0.0;  ///< nominal demand
    LoadKind kind = LoadKind::inflexible;
    double theta = 1.0;  ///< curtailment weight, read only for flexible loads
};

/// Network parameters plus the ordered load list, and every constant derived
/// from them. Loads must be stored flexible-first, so the flexible set is the
/// index prefix {0, ..., n_F - 1}.
class SystemConfig {
public:
    SystemConfig(NetworkParams params, std::vector<LoadSpec> loads,
                 double kappa = kDefaultKappa);

    const NetworkParams& params() const noexcept { return params_; }
    double E() const noexcept { return params_.E; }
    double g_l() const noexcept { return params_.g_l; }
    double kappa() const noexcept { return kappa_; }

    std::size_t size() const noexcept { return loads_.size(); }
    const std::vector<LoadSpec>& loads() const noexcept { return loads_; }
    const IndexSet& flexible() const noexcept { return flexible_; }
    const IndexSet& inflexible() const noexcept { return inflexible_; }
    std::size_t num_flexible() const noexcept { return flexible_.size(); }
    bool is_flexible(std::size_t i) const { return loads_.at(i).kind == LoadKind::flexible; }

    double P0(std::size_t i) const { return loads_.at(i).P0; }
    std::vector<double> demand() const;
    double P0_total() const noexcept { return P0_total_; }
    /// Network capacity E^2 g_l / 4.
    double P_max() const noexcept { return P_max_; }
    /// Overload margin P0_total - P_max (positive under overload).
    double epsilon() const noexcept { return P0_total_ - P_max_; }

    /// Curtailment share theta_i * sum_{j in F} 1/theta_j; zero for inflexible loads.
    double gamma(std::size_t i) const { return gamma_.at(i); }
    /// Target conductance of a flexible load; zero for inflexible loads.
    double g_bar(std::size_t i) const { return g_bar_.at(i); }

    SystemConfig with_demand(std::span<const double> P0) const;
    SystemConfig with_line_conductance(double g_l) const;
    SystemConfig with_kappa(double kappa) const;

private:
    NetworkParams params_;
    std::vector<LoadSpec> loads_;
    double kappa_;
    IndexSet flexible_;
    IndexSet inflexible_;
    double P0_total_ = 0.0;
    double P_max_ = 0.0;
    std::vector<double> gamma_;
    std::vector<double> g_bar_;
};

/// Vector of load conductances. Every component is finite and non-negative.
class ConductanceState {
public:
    ConductanceState() = default;
    explicit ConductanceState(std::vector<double> g);

    std::size_t size() const noexcept { return g_.size(); }
    double operator[](std::size_t i) const { return g_[i]; }
    std::span<const double> values() const noexcept { return g_; }
    const std::vector<double>& vector() const noexcept { return g_; }
    double sum() const noexcept;

private:
    std::vector<double> g_;
};

struct PowerFlow {
    double v = 0.0;         ///< load bus voltage
    std::vector<double> P;  ///< per-load power
    std::vector<double> dP; ///< mismatch P_i - P0_i
    double P_tot = 0.0;
    double g_eq = 0.0;      ///< equivalent (summed) load conductance
};

/// Throws ConfigError unless S is sorted, unique and inside [0, n).
void validate_index_set(const IndexSet& S, std::size_t n);
IndexSet complement(const IndexSet& S, std::size_t n);

double voltage(const SystemConfig& cfg, const ConductanceState& s);
PowerFlow power_flow(const SystemConfig& cfg, const ConductanceState& s);
double aggregate_power(const SystemConfig& cfg, const ConductanceState& s, const IndexSet& S);

/// dP_i/dg_i, the own-conductance sensitivity of a load's power.
double power_sensitivity(const SystemConfig& cfg, const ConductanceState& s, std::size_t i);

struct MaxTransfer {
    double P_max;     ///< largest aggregate power deliverable to S
    double g_S_star;  ///< aggregate conductance of S achieving it
};

/// Capacity of the line towards S with the complement's conductances frozen.
MaxTransfer max_transfer(const SystemConfig& cfg, const IndexSet& S, const ConductanceState& s);

namespace detail {
// Span-based kernels shared with the integrator, whose intermediate stages
// are not required to be valid ConductanceStates.
double voltage(const SystemConfig& cfg, std::span<const double> g);
void mismatch(const SystemConfig& cfg, std::span<const double> g, std::span<double> dP);
}  // namespace detail

}  // namespace dcvc
