#pragma once

// Load dynamics. Inflexible loads follow g_i' = -dP_i; flexible loads are
// gated by the stabilizer, g_i' = -alpha_i(g_i) dP_i, where the gate closes
// (alpha_i = 0) at the load's target conductance g_bar_i.

#include "dcvc/network.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace dcvc {

struct ControllerParams {
    double kappa = kDefaultKappa;
    std::vector<double> g_bar;  ///< per flexible load, indexed by load position
    std::vector<double> gamma;  ///< per flexible load, indexed by load position

    static ControllerParams from(const SystemConfig& cfg);
};

/// Gate value alpha_i. Always 1 for inflexible loads. Throws SingularGate when
/// |1 + kappa (g_bar_i - g_i)| < 1e-12.
double gate(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s, std::size_t i);

/// Time derivative of the conductance vector.
std::vector<double> rhs(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s);

struct Breakpoint {
    double t = 0.0;
    double P0 = 0.0;
};

/// Per-load piecewise-linear demand profiles, held constant outside the
/// breakpoint range.
class DemandSchedule {
public:
    DemandSchedule() = default;
    explicit DemandSchedule(std::vector<std::vector<Breakpoint>> loads);
    static DemandSchedule constant(const std::vector<double>& P0);

    std::size_t size() const noexcept { return loads_.size(); }
    std::vector<double> evaluate(double t) const;
    void evaluate(double t, std::vector<double>& out) const;
    /// Time after which every load's demand is constant.
    double last_breakpoint_time() const noexcept { return t_last_; }
    const std::vector<Breakpoint>& breakpoints(std::size_t i) const { return loads_.at(i); }

private:
    std::vector<std::vector<Breakpoint>> loads_;
    double t_last_ = 0.0;
};

struct SimOptions {
    double dt = 1e-3;
    double t_end = 100.0;
    double collapse_voltage_fraction = 0.02;
    double settle_tol = 1e-9;
    /// Duration the settle tolerance must hold; defaults to 100 dt.
    std::optional<double> settle_window;
    /// Record every k-th step (the initial and final states are always kept).
    std::size_t sample_stride = 1;
    bool project_nonnegative = true;

    /// dt = 1e-3 g_l / P_max, scaled to the network's natural time constant.
    static double default_dt(const SystemConfig& cfg);
    double effective_settle_window() const { return settle_window.value_or(100.0 * dt); }
    void validate() const;
};

enum class Termination { converged, collapsed, horizon_reached };

const char* to_string(Termination t);

struct SimEvent {
    double t = 0.0;
    std::string kind;  ///< "projection", "overload_onset", "overload_cleared"
    std::string detail;
};

struct SimTrace {
    std::vector<double> t;
    std::vector<ConductanceState> g;
    std::vector<PowerFlow> flow;
    std::vector<std::vector<double>> demand;
    std::vector<double> max_rate;  ///< max_i |g_i'| at the sample
    Termination termination = Termination::horizon_reached;
    double termination_time = 0.0;
    std::size_t steps = 0;
    std::size_t projection_count = 0;
    std::vector<SimEvent> events;
};

/// Fixed-step classical RK4 over the schedule. The controller targets are
/// recomputed from the instantaneous demand at every stage. Stops early on
/// collapse (v < fraction * E) or once max |g'| stays under settle_tol for the
/// settle window after the schedule's last breakpoint.
SimTrace integrate(const SystemConfig& cfg, const ConductanceState& s0, const DemandSchedule& schedule,
                   const SimOptions& opts);

namespace detail {
/// Vector field on a raw state; throws SingularGate at the gate pole.
void vector_field(const SystemConfig& cfg, std::span<const double> g, std::span<double> out);
}  // namespace detail

}  // namespace dcvc
