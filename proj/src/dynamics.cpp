#include "dcvc/dynamics.hpp"

#include "dcvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcvc {

namespace {

constexpr double kPoleGuard = 1e-12;

double gate_value(double kappa, double g_bar, double g, std::size_t i) {
    const double x = kappa * (g_bar - g);
    const double den = 1.0 + x;
    if (std::abs(den) < kPoleGuard) {
        std::ostringstream msg;
        msg << "gate of load " << i + 1 << " is singular (g = " << g << ", g_bar = " << g_bar << ")";
        throw SingularGate(msg.str(), i);
    }
    return x / den;
}

}  // namespace

ControllerParams ControllerParams::from(const SystemConfig& cfg) {
    ControllerParams c;
    c.kappa = cfg.kappa();
    c.g_bar.assign(cfg.size(), 0.0);
    c.gamma.assign(cfg.size(), 0.0);
    for (std::size_t i : cfg.flexible()) {
        c.g_bar[i] = cfg.g_bar(i);
        c.gamma[i] = cfg.gamma(i);
    }
    return c;
}

double gate(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s, std::size_t i) {
    if (i >= cfg.size() || s.size() != cfg.size()) throw ConfigError("load index or state size out of range");
    if (!cfg.is_flexible(i)) return 1.0;
    return gate_value(ctrl.kappa, ctrl.g_bar.at(i), s[i], i);
}

std::vector<double> rhs(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s) {
    if (s.size() != cfg.size()) throw ConfigError("state dimension does not match the system");
    std::vector<double> out(s.size());
    detail::mismatch(cfg, s.values(), out);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double a = cfg.is_flexible(i) ? gate_value(ctrl.kappa, ctrl.g_bar.at(i), s[i], i) : 1.0;
        out[i] = -a * out[i];
    }
    return out;
}

namespace detail {

void vector_field(const SystemConfig& cfg, std::span<const double> g, std::span<double> out) {
    mismatch(cfg, g, out);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = cfg.is_flexible(i) ? gate_value(cfg.kappa(), cfg.g_bar(i), g[i], i) : 1.0;
        out[i] = -a * out[i];
    }
}

}  // namespace detail

DemandSchedule::DemandSchedule(std::vector<std::vector<Breakpoint>> loads) : loads_(std::move(loads)) {
    for (std::size_t i = 0; i < loads_.size(); ++i) {
        const auto& bp = loads_[i];
        if (bp.empty()) throw EmptySchedule("load " + std::to_string(i + 1) + " has no demand breakpoints");
        for (std::size_t k = 0; k < bp.size(); ++k) {
            if (!std::isfinite(bp[k].t) || !std::isfinite(bp[k].P0) || bp[k].P0 < 0.0)
                throw ConfigError("load " + std::to_string(i + 1) + ": breakpoints must be finite with P0 >= 0");
            if (k > 0 && !(bp[k].t > bp[k - 1].t))
                throw ConfigError("load " + std::to_string(i + 1) + ": breakpoint times must be increasing");
        }
        t_last_ = std::max(t_last_, bp.back().t);
    }
}

DemandSchedule DemandSchedule::constant(const std::vector<double>& P0) {
    std::vector<std::vector<Breakpoint>> loads;
    loads.reserve(P0.size());
    for (double p : P0) loads.push_back({Breakpoint{0.0, p}});
    return DemandSchedule(std::move(loads));
}

void DemandSchedule::evaluate(double t, std::vector<double>& out) const {
    out.resize(loads_.size());
    for (std::size_t i = 0; i < loads_.size(); ++i) {
        const auto& bp = loads_[i];
        if (t <= bp.front().t) {
            out[i] = bp.front().P0;
            continue;
        }
        if (t >= bp.back().t) {
            out[i] = bp.back().P0;
            continue;
        }
        auto hi = std::upper_bound(bp.begin(), bp.end(), t,
                                   [](double x, const Breakpoint& b) { return x < b.t; });
        auto lo = hi - 1;
        const double w = (t - lo->t) / (hi->t - lo->t);
        out[i] = lo->P0 + w * (hi->P0 - lo->P0);
    }
}

std::vector<double> DemandSchedule::evaluate(double t) const {
    std::vector<double> out;
    evaluate(t, out);
    return out;
}

double SimOptions::default_dt(const SystemConfig& cfg) { return 1e-3 * cfg.g_l() / cfg.P_max(); }

void SimOptions::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be finite and > 0");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be finite and > 0");
    if (!(collapse_voltage_fraction > 0.0 && collapse_voltage_fraction < 1.0))
        throw ConfigError("collapse_voltage_fraction must lie in (0, 1)");
    if (!(settle_tol > 0.0)) throw ConfigError("settle_tol must be > 0");
    if (settle_window && !(*settle_window >= 0.0)) throw ConfigError("settle_window must be >= 0");
    if (sample_stride == 0) throw ConfigError("sample_stride must be >= 1");
}

const char* to_string(Termination t) {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::collapsed: return "collapsed";
        case Termination::horizon_reached: return "horizon_reached";
    }
    return "unknown";
}

namespace {

double max_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

// Demand-dependent state of the vector field at one instant.
class TimedField {
public:
    TimedField(const SystemConfig& base, const DemandSchedule& schedule)
        : base_(base), schedule_(schedule) {}

    SystemConfig config_at(double t) {
        schedule_.evaluate(t, p0_);
        return base_.with_demand(p0_);
    }

    void operator()(double t, std::span<const double> g, std::span<double> out) {
        detail::vector_field(config_at(t), g, out);
    }

private:
    const SystemConfig& base_;
    const DemandSchedule& schedule_;
    std::vector<double> p0_;
};

void record(SimTrace& trace, const SystemConfig& cfg_t, double t, const std::vector<double>& g, double rate) {
    trace.t.push_back(t);
    trace.g.emplace_back(g);
    trace.flow.push_back(power_flow(cfg_t, trace.g.back()));
    trace.demand.push_back(cfg_t.demand());
    trace.max_rate.push_back(rate);
}

}  // namespace

SimTrace integrate(const SystemConfig& cfg, const ConductanceState& s0, const DemandSchedule& schedule,
                   const SimOptions& opts) {
    opts.validate();
    if (s0.size() != cfg.size()) throw ConfigError("initial state dimension does not match the system");
    if (schedule.size() != cfg.size()) throw ConfigError("demand schedule does not cover every load");

    const std::size_t n = cfg.size();
    const double dt = opts.dt;
    const double v_collapse = opts.collapse_voltage_fraction * cfg.E();
    const double window = opts.effective_settle_window();
    const auto total_steps = static_cast<std::size_t>(std::ceil(opts.t_end / dt - 1e-9));

    TimedField field(cfg, schedule);
    SimTrace trace;

    std::vector<double> g = s0.vector();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), next(n);
    std::vector<bool> projected(n, false);

    SystemConfig cfg_t = field.config_at(0.0);
    detail::vector_field(cfg_t, g, k1);
    double rate = max_abs(k1);
    record(trace, cfg_t, 0.0, g, rate);
    bool overloaded = cfg_t.epsilon() > 0.0;
    if (overloaded) trace.events.push_back({0.0, "overload_onset", "demand exceeds network capacity at start"});

    bool settling = false;
    double settle_since = 0.0;
    double t = 0.0;
    for (std::size_t step = 1; step <= total_steps; ++step) {
        const double t_new = static_cast<double>(step) * dt;
        const double h = t_new - t;
        try {
            for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] + 0.5 * h * k1[i];
            field(t + 0.5 * h, tmp, k2);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] + 0.5 * h * k2[i];
            field(t + 0.5 * h, tmp, k3);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] + h * k3[i];
            field(t_new, tmp, k4);
        } catch (const SingularGate& e) {
            throw SingularGate(e.what(), e.load(), t);
        }
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = g[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(next[i])) {
                std::ostringstream msg;
                msg << "non-finite conductance for load " << i + 1 << " at t = " << t_new;
                throw StepRejected(msg.str(), t_new);
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (next[i] >= 0.0) {
                projected[i] = false;
                continue;
            }
            if (!opts.project_nonnegative) {
                std::ostringstream msg;
                msg << "load " << i + 1 << " left the non-negative orthant at t = " << t_new;
                throw StepRejected(msg.str(), t_new);
            }
            next[i] = 0.0;
            ++trace.projection_count;
            if (!projected[i]) {
                trace.events.push_back({t_new, "projection", "load " + std::to_string(i + 1) + " clamped at g = 0"});
                projected[i] = true;
            }
        }

        const SystemConfig cfg_new = field.config_at(t_new);
        for (std::size_t i : cfg.flexible()) {
            const double before = 1.0 + cfg_t.kappa() * (cfg_t.g_bar(i) - g[i]);
            const double after = 1.0 + cfg_new.kappa() * (cfg_new.g_bar(i) - next[i]);
            if ((before > 0.0) != (after > 0.0)) {
                std::ostringstream msg;
                msg << "load " << i + 1 << " crossed its gate pole between t = " << t << " and t = " << t_new;
                throw SingularGate(msg.str(), i, t_new);
            }
        }

        const bool now_overloaded = cfg_new.epsilon() > 0.0;
        if (now_overloaded != overloaded) {
            trace.events.push_back({t_new, now_overloaded ? "overload_onset" : "overload_cleared",
                                    now_overloaded ? "total demand rose above P_max" : "total demand fell below P_max"});
            overloaded = now_overloaded;
        }

        g.swap(next);
        t = t_new;
        cfg_t = cfg_new;
        try {
            detail::vector_field(cfg_t, g, k1);
        } catch (const SingularGate& e) {
            throw SingularGate(e.what(), e.load(), t);
        }
        rate = max_abs(k1);
        trace.steps = step;

        const bool collapsed = detail::voltage(cfg_t, g) < v_collapse;
        bool converged = false;
        if (!collapsed && t >= schedule.last_breakpoint_time() && rate < opts.settle_tol) {
            if (!settling) {
                settling = true;
                settle_since = t;
            }
            converged = (t - settle_since) >= window;
        } else {
            settling = false;
        }

        const bool last = collapsed || converged || step == total_steps;
        if (last || step % opts.sample_stride == 0) record(trace, cfg_t, t, g, rate);
        if (collapsed) {
            trace.termination = Termination::collapsed;
            trace.termination_time = t;
            return trace;
        }
        if (converged) {
            trace.termination = Termination::converged;
            trace.termination_time = t;
            return trace;
        }
    }
    trace.termination = Termination::horizon_reached;
    trace.termination_time = t;
    return trace;
}

}  // namespace dcvc
