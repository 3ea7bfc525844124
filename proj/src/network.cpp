#include "dcvc/network.hpp"

#include "dcvc/errors.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace dcvc {

namespace {

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

SystemConfig::SystemConfig(NetworkParams params, std::vector<LoadSpec> loads, double kappa)
    : params_(params), loads_(std::move(loads)), kappa_(kappa) {
    if (!positive_finite(params_.E)) throw ConfigError("source voltage E must be finite and > 0");
    if (!positive_finite(params_.g_l)) throw ConfigError("line conductance g_l must be finite and > 0");
    if (!positive_finite(kappa_)) throw ConfigError("controller gain kappa must be finite and > 0");

    const std::size_t n = loads_.size();
    bool seen_inflexible = false;
    for (std::size_t i = 0; i < n; ++i) {
        const LoadSpec& l = loads_[i];
        if (!std::isfinite(l.P0) || l.P0 < 0.0)
            throw ConfigError("load " + std::to_string(i + 1) + ": P0 must be finite and >= 0");
        if (l.kind == LoadKind::flexible) {
            if (seen_inflexible)
                throw ConfigError("loads must be ordered flexible-first (load " +
                                  std::to_string(i + 1) + " is flexible after an inflexible load)");
            if (!positive_finite(l.theta))
                throw ConfigError("load " + std::to_string(i + 1) + ": theta must be finite and > 0");
            flexible_.push_back(i);
        } else {
            seen_inflexible = true;
            inflexible_.push_back(i);
        }
    }

    P0_total_ = 0.0;
    for (const auto& l : loads_) P0_total_ += l.P0;
    P_max_ = params_.E * params_.E * params_.g_l / 4.0;

    double inv_theta_sum = 0.0;
    for (std::size_t i : flexible_) inv_theta_sum += 1.0 / loads_[i].theta;

    const double half_E_sq = (params_.E / 2.0) * (params_.E / 2.0);
    gamma_.assign(n, 0.0);
    g_bar_.assign(n, 0.0);
    for (std::size_t i : flexible_) {
        gamma_[i] = loads_[i].theta * inv_theta_sum;
        g_bar_[i] = loads_[i].P0 / half_E_sq + (P_max_ - P0_total_) / (gamma_[i] * half_E_sq);
    }
}

std::vector<double> SystemConfig::demand() const {
    std::vector<double> p(loads_.size());
    for (std::size_t i = 0; i < loads_.size(); ++i) p[i] = loads_[i].P0;
    return p;
}

SystemConfig SystemConfig::with_demand(std::span<const double> P0) const {
    if (P0.size() != loads_.size())
        throw ConfigError("demand vector has " + std::to_string(P0.size()) + " entries, expected " +
                          std::to_string(loads_.size()));
    auto loads = loads_;
    for (std::size_t i = 0; i < loads.size(); ++i) loads[i].P0 = P0[i];
    return SystemConfig(params_, std::move(loads), kappa_);
}

SystemConfig SystemConfig::with_line_conductance(double g_l) const {
    return SystemConfig(NetworkParams{params_.E, g_l}, loads_, kappa_);
}

SystemConfig SystemConfig::with_kappa(double kappa) const {
    return SystemConfig(params_, loads_, kappa);
}

ConductanceState::ConductanceState(std::vector<double> g) : g_(std::move(g)) {
    for (std::size_t i = 0; i < g_.size(); ++i) {
        if (!std::isfinite(g_[i]) || g_[i] < 0.0)
            throw ConfigError("conductance g_" + std::to_string(i + 1) + " must be finite and >= 0");
    }
}

double ConductanceState::sum() const noexcept { return std::accumulate(g_.begin(), g_.end(), 0.0); }

void validate_index_set(const IndexSet& S, std::size_t n) {
    for (std::size_t k = 0; k < S.size(); ++k) {
        if (S[k] >= n) throw ConfigError("index " + std::to_string(S[k]) + " out of range");
        if (k > 0 && S[k] <= S[k - 1]) throw ConfigError("index set must be sorted and unique");
    }
}

IndexSet complement(const IndexSet& S, std::size_t n) {
    validate_index_set(S, n);
    IndexSet out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (k < S.size() && S[k] == i) {
            ++k;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

namespace detail {

double voltage(const SystemConfig& cfg, std::span<const double> g) {
    const double g_eq = std::accumulate(g.begin(), g.end(), 0.0);
    return cfg.E() * cfg.g_l() / (g_eq + cfg.g_l());
}

void mismatch(const SystemConfig& cfg, std::span<const double> g, std::span<double> dP) {
    const double v = voltage(cfg, g);
    const double v2 = v * v;
    for (std::size_t i = 0; i < g.size(); ++i) dP[i] = v2 * g[i] - cfg.P0(i);
}

}  // namespace detail

namespace {

void check_size(const SystemConfig& cfg, const ConductanceState& s) {
    if (s.size() != cfg.size())
        throw ConfigError("state has " + std::to_string(s.size()) + " conductances, system has " +
                          std::to_string(cfg.size()) + " loads");
}

}  // namespace

double voltage(const SystemConfig& cfg, const ConductanceState& s) {
    check_size(cfg, s);
    return detail::voltage(cfg, s.values());
}

PowerFlow power_flow(const SystemConfig& cfg, const ConductanceState& s) {
    check_size(cfg, s);
    PowerFlow pf;
    pf.g_eq = s.sum();
    pf.v = cfg.E() * cfg.g_l() / (pf.g_eq + cfg.g_l());
    const double v2 = pf.v * pf.v;
    const std::size_t n = s.size();
    pf.P.resize(n);
    pf.dP.resize(n);
    pf.P_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pf.P[i] = v2 * s[i];
        pf.dP[i] = pf.P[i] - cfg.P0(i);
        pf.P_tot += pf.P[i];
    }
    return pf;
}

double aggregate_power(const SystemConfig& cfg, const ConductanceState& s, const IndexSet& S) {
    check_size(cfg, s);
    validate_index_set(S, s.size());
    double g_S = 0.0;
    for (std::size_t i : S) g_S += s[i];
    const double v = detail::voltage(cfg, s.values());
    return v * v * g_S;
}

double power_sensitivity(const SystemConfig& cfg, const ConductanceState& s, std::size_t i) {
    check_size(cfg, s);
    if (i >= s.size()) throw ConfigError("load index out of range");
    const double E_gl = cfg.E() * cfg.g_l();
    const double denom = s.sum() + cfg.g_l();
    return E_gl * E_gl * (cfg.g_l() + s.sum() - 2.0 * s[i]) / (denom * denom * denom);
}

MaxTransfer max_transfer(const SystemConfig& cfg, const IndexSet& S, const ConductanceState& s) {
    check_size(cfg, s);
    double g_Sc = 0.0;
    for (std::size_t i : complement(S, s.size())) g_Sc += s[i];
    const double g_l = cfg.g_l();
    return MaxTransfer{cfg.P_max() * g_l / (g_l + g_Sc), g_l + g_Sc};
}

}  // namespace dcvc
