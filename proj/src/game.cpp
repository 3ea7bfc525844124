#include "dcvc/game.hpp"

#include "dcvc/errors.hpp"

#include <cmath>
#include <string>

namespace dcvc {

namespace {

void check_load(const SystemConfig& cfg, const ConductanceState& s, std::size_t i) {
    if (s.size() != cfg.size()) throw ConfigError("state dimension does not match the system");
    if (i >= cfg.size()) throw ConfigError("load index " + std::to_string(i) + " out of range");
}

}  // namespace

double utility_at(const SystemConfig& cfg, std::size_t i, double g_i, double g_others) {
    const double E_gl = cfg.E() * cfg.g_l();
    const double K = E_gl * E_gl;
    const double a = g_others + cfg.g_l();
    // ln(a / (a + g)) = -log1p(g / a) and a / (a + g) - 1 = -g / (a + g);
    // both forms vanish exactly at g = 0.
    return cfg.P0(i) * g_i - K * std::log1p(g_i / a) + K * g_i / (a + g_i);
}

double utility(const SystemConfig& cfg, const ConductanceState& s, std::size_t i) {
    check_load(cfg, s, i);
    return utility_at(cfg, i, s[i], s.sum() - s[i]);
}

double utility_gradient(const SystemConfig& cfg, const ConductanceState& s, std::size_t i) {
    check_load(cfg, s, i);
    const double v = detail::voltage(cfg, s.values());
    return -(v * v * s[i] - cfg.P0(i));
}

double utility_curvature(const SystemConfig& cfg, const ConductanceState& s, std::size_t i) {
    return -power_sensitivity(cfg, s, i);
}

LneTolerances LneTolerances::defaults(const SystemConfig& cfg) {
    const double E_gl = cfg.E() * cfg.g_l();
    return LneTolerances{1e-8 * E_gl * E_gl, 1e-10 * E_gl * E_gl};
}

GameCheckReport check_lne(const SystemConfig& cfg, const ConductanceState& s, const LneTolerances& tol) {
    if (!(tol.grad > 0.0) || !(tol.curv > 0.0)) throw ConfigError("LNE tolerances must be > 0");
    if (s.size() != cfg.size()) throw ConfigError("state dimension does not match the system");

    GameCheckReport r;
    r.point = s;
    const std::size_t n = s.size();
    r.gradient.resize(n);
    r.curvature.resize(n);
    bool first_order = true;
    bool second_order = true;
    for (std::size_t i = 0; i < n; ++i) {
        r.gradient[i] = utility_gradient(cfg, s, i);
        r.curvature[i] = utility_curvature(cfg, s, i);
        first_order = first_order && std::abs(r.gradient[i]) < tol.grad;
        second_order = second_order && r.curvature[i] < -tol.curv;
    }
    r.is_equilibrium = first_order;
    r.is_lne = first_order && second_order;
    return r;
}

GameCheckReport check_lne(const SystemConfig& cfg, const ConductanceState& s) {
    return check_lne(cfg, s, LneTolerances::defaults(cfg));
}

DominanceScan dominance_scan(const SystemConfig& cfg, std::size_t i, double g_others,
                             std::span<const double> grid) {
    if (i >= cfg.size()) throw ConfigError("load index out of range");
    if (!std::isfinite(g_others) || g_others < 0.0)
        throw ConfigError("opponent conductance must be finite and >= 0");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!std::isfinite(grid[k]) || grid[k] < 0.0) throw ConfigError("grid values must be finite and >= 0");
        if (k > 0 && !(grid[k] > grid[k - 1])) throw ConfigError("grid must be strictly increasing");
    }

    DominanceScan scan;
    scan.utility.reserve(grid.size());
    for (double g : grid) scan.utility.push_back(utility_at(cfg, i, g, g_others));
    if (grid.size() < 2) return scan;

    const std::size_t last = grid.size() - 1;
    scan.tail_slope = (scan.utility[last] - scan.utility[last - 1]) / (grid[last] - grid[last - 1]);

    std::size_t k = last;
    while (k > 0 && scan.utility[k] > scan.utility[k - 1]) --k;
    if (k < last) {
        scan.increasing_from = k;
        scan.verdict = DominanceVerdict::dominant_at_infinity;
    }
    return scan;
}

}  // namespace dcvc
