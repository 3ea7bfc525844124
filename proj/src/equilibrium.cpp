#include "dcvc/equilibrium.hpp"

#include "dcvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dcvc {

namespace {

// Relative slack K - 4 P c below which the two roots are taken to coincide.
constexpr double kFoldTol = 8.0 * std::numeric_limits<double>::epsilon();
constexpr double kDedupTol = 1e-9;
constexpr double kPoleGuard = 1e-12;

bool same_point(const ConductanceState& a, const ConductanceState& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) >= kDedupTol) return false;
    return true;
}

std::string label(const IndexSet& G) {
    std::ostringstream os;
    os << '{';
    for (std::size_t k = 0; k < G.size(); ++k) os << (k ? "," : "") << G[k] + 1;
    os << '}';
    return os.str();
}

}  // namespace

const char* to_string(Branch b) {
    switch (b) {
        case Branch::low: return "low";
        case Branch::high: return "high";
        case Branch::fold: return "fold";
    }
    return "unknown";
}

const char* to_string(Region r) {
    switch (r) {
        case Region::interior_M: return "interior_M";
        case Region::boundary_M: return "boundary_M";
        case Region::exterior_M: return "exterior_M";
    }
    return "unknown";
}

const char* to_string(SubsetStatus s) {
    switch (s) {
        case SubsetStatus::feasible: return "feasible";
        case SubsetStatus::capacity_exceeded: return "capacity_exceeded";
        case SubsetStatus::negative_target: return "negative_target";
        case SubsetStatus::gate_pole: return "gate_pole";
    }
    return "unknown";
}

Region region_of(const SystemConfig& cfg, double g_eq) {
    const double tol = kBoundaryTol * cfg.g_l();
    if (std::abs(g_eq - cfg.g_l()) <= tol) return Region::boundary_M;
    return g_eq < cfg.g_l() ? Region::interior_M : Region::exterior_M;
}

Equilibrium make_equilibrium(const SystemConfig& cfg, ConductanceState g, IndexSet G, Branch branch) {
    validate_index_set(G, cfg.size());
    Equilibrium eq;
    eq.flow = power_flow(cfg, g);
    eq.region = region_of(cfg, eq.flow.g_eq);
    eq.g_star = std::move(g);
    eq.subset_G = std::move(G);
    eq.branch = branch;
    return eq;
}

double equilibrium_residual(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq) {
    double r = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        if (k < eq.subset_G.size() && eq.subset_G[k] == i) {
            ++k;
            try {
                r = std::max(r, std::abs(gate(cfg, ctrl, eq.g_star, i)));
            } catch (const SingularGate&) {
                return std::numeric_limits<double>::infinity();
            }
        } else {
            r = std::max(r, std::abs(eq.flow.dP[i]));
        }
    }
    return r;
}

SubsetSolution solve_subset(const SystemConfig& cfg, const ControllerParams& ctrl, const IndexSet& G) {
    const std::size_t n = cfg.size();
    validate_index_set(G, n);
    for (std::size_t i : G)
        if (!cfg.is_flexible(i)) throw ConfigError("gated subset may only contain flexible loads");
    if (ctrl.g_bar.size() != n) throw ConfigError("controller parameters do not match the system");

    SubsetSolution out;
    const IndexSet Gc = complement(G, n);

    double g_bar_G = 0.0;
    for (std::size_t i : G) {
        if (ctrl.g_bar[i] < 0.0) {
            out.status = SubsetStatus::negative_target;
            std::ostringstream msg;
            msg << "G=" << label(G) << ": target conductance of load " << i + 1 << " is negative ("
                << ctrl.g_bar[i] << ")";
            out.diagnostic = msg.str();
            return out;
        }
        g_bar_G += ctrl.g_bar[i];
    }

    const double g_l = cfg.g_l();
    const double E_gl = cfg.E() * g_l;
    const double K = E_gl * E_gl;
    const double c = g_bar_G + g_l;
    double P = 0.0;
    for (std::size_t i : Gc) P += cfg.P0(i);

    // Ungated aggregate x solves K x / (x + c)^2 = P, i.e.
    // P x^2 + (2 P c - K) x + P c^2 = 0, whose roots multiply to c^2.
    std::vector<std::pair<double, Branch>> roots;
    if (P == 0.0) {
        roots.emplace_back(0.0, Branch::low);
    } else {
        const double slack = K - 4.0 * P * c;
        if (slack < -kFoldTol * K) {
            out.status = SubsetStatus::capacity_exceeded;
            std::ostringstream msg;
            msg << "G=" << label(G) << ": ungated demand " << P << " exceeds remaining capacity "
                << cfg.P_max() * g_l / c;
            out.diagnostic = msg.str();
            return out;
        }
        if (std::abs(slack) <= kFoldTol * K) {
            roots.emplace_back(c, Branch::fold);
        } else {
            const double b = 2.0 * P * c - K;  // negative whenever slack > 0
            const double q = 0.5 * (-b + std::sqrt(K * slack));
            roots.emplace_back(P * c * c / q, Branch::low);
            roots.emplace_back(q / P, Branch::high);
        }
    }

    std::size_t pole_hits = 0;
    for (const auto& [x, branch] : roots) {
        const double v = E_gl / (x + c);
        const double v2 = v * v;
        std::vector<double> g(n, 0.0);
        for (std::size_t i : G) g[i] = ctrl.g_bar[i];
        for (std::size_t i : Gc) g[i] = cfg.P0(i) / v2;

        bool on_pole = false;
        for (std::size_t i : Gc) {
            if (cfg.is_flexible(i) && std::abs(1.0 + ctrl.kappa * (ctrl.g_bar[i] - g[i])) < kPoleGuard) on_pole = true;
        }
        if (on_pole) {
            ++pole_hits;
            continue;
        }
        out.equilibria.push_back(make_equilibrium(cfg, ConductanceState(std::move(g)), G, branch));
    }
    if (out.equilibria.empty() && pole_hits > 0) {
        out.status = SubsetStatus::gate_pole;
        out.diagnostic = "G=" + label(G) + ": candidates sit on a gate pole";
    }
    return out;
}

std::vector<Equilibrium> solve_subset_equilibria(const SystemConfig& cfg, const ControllerParams& ctrl,
                                                 const IndexSet& G) {
    return solve_subset(cfg, ctrl, G).equilibria;
}

std::vector<Equilibrium> enumerate_equilibria(const SystemConfig& cfg, const ControllerParams& ctrl) {
    const IndexSet& F = cfg.flexible();
    if (F.size() > kMaxEnumeratedFlexible)
        throw TooManyFlexibleLoads("enumeration supports at most " + std::to_string(kMaxEnumeratedFlexible) +
                                   " flexible loads, got " + std::to_string(F.size()));

    std::vector<Equilibrium> all;
    const std::size_t subsets = std::size_t{1} << F.size();
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        IndexSet G;
        for (std::size_t k = 0; k < F.size(); ++k)
            if (mask & (std::size_t{1} << k)) G.push_back(F[k]);
        for (auto& eq : solve_subset_equilibria(cfg, ctrl, G)) {
            const bool dup = std::any_of(all.begin(), all.end(),
                                         [&](const Equilibrium& e) { return same_point(e.g_star, eq.g_star); });
            if (!dup) all.push_back(std::move(eq));
        }
    }
    return all;
}

CurtailmentReport curtailment_at(const SystemConfig& cfg, const ConductanceState& s) {
    if (cfg.num_flexible() == 0) throw WrongEquilibriumKind("curtailment needs at least one flexible load");
    const PowerFlow pf = power_flow(cfg, s);

    CurtailmentReport r;
    r.loads = cfg.flexible();
    r.deficit = cfg.P_max() - cfg.P0_total();
    double sum_dP = 0.0;
    for (std::size_t i : r.loads) {
        r.dP.push_back(pf.dP[i]);
        r.dP_target.push_back(r.deficit / cfg.gamma(i));
        r.multiplier += cfg.loads()[i].theta * pf.dP[i];
        sum_dP += pf.dP[i];
    }
    r.multiplier /= static_cast<double>(r.loads.size());
    for (std::size_t k = 0; k < r.loads.size(); ++k) {
        const double weighted = cfg.loads()[r.loads[k]].theta * r.dP[k];
        r.stationarity_violation = std::max(r.stationarity_violation, std::abs(weighted - r.multiplier));
    }
    r.feasibility_violation = std::abs(sum_dP - r.deficit);
    r.max_violation = std::max(r.stationarity_violation, r.feasibility_violation);
    return r;
}

CurtailmentReport curtailment_report(const SystemConfig& cfg, const Equilibrium& eq) {
    if (cfg.num_flexible() == 0 || eq.subset_G != cfg.flexible())
        throw WrongEquilibriumKind("curtailment is defined for the equilibrium with every flexible gate closed");
    if (eq.region != Region::boundary_M)
        throw WrongEquilibriumKind(std::string("curtailment equilibrium must lie on the boundary of M, got ") +
                                   to_string(eq.region));
    return curtailment_at(cfg, eq.g_star);
}

}  // namespace dcvc
