#include "dcvc/scenario.hpp"

#include "dcvc/errors.hpp"
#include "dcvc/game.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace dcvc {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(where + ": missing key '" + key + "'");
    return *it;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where + ": expected a finite number");
    return x;
}

double positive(const json& j, const std::string& where) {
    const double x = number(j, where);
    if (!(x > 0.0)) throw ConfigError(where + ": must be > 0");
    return x;
}

std::vector<Breakpoint> breakpoints(const json& j, const std::string& where) {
    std::vector<Breakpoint> out;
    if (j.is_number()) {
        out.push_back({0.0, number(j, where)});
        return out;
    }
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a number or a non-empty list of [t, P] pairs");
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string at = where + "[" + std::to_string(k) + "]";
        const json& p = j[k];
        if (!p.is_array() || p.size() != 2) throw ConfigError(at + ": expected a [t, P] pair");
        out.push_back({number(p[0], at + "[0]"), number(p[1], at + "[1]")});
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read scenario file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Scenario parse_scenario(const json& doc) {
    check_keys(doc, {"network", "loads", "controller", "simulation", "outputs"}, "scenario");
    Scenario sc;

    const json& net = require(doc, "network", "scenario");
    check_keys(net, {"E", "g_l"}, "network");
    sc.network.E = positive(require(net, "E", "network"), "network.E");
    sc.network.g_l = positive(require(net, "g_l", "network"), "network.g_l");

    const json& loads = require(doc, "loads", "scenario");
    if (!loads.is_array() || loads.empty()) throw ConfigError("loads: expected a non-empty list");
    for (std::size_t i = 0; i < loads.size(); ++i) {
        const std::string where = "loads[" + std::to_string(i) + "]";
        const json& l = loads[i];
        check_keys(l, {"kind", "theta", "P0"}, where);
        LoadSchedule ls;
        const json& kind = require(l, "kind", where);
        if (kind == "flexible")
            ls.kind = LoadKind::flexible;
        else if (kind == "inflexible")
            ls.kind = LoadKind::inflexible;
        else
            throw ConfigError(where + ".kind: expected \"flexible\" or \"inflexible\"");
        if (l.contains("theta")) ls.theta = positive(l["theta"], where + ".theta");
        ls.P0 = breakpoints(require(l, "P0", where), where + ".P0");
        sc.loads.push_back(std::move(ls));
    }

    if (doc.contains("controller")) {
        const json& c = doc["controller"];
        check_keys(c, {"kappa"}, "controller");
        if (c.contains("kappa")) sc.kappa = positive(c["kappa"], "controller.kappa");
    }

    const json& sim = require(doc, "simulation", "scenario");
    check_keys(sim, {"dt", "t_end", "collapse_voltage_fraction", "settle_tol", "settle_window", "initial_g"},
               "simulation");
    if (sim.contains("dt")) sc.dt = positive(sim["dt"], "simulation.dt");
    sc.t_end = positive(require(sim, "t_end", "simulation"), "simulation.t_end");
    if (sim.contains("collapse_voltage_fraction"))
        sc.collapse_voltage_fraction = positive(sim["collapse_voltage_fraction"], "simulation.collapse_voltage_fraction");
    if (sim.contains("settle_tol")) sc.settle_tol = positive(sim["settle_tol"], "simulation.settle_tol");
    if (sim.contains("settle_window")) {
        sc.settle_window = number(sim["settle_window"], "simulation.settle_window");
        if (*sc.settle_window < 0.0) throw ConfigError("simulation.settle_window: must be >= 0");
    }
    if (sim.contains("initial_g")) {
        const json& g = sim["initial_g"];
        if (!g.is_array() || g.size() != sc.loads.size())
            throw ConfigError("simulation.initial_g: expected one conductance per load");
        std::vector<double> v;
        for (std::size_t i = 0; i < g.size(); ++i) {
            v.push_back(number(g[i], "simulation.initial_g[" + std::to_string(i) + "]"));
            if (v.back() < 0.0) throw ConfigError("simulation.initial_g: conductances must be >= 0");
        }
        sc.initial_g = std::move(v);
    }

    if (doc.contains("outputs")) {
        const json& o = doc["outputs"];
        check_keys(o, {"trace_path", "report_path", "sample_stride"}, "outputs");
        if (o.contains("trace_path")) {
            if (!o["trace_path"].is_string()) throw ConfigError("outputs.trace_path: expected a string");
            sc.trace_path = o["trace_path"].get<std::string>();
        }
        if (o.contains("report_path")) {
            if (!o["report_path"].is_string()) throw ConfigError("outputs.report_path: expected a string");
            sc.report_path = o["report_path"].get<std::string>();
        }
        if (o.contains("sample_stride")) {
            const json& s = o["sample_stride"];
            if (!s.is_number_integer() || s.get<long long>() < 1)
                throw ConfigError("outputs.sample_stride: expected an integer >= 1");
            sc.sample_stride = s.get<std::size_t>();
        }
    }

    // Constructing these runs every remaining consistency check (ordering,
    // breakpoint monotonicity, option ranges).
    (void)sc.schedule();
    (void)sc.config_at(0.0);
    sc.sim_options().validate();
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("scenario '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_scenario(doc);
}

DemandSchedule Scenario::schedule() const {
    std::vector<std::vector<Breakpoint>> bp;
    bp.reserve(loads.size());
    for (const auto& l : loads) bp.push_back(l.P0);
    return DemandSchedule(std::move(bp));
}

SystemConfig Scenario::config_at(double t) const {
    const std::vector<double> p0 = schedule().evaluate(t);
    std::vector<LoadSpec> specs;
    specs.reserve(loads.size());
    for (std::size_t i = 0; i < loads.size(); ++i) specs.push_back({p0[i], loads[i].kind, loads[i].theta});
    return SystemConfig(network, std::move(specs), kappa);
}

SimOptions Scenario::sim_options() const {
    SimOptions o;
    o.dt = dt ? *dt : SimOptions::default_dt(config_at(0.0));
    o.t_end = t_end;
    o.collapse_voltage_fraction = collapse_voltage_fraction;
    o.settle_tol = settle_tol;
    o.settle_window = settle_window;
    o.sample_stride = sample_stride;
    return o;
}

ConductanceState default_initial_state(const Scenario& sc) {
    if (sc.initial_g) return ConductanceState(*sc.initial_g);
    const Catalog cat = build_catalog(sc.config_at(0.0));
    const CatalogEntry* op = operating_point(cat);
    if (!op) throw ConfigError("no stable equilibrium at t = 0; set simulation.initial_g explicitly");
    return op->eq.g_star;
}

std::string subset_label(const IndexSet& G) {
    std::string s = "{";
    for (std::size_t k = 0; k < G.size(); ++k) s += (k ? "," : "") + std::to_string(G[k] + 1);
    return s + "}";
}

Catalog build_catalog(const SystemConfig& cfg) {
    const ControllerParams ctrl = ControllerParams::from(cfg);
    const IndexSet& F = cfg.flexible();
    if (F.size() > kMaxEnumeratedFlexible)
        throw TooManyFlexibleLoads("catalog supports at most " + std::to_string(kMaxEnumeratedFlexible) +
                                   " flexible loads");
    Catalog cat;
    cat.P0_total = cfg.P0_total();
    cat.P_max = cfg.P_max();
    const bool overloaded = cfg.epsilon() > 0.0;

    for (const Equilibrium& eq : enumerate_equilibria(cfg, ctrl)) {
        CatalogEntry e{eq, classify(cfg, ctrl, eq), check_lne(cfg, eq.g_star).is_lne,
                       equilibrium_residual(cfg, ctrl, eq)};
        cat.entries.push_back(std::move(e));
    }

    const std::size_t subsets = std::size_t{1} << F.size();
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        IndexSet G;
        for (std::size_t k = 0; k < F.size(); ++k)
            if (mask & (std::size_t{1} << k)) G.push_back(F[k]);
        SubsetSolution sol = solve_subset(cfg, ctrl, G);
        if (sol.equilibria.empty())
            cat.notes.push_back({G, sol.status, sol.diagnostic});
        else if (overloaded && !G.empty() && G.size() < F.size())
            cat.partial_subsets_under_overload.push_back(G);
    }
    return cat;
}

const CatalogEntry* operating_point(const Catalog& c) {
    const CatalogEntry* best = nullptr;
    for (const auto& e : c.entries) {
        if (e.verdict.classification != Classification::stable || e.eq.region == Region::exterior_M) continue;
        if (!best || e.eq.subset_G.size() < best->eq.subset_G.size()) best = &e;
    }
    return best;
}

RunReport make_report(const Scenario& sc, const SimTrace& trace, double dt) {
    RunReport r;
    r.termination = trace.termination;
    r.termination_time = trace.termination_time;
    r.steps = trace.steps;
    r.projection_count = trace.projection_count;
    r.dt = dt;
    r.final_g = trace.g.back();
    r.final_demand = trace.demand.back();
    r.final_flow = trace.flow.back();
    r.events = trace.events;

    const SystemConfig cfg = sc.config_at(trace.termination_time);
    r.catalog = build_catalog(cfg);
    if (cfg.num_flexible() > 0 && cfg.epsilon() > 0.0) r.curtailment = curtailment_at(cfg, r.final_g);
    return r;
}

namespace {

json numbers(std::span<const double> xs) {
    json a = json::array();
    for (double x : xs) a.push_back(x);
    return a;
}

json one_based(const IndexSet& S) {
    json a = json::array();
    for (std::size_t i : S) a.push_back(i + 1);
    return a;
}

json flow_json(const PowerFlow& f) {
    return json{{"v", f.v}, {"P_tot", f.P_tot}, {"g_eq", f.g_eq}, {"P", numbers(f.P)}, {"dP", numbers(f.dP)}};
}

}  // namespace

json to_json(const Equilibrium& eq) {
    return json{{"G", one_based(eq.subset_G)},
                {"label", subset_label(eq.subset_G)},
                {"branch", to_string(eq.branch)},
                {"region", to_string(eq.region)},
                {"g", numbers(eq.g_star.values())},
                {"flow", flow_json(eq.flow)}};
}

json to_json(const StabilityVerdict& v) {
    json j{{"classification", to_string(v.classification)},
           {"eigenvalues", numbers(v.eigenvalues)},
           {"method", to_string(v.method)},
           {"jacobian", v.context == JacobianContext::vcs ? "vcs" : "inflexible"},
           {"complex_pairs", v.complex_pairs}};
    j["oracle_max_diff"] = v.oracle_max_diff ? json(*v.oracle_max_diff) : json(nullptr);
    return j;
}

json to_json(const CurtailmentReport& c) {
    return json{{"loads", one_based(c.loads)},
                {"dP", numbers(c.dP)},
                {"dP_target", numbers(c.dP_target)},
                {"deficit", c.deficit},
                {"multiplier", c.multiplier},
                {"stationarity_violation", c.stationarity_violation},
                {"feasibility_violation", c.feasibility_violation},
                {"max_violation", c.max_violation}};
}

json to_json(const Catalog& c) {
    json entries = json::array();
    for (const auto& e : c.entries) {
        json j = to_json(e.eq);
        j["stability"] = to_json(e.verdict);
        j["lne"] = e.lne;
        j["residual"] = e.residual;
        entries.push_back(std::move(j));
    }
    json notes = json::array();
    for (const auto& n : c.notes)
        notes.push_back(json{{"G", one_based(n.G)}, {"status", to_string(n.status)}, {"diagnostic", n.diagnostic}});
    json partial = json::array();
    for (const auto& G : c.partial_subsets_under_overload) partial.push_back(subset_label(G));
    return json{{"P0_total", c.P0_total},
                {"P_max", c.P_max},
                {"overloaded", c.P0_total > c.P_max},
                {"equilibria", std::move(entries)},
                {"empty_subsets", std::move(notes)},
                {"partially_gated_under_overload", std::move(partial)}};
}

json to_json(const RunReport& r) {
    json events = json::array();
    for (const auto& e : r.events) events.push_back(json{{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
    json j{{"termination", to_string(r.termination)},
           {"termination_time", r.termination_time},
           {"steps", r.steps},
           {"dt", r.dt},
           {"projection_count", r.projection_count},
           {"final_g", numbers(r.final_g.values())},
           {"final_demand", numbers(r.final_demand)},
           {"final_flow", flow_json(r.final_flow)},
           {"catalog", to_json(r.catalog)},
           {"events", std::move(events)}};
    j["curtailment"] = r.curtailment ? to_json(*r.curtailment) : json(nullptr);
    return j;
}

std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::string short_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string list(std::span<const double> xs) {
    std::string s = "[";
    for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? ", " : "") + short_num(xs[k]);
    return s + "]";
}

}  // namespace

void render(std::ostream& os, const Catalog& c) {
    const bool overloaded = c.P0_total > c.P_max;
    os << "demand " << short_num(c.P0_total) << " W, capacity " << short_num(c.P_max) << " W ("
       << (overloaded ? "overloaded" : "within capacity") << ")\n";
    if (c.entries.empty()) {
        os << "  no equilibria\n";
    } else {
        char line[160];
        std::snprintf(line, sizeof line, "  %-10s %-6s %-11s %-12s %-12s %-14s %s\n", "G", "branch", "region", "g_eq",
                      "v", "verdict", "eigenvalues");
        os << line;
        for (const auto& e : c.entries) {
            std::snprintf(line, sizeof line, "  %-10s %-6s %-11s %-12s %-12s %-14s ", subset_label(e.eq.subset_G).c_str(),
                          to_string(e.eq.branch), to_string(e.eq.region), short_num(e.eq.flow.g_eq).c_str(),
                          short_num(e.eq.flow.v).c_str(), to_string(e.verdict.classification));
            os << line << list(e.verdict.eigenvalues) << (e.verdict.complex_pairs ? " (+complex)" : "") << '\n';
        }
    }
    for (const auto& n : c.notes) os << "  " << subset_label(n.G) << ": " << to_string(n.status) << '\n';
    if (overloaded && !c.partial_subsets_under_overload.empty()) {
        os << "  partially gated equilibria present under overload:";
        for (const auto& G : c.partial_subsets_under_overload) os << ' ' << subset_label(G);
        os << '\n';
    }
}

void render(std::ostream& os, const RunReport& r) {
    os << "termination: " << to_string(r.termination) << " at t = " << short_num(r.termination_time) << " ("
       << r.steps << " steps of " << short_num(r.dt) << ")\n";
    os << "final voltage " << short_num(r.final_flow.v) << ", g_eq " << short_num(r.final_flow.g_eq) << ", P_tot "
       << short_num(r.final_flow.P_tot) << '\n';
    os << "  g  " << list(r.final_g.values()) << '\n';
    os << "  P  " << list(r.final_flow.P) << '\n';
    os << "  dP " << list(r.final_flow.dP) << '\n';
    if (r.projection_count > 0) os << "non-negativity projections: " << r.projection_count << '\n';
    os << "equilibria at the final demand:\n";
    render(os, r.catalog);
    if (r.curtailment) {
        const auto& c = *r.curtailment;
        os << "curtailment (deficit " << short_num(c.deficit) << " W):\n";
        for (std::size_t k = 0; k < c.loads.size(); ++k)
            os << "  load " << c.loads[k] + 1 << ": dP " << short_num(c.dP[k]) << ", target "
               << short_num(c.dP_target[k]) << '\n';
        os << "  KKT stationarity " << short_num(c.stationarity_violation) << ", feasibility "
           << short_num(c.feasibility_violation) << '\n';
    }
    if (!r.events.empty()) {
        os << "events:\n";
        for (const auto& e : r.events) os << "  t = " << short_num(e.t) << "  " << e.kind << ": " << e.detail << '\n';
    }
}

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
    const std::size_t n = trace.g.empty() ? 0 : trace.g.front().size();
    os << "t,v,P_tot";
    for (const char* prefix : {"g_", "P_", "dP_"})
        for (std::size_t i = 0; i < n; ++i) os << ',' << prefix << i + 1;
    os << "\r\n";
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
        const PowerFlow& f = trace.flow[k];
        os << format_number(trace.t[k]) << ',' << format_number(f.v) << ',' << format_number(f.P_tot);
        for (std::size_t i = 0; i < n; ++i) os << ',' << format_number(trace.g[k][i]);
        for (std::size_t i = 0; i < n; ++i) os << ',' << format_number(f.P[i]);
        for (std::size_t i = 0; i < n; ++i) os << ',' << format_number(f.dP[i]);
        os << "\r\n";
    }
}

}  // namespace dcvc
