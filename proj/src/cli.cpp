#include "dcvc/cli.hpp"

#include "dcvc/errors.hpp"
#include "dcvc/game.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dcvc {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SweepParam p) {
    switch (p) {
        case SweepParam::p0_scale: return "p0_scale";
        case SweepParam::g_l: return "g_l";
        case SweepParam::kappa: return "kappa";
    }
    return "unknown";
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "p0_scale") return SweepParam::p0_scale;
    if (name == "g_l") return SweepParam::g_l;
    if (name == "kappa") return SweepParam::kappa;
    throw ConfigError("unknown sweep parameter '" + name + "' (expected p0_scale, g_l or kappa)");
}

Scenario with_parameter(const Scenario& sc, SweepParam p, double value) {
    if (!std::isfinite(value)) throw ConfigError("sweep value must be finite");
    Scenario out = sc;
    switch (p) {
        case SweepParam::p0_scale:
            if (value < 0.0) throw ConfigError("p0_scale must be >= 0");
            for (auto& l : out.loads)
                for (auto& b : l.P0) b.P0 *= value;
            break;
        case SweepParam::g_l:
            if (!(value > 0.0)) throw ConfigError("g_l must be > 0");
            out.network.g_l = value;
            break;
        case SweepParam::kappa:
            if (!(value > 0.0)) throw ConfigError("kappa must be > 0");
            out.kappa = value;
            break;
    }
    return out;
}

namespace {

// Ungated family at the frozen demand: feasible (roots exist) or not.
SubsetSolution ungated(const Scenario& sc, double t) {
    const SystemConfig cfg = sc.config_at(t);
    return solve_subset(cfg, ControllerParams::from(cfg), {});
}

}  // namespace

SweepResult run_sweep(const Scenario& sc, SweepParam p, double from, double to, std::size_t steps, bool simulate) {
    if (steps < 1) throw ConfigError("sweep needs at least one step");
    if (!std::isfinite(from) || !std::isfinite(to)) throw ConfigError("sweep range must be finite");
    const double t_final = sc.schedule().last_breakpoint_time();

    SweepResult res;
    res.param = p;
    for (std::size_t k = 0; k <= steps; ++k) {
        const double value = from + (to - from) * static_cast<double>(k) / static_cast<double>(steps);
        const Scenario var = with_parameter(sc, p, value);
        const SystemConfig cfg = var.config_at(t_final);
        const Catalog cat = build_catalog(cfg);

        SweepPoint pt;
        pt.value = value;
        pt.P0_total = cfg.P0_total();
        pt.P_max = cfg.P_max();
        pt.equilibria = cat.entries.size();
        if (const CatalogEntry* op = operating_point(cat)) pt.operating = op->eq;
        for (const auto& e : cat.entries) {
            pt.stable += e.verdict.classification == Classification::stable;
            if (!e.eq.subset_G.empty()) continue;
            BranchSummary b{e.eq.flow.g_eq, e.eq.flow.v, e.verdict.classification};
            if (e.eq.branch == Branch::high)
                pt.ungated_high = b;
            else
                pt.ungated_low = b;
        }
        if (simulate) {
            const SimOptions opts = var.sim_options();
            pt.simulation = integrate(var.config_at(0.0), default_initial_state(var), var.schedule(), opts);
        }
        res.points.push_back(std::move(pt));
    }

    for (std::size_t k = 0; k + 1 < res.points.size() && !res.fold; ++k) {
        const auto& a = res.points[k];
        const auto& b = res.points[k + 1];
        const bool fa = a.ungated_low.has_value();
        const bool fb = b.ungated_low.has_value();
        if (fa && !a.ungated_high) {
            res.fold = FoldPoint{a.value, a.ungated_low->g_eq, a.ungated_low->v};
            break;
        }
        if (fa == fb) continue;
        double lo = a.value, hi = b.value;  // lo keeps the side of a
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (!(mid != lo && mid != hi)) break;
            const bool fm = !ungated(with_parameter(sc, p, mid), t_final).equilibria.empty();
            (fm == fa ? lo : hi) = mid;
        }
        const double feasible_side = fa ? lo : hi;
        const SystemConfig cfg = with_parameter(sc, p, feasible_side).config_at(t_final);
        const auto sol = solve_subset(cfg, ControllerParams::from(cfg), {});
        double g_eq = 0.0, v = 0.0;
        for (const auto& e : sol.equilibria) {
            g_eq += e.flow.g_eq;
            v += e.flow.v;
        }
        const double m = static_cast<double>(std::max<std::size_t>(sol.equilibria.size(), 1));
        res.fold = FoldPoint{feasible_side, g_eq / m, v / m};
    }
    return res;
}

void write_sweep_csv(std::ostream& os, const SweepResult& r, std::size_t n) {
    auto opt = [](const std::optional<BranchSummary>& b, double BranchSummary::*field) {
        return b ? format_number((*b).*field) : std::string();
    };
    os << to_string(r.param)
       << ",P0_tot,P_max,equilibria,stable,low_g_eq,low_v,low_verdict,high_g_eq,high_v,high_verdict,op_G,op_v,op_g_eq";
    for (std::size_t i = 0; i < n; ++i) os << ",op_dP_" << i + 1;
    const bool sim = !r.points.empty() && r.points.front().simulation;
    if (sim) {
        os << ",sim_termination,sim_v,sim_g_eq";
        for (std::size_t i = 0; i < n; ++i) os << ",sim_dP_" << i + 1;
    }
    os << "\r\n";
    for (const auto& p : r.points) {
        os << format_number(p.value) << ',' << format_number(p.P0_total) << ',' << format_number(p.P_max) << ','
           << p.equilibria << ',' << p.stable << ',' << opt(p.ungated_low, &BranchSummary::g_eq) << ','
           << opt(p.ungated_low, &BranchSummary::v) << ','
           << (p.ungated_low ? to_string(p.ungated_low->verdict) : "") << ','
           << opt(p.ungated_high, &BranchSummary::g_eq) << ',' << opt(p.ungated_high, &BranchSummary::v) << ','
           << (p.ungated_high ? to_string(p.ungated_high->verdict) : "") << ',';
        if (p.operating) {
            os << '"' << subset_label(p.operating->subset_G) << '"' << ',' << format_number(p.operating->flow.v) << ','
               << format_number(p.operating->flow.g_eq);
            for (double d : p.operating->flow.dP) os << ',' << format_number(d);
        } else {
            os << ",,";
            for (std::size_t i = 0; i < n; ++i) os << ',';
        }
        if (sim) {
            const SimTrace& t = *p.simulation;
            const PowerFlow& f = t.flow.back();
            os << ',' << to_string(t.termination) << ',' << format_number(f.v) << ',' << format_number(f.g_eq);
            for (double d : f.dP) os << ',' << format_number(d);
        }
        os << "\r\n";
    }
}

namespace cli {

namespace {

struct Globals {
    std::string config;
    std::string out_dir = ".";
    bool quiet = false;
};

fs::path output_path(const Globals& g, const std::string& name) {
    fs::path p(name);
    if (p.is_relative()) p = fs::path(g.out_dir) / p;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

void write_text(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    f << content;
    if (!f) throw ConfigError("failed writing '" + p.string() + "'");
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

double checked_time(const Scenario& sc, double t) {
    if (!(t >= 0.0 && t <= sc.t_end))
        throw ConfigError("time " + format_number(t) + " lies outside the horizon [0, " + format_number(sc.t_end) + "]");
    return t;
}

ConductanceState checked_state(const SystemConfig& cfg, const std::vector<double>& g) {
    if (g.size() != cfg.size())
        throw ConfigError("state has " + std::to_string(g.size()) + " entries, the scenario has " +
                          std::to_string(cfg.size()) + " loads");
    return ConductanceState(g);
}

int simulate(const Globals& g, std::ostream& out) {
    const Scenario sc = load_scenario(g.config);
    const SimOptions opts = sc.sim_options();
    const ConductanceState s0 = default_initial_state(sc);
    const SimTrace trace = integrate(sc.config_at(0.0), s0, sc.schedule(), opts);

    {
        std::ostringstream csv;
        write_trace_csv(csv, trace);
        write_text(output_path(g, sc.trace_path), csv.str());
    }
    const RunReport report = make_report(sc, trace, opts.dt);
    const fs::path report_path = output_path(g, sc.report_path);
    write_json(report_path, to_json(report));
    std::ostringstream text;
    render(text, report);
    fs::path text_path = report_path;
    text_path.replace_extension(".txt");
    write_text(text_path, text.str());
    if (!g.quiet) out << text.str();
    return report.termination == Termination::collapsed ? 2 : 0;
}

int equilibria(const Globals& g, double at_time, std::ostream& out) {
    const Scenario sc = load_scenario(g.config);
    const Catalog cat = build_catalog(sc.config_at(checked_time(sc, at_time)));
    json j = to_json(cat);
    j["t"] = at_time;
    write_json(output_path(g, "equilibria.json"), j);
    if (!g.quiet) {
        out << "equilibria at t = " << at_time << '\n';
        render(out, cat);
    }
    return 0;
}

void print_verdict(std::ostream& out, const StabilityVerdict& v) {
    out << "  verdict " << to_string(v.classification) << " (" << to_string(v.method) << ")  eigenvalues";
    for (double l : v.eigenvalues) out << ' ' << format_number(l);
    if (v.complex_pairs) out << " plus complex pairs";
    if (v.oracle_max_diff) out << "  oracle diff " << *v.oracle_max_diff;
    out << '\n';
}

int stability(const Globals& g, double at_time, const std::vector<double>& state, std::ostream& out) {
    const Scenario sc = load_scenario(g.config);
    const SystemConfig cfg = sc.config_at(checked_time(sc, at_time));
    const ControllerParams ctrl = ControllerParams::from(cfg);
    json j{{"t", at_time}};
    if (!state.empty()) {
        const ConductanceState s = checked_state(cfg, state);
        const StabilityVerdict v = classify_state(cfg, ctrl, s, default_hyperbolicity_tol(cfg));
        const auto r = rhs(cfg, ctrl, s);
        double rate = 0.0;
        for (double x : r) rate = std::max(rate, std::abs(x));
        j["state"] = s.vector();
        j["max_rate"] = rate;
        j["stability"] = to_json(v);
        if (!g.quiet) {
            out << "linearisation at the given state (max |g'| = " << rate << ")\n";
            print_verdict(out, v);
        }
    } else {
        const Catalog cat = build_catalog(cfg);
        j["catalog"] = to_json(cat);
        if (!g.quiet) {
            for (const auto& e : cat.entries) {
                out << "G=" << subset_label(e.eq.subset_G) << " " << to_string(e.eq.branch) << " "
                    << to_string(e.eq.region) << '\n';
                print_verdict(out, e.verdict);
            }
            if (cat.entries.empty()) out << "no equilibria\n";
        }
    }
    write_json(output_path(g, "stability.json"), j);
    return 0;
}

struct GameArgs {
    std::vector<double> state;
    double at_time = 0.0;
    std::optional<std::size_t> dominance_load;
    double grid_max = 0.0;
    std::size_t grid_points = 200;
};

int game(const Globals& g, const GameArgs& a, std::ostream& out) {
    const Scenario sc = load_scenario(g.config);
    const SystemConfig cfg = sc.config_at(checked_time(sc, a.at_time));
    const ConductanceState s = checked_state(cfg, a.state);
    const GameCheckReport rep = check_lne(cfg, s);
    const StabilityVerdict v = classify_state(cfg, ControllerParams::from(cfg), s, default_hyperbolicity_tol(cfg));

    json j{{"t", a.at_time},
           {"state", s.vector()},
           {"gradient", rep.gradient},
           {"curvature", rep.curvature},
           {"is_equilibrium", rep.is_equilibrium},
           {"is_lne", rep.is_lne},
           {"stability", to_json(v)}};
    if (!g.quiet) {
        out << "load  g                        gradient                 curvature\n";
        for (std::size_t i = 0; i < s.size(); ++i) {
            char line[128];
            std::snprintf(line, sizeof line, "%-5zu %-24.17g %-24.17g %.17g\n", i + 1, s[i], rep.gradient[i],
                          rep.curvature[i]);
            out << line;
        }
        out << "local Nash equilibrium: " << (rep.is_lne ? "yes" : "no")
            << (rep.is_equilibrium && !rep.is_lne ? " (first-order conditions only)" : "") << '\n';
        out << "dynamic stability: " << to_string(v.classification) << '\n';
    }

    if (a.dominance_load) {
        const std::size_t i = *a.dominance_load;
        if (i < 1 || i > cfg.size()) throw ConfigError("dominance load index out of range");
        if (a.grid_points < 2) throw ConfigError("dominance grid needs at least two points");
        const double top = a.grid_max > 0.0 ? a.grid_max : 100.0 * cfg.g_l();
        std::vector<double> grid(a.grid_points);
        for (std::size_t k = 0; k < grid.size(); ++k)
            grid[k] = top * static_cast<double>(k) / static_cast<double>(grid.size() - 1);
        const double others = s.sum() - s[i - 1];
        const DominanceScan scan = dominance_scan(cfg, i - 1, others, grid);
        const bool dominant = scan.verdict == DominanceVerdict::dominant_at_infinity;
        j["dominance"] = json{{"load", i},
                              {"g_others", others},
                              {"grid", grid},
                              {"utility", scan.utility},
                              {"dominant_at_infinity", dominant},
                              {"increasing_from", scan.increasing_from ? json(grid[*scan.increasing_from]) : json()},
                              {"tail_slope", scan.tail_slope}};
        if (!g.quiet) {
            out << "dominance scan for load " << i << ": "
                << (dominant ? "utility increases without bound along the grid tail" : "utility not increasing at the tail");
            if (scan.increasing_from) out << " (from g = " << grid[*scan.increasing_from] << ")";
            out << ", tail slope " << scan.tail_slope << '\n';
        }
    }
    write_json(output_path(g, "game.json"), j);
    return 0;
}

struct SweepArgs {
    std::string param;
    double from = 0.0;
    double to = 1.0;
    std::size_t steps = 20;
    bool simulate = false;
};

int sweep(const Globals& g, const SweepArgs& a, std::ostream& out) {
    const SweepParam p = parse_sweep_param(a.param);
    const Scenario sc = load_scenario(g.config);
    const SweepResult r = run_sweep(sc, p, a.from, a.to, a.steps, a.simulate);
    std::ostringstream csv;
    write_sweep_csv(csv, r, sc.loads.size());
    write_text(output_path(g, "sweep.csv"), csv.str());
    json j{{"param", to_string(p)}, {"points", r.points.size()}};
    j["fold"] = r.fold ? json{{"value", r.fold->value}, {"g_eq", r.fold->g_eq}, {"v", r.fold->v}} : json(nullptr);
    write_json(output_path(g, "sweep.json"), j);
    if (!g.quiet) {
        out << csv.str();
        if (r.fold)
            out << "fold: ungated branches merge at " << to_string(p) << " = " << format_number(r.fold->value)
                << " (g_eq = " << r.fold->g_eq << ", v = " << r.fold->v << ")\n";
        else
            out << "fold: not inside the swept range\n";
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Voltage collapse and load-curtailment analysis for star DC networks", "dcvc"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Scenario file (JSON)")->required();
    app.add_option("--out-dir", g.out_dir, "Directory for output files");
    app.add_flag("--quiet", g.quiet, "Suppress console reports");

    auto* sim = app.add_subcommand("simulate", "Integrate the scenario and write trace and report");

    double eq_time = 0.0;
    auto* eq = app.add_subcommand("equilibria", "Catalog every equilibrium at a frozen demand");
    eq->add_option("--at-time", eq_time, "Time at which the demand is frozen");

    double st_time = 0.0;
    std::vector<double> st_state;
    auto* st = app.add_subcommand("stability", "Linear stability of a state or of every equilibrium");
    st->add_option("--at-time", st_time, "Time at which the demand is frozen");
    st->add_option("--state", st_state, "Conductances, comma separated")->delimiter(',');

    GameArgs ga;
    std::size_t dom_load = 0;
    auto* gm = app.add_subcommand("game", "Local Nash equilibrium test at a state");
    gm->add_option("--state", ga.state, "Conductances, comma separated")->delimiter(',')->required();
    gm->add_option("--at-time", ga.at_time, "Time at which the demand is frozen");
    auto* dom_opt = gm->add_option("--dominance", dom_load, "Scan the utility of this load (1-based)");
    gm->add_option("--grid-max", ga.grid_max, "Upper end of the dominance grid (default 100 g_l)");
    gm->add_option("--grid-points", ga.grid_points, "Number of dominance grid points");

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "Equilibria and stability against one parameter");
    sw->add_option("--param", sa.param, "p0_scale, g_l or kappa")->required();
    sw->add_option("--from", sa.from, "First value")->required();
    sw->add_option("--to", sa.to, "Last value")->required();
    sw->add_option("--steps", sa.steps, "Number of intervals");
    sw->add_flag("--simulate", sa.simulate, "Also integrate each variant");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (*sim) return simulate(g, out);
        if (*eq) return equilibria(g, eq_time, out);
        if (*st) return stability(g, st_time, st_state, out);
        if (*gm) {
            if (*dom_opt) ga.dominance_load = dom_load;
            return game(g, ga, out);
        }
        if (*sw) return sweep(g, sa, out);
    } catch (const SingularGate& e) {
        err << "error: " << e.what();
        if (!std::isnan(e.time())) err << " (t = " << e.time() << ")";
        err << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace cli

}  // namespace dcvc
