#pragma once

// Scenario files, run reports and their serialisations.

#include "dcvc/dynamics.hpp"
#include "dcvc/equilibrium.hpp"
#include "dcvc/network.hpp"
#include "dcvc/stability.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dcvc {

struct LoadSchedule {
    LoadKind kind = LoadKind::inflexible;
    double theta = 1.0;
    std::vector<Breakpoint> P0;
};

struct Scenario {
    NetworkParams network;
    std::vector<LoadSchedule> loads;
    double kappa = kDefaultKappa;

    std::optional<double> dt;  ///< unset: SimOptions::default_dt at t = 0
    double t_end = 0.0;
    double collapse_voltage_fraction = 0.02;
    double settle_tol = 1e-9;
    std::optional<double> settle_window;
    std::optional<std::vector<double>> initial_g;

    std::string trace_path = "trace.csv";
    std::string report_path = "report.json";
    std::size_t sample_stride = 1;

    DemandSchedule schedule() const;
    /// Network with the demand frozen at time t.
    SystemConfig config_at(double t) const;
    SimOptions sim_options() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ConfigError before anything is computed.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

/// Initial state when the scenario gives none: the operating point of the
/// catalog at t = 0. Throws ConfigError when there is none.
ConductanceState default_initial_state(const Scenario& sc);

struct CatalogEntry {
    Equilibrium eq;
    StabilityVerdict verdict;
    bool lne = false;
    double residual = 0.0;
};

struct SubsetNote {
    IndexSet G;
    SubsetStatus status = SubsetStatus::feasible;
    std::string diagnostic;
};

struct Catalog {
    double P0_total = 0.0;
    double P_max = 0.0;
    std::vector<CatalogEntry> entries;
    std::vector<SubsetNote> notes;  ///< every subset that produced no equilibrium
    /// Under overload: subsets strictly between the empty set and F that
    /// still carry equilibria.
    std::vector<IndexSet> partial_subsets_under_overload;
};

Catalog build_catalog(const SystemConfig& cfg);

/// The stable equilibrium inside the closure of M with the fewest gated
/// loads, or nullptr.
const CatalogEntry* operating_point(const Catalog& c);

struct RunReport {
    Termination termination = Termination::horizon_reached;
    double termination_time = 0.0;
    std::size_t steps = 0;
    std::size_t projection_count = 0;
    double dt = 0.0;
    ConductanceState final_g;
    std::vector<double> final_demand;
    PowerFlow final_flow;
    Catalog catalog;  ///< at the final demand
    std::optional<CurtailmentReport> curtailment;
    std::vector<SimEvent> events;
};

RunReport make_report(const Scenario& sc, const SimTrace& trace, double dt);

std::string subset_label(const IndexSet& G);

nlohmann::json to_json(const Equilibrium& eq);
nlohmann::json to_json(const StabilityVerdict& v);
nlohmann::json to_json(const CurtailmentReport& c);
nlohmann::json to_json(const Catalog& c);
nlohmann::json to_json(const RunReport& r);

void render(std::ostream& os, const Catalog& c);
void render(std::ostream& os, const RunReport& r);

/// RFC 4180 trace: t, v, P_tot, then g_i, P_i, dP_i per load, 17 significant digits.
void write_trace_csv(std::ostream& os, const SimTrace& trace);

/// printf "%.17g".
std::string format_number(double x);

}  // namespace dcvc
