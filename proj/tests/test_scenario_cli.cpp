#include "dcvc/cli.hpp"
#include "dcvc/errors.hpp"
#include "dcvc/scenario.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace dcvc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = DCVC_SCENARIO_DIR;

fs::path scratch(const std::string& tag) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("dcvc_test_" + std::to_string(::getpid()) + "_" + tag + "_" +
                                              std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

json minimal() {
    return json::parse(R"({
        "network": {"E": 2.0, "g_l": 1.0},
        "loads": [{"kind": "inflexible", "P0": [[0, 0.3]]}],
        "simulation": {"t_end": 5}
    })");
}

fs::path write_scenario(const fs::path& dir, const json& j) {
    const fs::path p = dir / "scenario.json";
    std::ofstream(p) << j.dump();
    return p;
}

}  // namespace

TEST_CASE("scenario schema is strict") {
    CHECK_NOTHROW(parse_scenario(minimal()));

    auto j = minimal();
    j["network"]["R"] = 1.0;
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["extra"] = 1;
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["simulation"].erase("t_end");
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["network"]["E"] = "two";
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["loads"][0]["kind"] = "elastic";
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["loads"][0]["P0"] = json::array({json::array({1, 0.3}), json::array({0, 0.4})});
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["loads"][0]["P0"] = json::array();
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["loads"].push_back(json{{"kind", "flexible"}, {"P0", 0.1}});
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["simulation"]["initial_g"] = json::array({0.1, 0.2});
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["outputs"] = json{{"sample_stride", 0}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);
}

TEST_CASE("defaults are filled in") {
    const Scenario sc = parse_scenario(minimal());
    CHECK(sc.kappa == 10.0);
    CHECK(sc.sim_options().dt == doctest::Approx(1e-3));
    CHECK(sc.collapse_voltage_fraction == 0.02);
    CHECK(sc.trace_path == "trace.csv");
    const auto s0 = default_initial_state(sc);
    CHECK(power_flow(sc.config_at(0), s0).dP[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(power_flow(sc.config_at(0), s0).g_eq < 1.0);
}

TEST_CASE("exit codes of the golden scenarios") {
    const fs::path dir = scratch("exit");
    const std::vector<std::pair<std::string, int>> expected{{"case1_inflexible_collapse.json", 2},
                                                            {"case2_flexible_curtailment.json", 0},
                                                            {"case3_mixed_curtailment.json", 0},
                                                            {"case3_inflexible_overload.json", 2}};
    for (const auto& [file, code] : expected) {
        CAPTURE(file);
        const Run r = run_cli({"--config", (kScenarios / file).string(), "--out-dir", dir.string(), "--quiet", "simulate"});
        CHECK(r.code == code);
        CHECK(r.err.empty());
    }
    CHECK(fs::exists(dir / "case2_trace.csv"));
    CHECK(fs::exists(dir / "case2_report.json"));
    CHECK(fs::exists(dir / "case2_report.txt"));
}

TEST_CASE("errors exit with status 1 and a diagnostic") {
    const fs::path dir = scratch("err");
    auto j = minimal();
    j["bogus"] = true;
    const auto bad = write_scenario(dir, j);
    Run r = run_cli({"--config", bad.string(), "--out-dir", dir.string(), "simulate"});
    CHECK(r.code == 1);
    CHECK(r.err.find("bogus") != std::string::npos);

    r = run_cli({"--config", (dir / "missing.json").string(), "simulate"});
    CHECK(r.code == 1);

    const auto good = write_scenario(dir, minimal());
    r = run_cli({"--config", good.string(), "--out-dir", dir.string(), "sweep", "--param", "voltage", "--from", "0",
                 "--to", "1"});
    CHECK(r.code == 1);
    r = run_cli({"--config", good.string(), "--out-dir", dir.string(), "game", "--state", "0.1,0.2"});
    CHECK(r.code == 1);
    r = run_cli({"--config", good.string(), "--out-dir", dir.string(), "equilibria", "--at-time", "99"});
    CHECK(r.code == 1);
    r = run_cli({"--config", good.string(), "frobnicate"});
    CHECK(r.code == 1);
}

TEST_CASE("trace CSV layout") {
    const fs::path dir = scratch("csv");
    auto j = minimal();
    j["outputs"] = json{{"trace_path", "t.csv"}, {"report_path", "r.json"}, {"sample_stride", 1000}};
    const auto p = write_scenario(dir, j);
    REQUIRE(run_cli({"--config", p.string(), "--out-dir", dir.string(), "--quiet", "simulate"}).code == 0);
    const std::string csv = slurp(dir / "t.csv");
    CHECK(csv.rfind("t,v,P_tot,g_1,P_1,dP_1\r\n", 0) == 0);
    std::istringstream lines(csv);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(row.back() == '\r');
    // 17 significant digits survive a round trip
    const std::string v = row.substr(row.find(',') + 1, row.find(',', row.find(',') + 1) - row.find(',') - 1);
    const double parsed = std::stod(v);
    CHECK(format_number(parsed) == v);
    const json rep = json::parse(slurp(dir / "r.json"));
    CHECK(rep["termination"] == "converged");
    CHECK(rep["curtailment"].is_null());
}

TEST_CASE("curtailment section balances the deficit") {
    const fs::path dir = scratch("kkt");
    REQUIRE(run_cli({"--config", (kScenarios / "case2_flexible_curtailment.json").string(), "--out-dir", dir.string(),
                     "--quiet", "simulate"})
                .code == 0);
    const json rep = json::parse(slurp(dir / "case2_report.json"));
    REQUIRE(rep["termination"] == "converged");
    const auto& c = rep["curtailment"];
    double sum = 0.0;
    for (double d : c["dP"]) sum += d;
    CHECK(std::abs(sum - c["deficit"].get<double>()) < 1e-6 * 1.0);
    CHECK(c["stationarity_violation"].get<double>() < 1e-6);
}

TEST_CASE("equilibria, stability and game subcommands") {
    const fs::path dir = scratch("sub");
    const std::string cfg = (kScenarios / "case2_flexible_curtailment.json").string();

    Run r = run_cli({"--config", cfg, "--out-dir", dir.string(), "equilibria", "--at-time", "0"});
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "equilibria.json"));
    CHECK(j["overloaded"] == false);

    r = run_cli({"--config", cfg, "--out-dir", dir.string(), "equilibria", "--at-time", "400"});
    CHECK(r.code == 0);
    j = json::parse(slurp(dir / "equilibria.json"));
    CHECK(j["overloaded"] == true);
    bool curtailed_stable = false;
    for (const auto& e : j["equilibria"])
        if (e["label"] == "{1,2,3}" && e["branch"] == "low") curtailed_stable = e["stability"]["classification"] == "stable";
    CHECK(curtailed_stable);

    r = run_cli({"--config", cfg, "--out-dir", dir.string(), "stability", "--at-time", "400"});
    CHECK(r.code == 0);
    CHECK(r.out.find("stable") != std::string::npos);

    r = run_cli({"--config", cfg, "--out-dir", dir.string(), "game", "--state", "0,0,0", "--dominance", "1"});
    CHECK(r.code == 0);
    j = json::parse(slurp(dir / "game.json"));
    CHECK(j["is_lne"] == false);
    CHECK(j["gradient"][0].get<double>() == doctest::Approx(0.2));
    CHECK(j["dominance"]["dominant_at_infinity"] == true);

    r = run_cli({"--config", cfg, "--out-dir", dir.string(), "stability", "--state", "0.2,0.3,0.4"});
    CHECK(r.code == 0);
}

TEST_CASE("sweeping demand locates the fold at capacity") {
    const Scenario sc = parse_scenario(minimal());
    const SweepResult r = run_sweep(sc, SweepParam::p0_scale, 0.5, 5.0, 9, false);
    REQUIRE(r.fold);
    CHECK(r.fold->value == doctest::Approx(1.0 / 0.3).epsilon(1e-9));
    CHECK(r.fold->g_eq == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.fold->v == doctest::Approx(1.0).epsilon(1e-6));
    for (const auto& p : r.points) {
        if (p.P0_total < p.P_max) {
            REQUIRE(p.ungated_low);
            CHECK(p.ungated_low->verdict == Classification::stable);
            REQUIRE(p.ungated_high);
            CHECK(p.ungated_high->verdict == Classification::unstable);
        } else {
            CHECK(p.equilibria == 0);
        }
    }
}

TEST_CASE("line sweep scales capacity linearly") {
    const Scenario sc = parse_scenario(minimal());
    const SweepResult r = run_sweep(sc, SweepParam::g_l, 0.5, 2.0, 3, false);
    for (const auto& p : r.points) CHECK(p.P_max == doctest::Approx(p.value));
}

TEST_CASE("curtailment allocation does not depend on the gain") {
    const Scenario sc = load_scenario(kScenarios / "case2_flexible_curtailment.json");
    const SweepResult r = run_sweep(sc, SweepParam::kappa, 2.0, 20.0, 3, true);
    REQUIRE(r.points.front().operating);
    const auto ref = r.points.front().operating->flow.dP;
    for (const auto& p : r.points) {
        REQUIRE(p.operating);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(p.operating->flow.dP[i] == doctest::Approx(ref[i]).epsilon(1e-12));
            CHECK(p.simulation->flow.back().dP[i] == doctest::Approx(ref[i]).scale(1.0).epsilon(1e-6));
        }
        CHECK(p.simulation->termination == Termination::converged);
    }
    std::ostringstream csv;
    write_sweep_csv(csv, r, 3);
    CHECK(csv.str().rfind("kappa,P0_tot", 0) == 0);
}
