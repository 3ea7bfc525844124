#include "dcvc/equilibrium.hpp"
#include "dcvc/errors.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace dcvc;

namespace {

const Equilibrium* find_branch(const std::vector<Equilibrium>& eqs, Branch b) {
    for (const auto& e : eqs)
        if (e.branch == b) return &e;
    return nullptr;
}

}  // namespace

TEST_CASE("single inflexible load: the two roots of the power-flow quadratic") {
    // 4 g / (g + 1)^2 = P0  =>  g = (2 - P0 -+ 2 sqrt(1 - P0)) / P0
    for (double P0 : {0.05, 0.3, 0.75, 0.999}) {
        const SystemConfig cfg({2.0, 1.0}, {{P0, LoadKind::inflexible}});
        const auto eqs = enumerate_equilibria(cfg, ControllerParams::from(cfg));
        REQUIRE(eqs.size() == 2);
        const auto* lo = find_branch(eqs, Branch::low);
        const auto* hi = find_branch(eqs, Branch::high);
        REQUIRE(lo);
        REQUIRE(hi);
        CHECK(lo->g_star[0] == doctest::Approx((2 - P0 - 2 * std::sqrt(1 - P0)) / P0).epsilon(1e-12));
        CHECK(hi->g_star[0] == doctest::Approx((2 - P0 + 2 * std::sqrt(1 - P0)) / P0).epsilon(1e-12));
        CHECK(lo->g_star[0] * hi->g_star[0] == doctest::Approx(1.0));
        CHECK(lo->region == Region::interior_M);
        CHECK(hi->region == Region::exterior_M);
    }
}

TEST_CASE("roots merge at capacity and vanish beyond it") {
    const SystemConfig at({2.0, 1.0}, {{1.0, LoadKind::inflexible}});
    const auto sol = solve_subset(at, ControllerParams::from(at), {});
    REQUIRE(sol.equilibria.size() == 1);
    CHECK(sol.equilibria[0].branch == Branch::fold);
    CHECK(sol.equilibria[0].region == Region::boundary_M);
    CHECK(sol.equilibria[0].flow.v == doctest::Approx(1.0));

    const SystemConfig over({2.0, 1.0}, {{1.0 + 1e-9, LoadKind::inflexible}});
    const auto none = solve_subset(over, ControllerParams::from(over), {});
    CHECK(none.equilibria.empty());
    CHECK(none.status == SubsetStatus::capacity_exceeded);
}

TEST_CASE("no ungated demand leaves a single point") {
    const SystemConfig cfg({2.0, 1.0}, {{0.2, LoadKind::flexible, 1.0}, {0.3, LoadKind::flexible, 2.0}});
    const auto ctrl = ControllerParams::from(cfg);
    const auto eqs = solve_subset_equilibria(cfg, ctrl, {0, 1});
    REQUIRE(eqs.size() == 1);
    CHECK(eqs[0].g_star[0] == ctrl.g_bar[0]);
    CHECK(eqs[0].g_star[1] == ctrl.g_bar[1]);
}

TEST_CASE("negative targets rule a family out") {
    const SystemConfig cfg({2.0, 1.0}, {{0.3, LoadKind::flexible, 1.0}, {0.3, LoadKind::flexible, 1.0},
                                        {1.1, LoadKind::inflexible}});
    const auto sol = solve_subset(cfg, ControllerParams::from(cfg), {0});
    CHECK(sol.status == SubsetStatus::negative_target);
    CHECK(sol.equilibria.empty());
    CHECK_FALSE(sol.diagnostic.empty());
    CHECK_THROWS_AS(solve_subset(cfg, ControllerParams::from(cfg), {2}), ConfigError);
}

TEST_CASE("every enumerated point is a fixed point of the gated dynamics") {
    testing::Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nf = testing::pick(rng, 0, 3);
        const std::size_t ni = testing::pick(rng, nf == 0 ? 1 : 0, 2);
        const auto cfg = testing::random_config(rng, {nf, ni, testing::uniform(rng, 0.2, 1.6)});
        const auto ctrl = ControllerParams::from(cfg);
        const auto scale = cfg.P_max();
        for (const auto& eq : enumerate_equilibria(cfg, ctrl)) {
            CHECK(equilibrium_residual(cfg, ctrl, eq) < 1e-10 * scale);
            const auto r = rhs(cfg, ctrl, eq.g_star);
            for (double x : r) CHECK(std::abs(x) < 1e-9 * cfg.g_l());
        }
    }
}

TEST_CASE("boundary tag uses a tolerance relative to the line") {
    const SystemConfig cfg({2.0, 1e6}, {{0.1, LoadKind::inflexible}});
    CHECK(region_of(cfg, 1e6 * (1 + 1e-13)) == Region::boundary_M);
    CHECK(region_of(cfg, 1e6 * (1 - 1e-9)) == Region::interior_M);
    CHECK(region_of(cfg, 1e6 * (1 + 1e-9)) == Region::exterior_M);
}

TEST_CASE("curtailment shares are inversely proportional to the weights") {
    const SystemConfig cfg({2.0, 1.0}, {{0.32, LoadKind::flexible, 1.0}, {0.40, LoadKind::flexible, 2.0},
                                        {0.48, LoadKind::flexible, 4.0}});
    const auto ctrl = ControllerParams::from(cfg);
    const auto eqs = solve_subset_equilibria(cfg, ctrl, cfg.flexible());
    REQUIRE(eqs.size() == 1);
    const CurtailmentReport r = curtailment_report(cfg, eqs[0]);
    CHECK(r.deficit == doctest::Approx(-0.2));
    CHECK(r.dP[0] == doctest::Approx(-0.2 / 1.75));
    CHECK(r.dP[1] == doctest::Approx(-0.2 / 3.5));
    CHECK(r.dP[2] == doctest::Approx(-0.2 / 7.0));
    CHECK(r.max_violation < 1e-12);
    // weighted least squares: theta_i dP_i common
    for (std::size_t k = 0; k < 3; ++k) CHECK(cfg.loads()[k].theta * r.dP[k] == doctest::Approx(r.multiplier));

    const auto lo = solve_subset_equilibria(cfg.with_demand(std::vector<double>{0.1, 0.1, 0.1}), ctrl, {});
    CHECK_THROWS_AS(curtailment_report(cfg, lo.at(0)), WrongEquilibriumKind);
}

TEST_CASE("partially gated equilibria can exist under overload") {
    // Two identical flexible loads, 10% overload, load 1 gated.
    const SystemConfig cfg({2.0, 1.0}, {{0.55, LoadKind::flexible, 1.0}, {0.55, LoadKind::flexible, 1.0}});
    const auto eqs = solve_subset_equilibria(cfg, ControllerParams::from(cfg), {0});
    REQUIRE(eqs.size() == 2);
    const auto* lo = find_branch(eqs, Branch::low);
    REQUIRE(lo);
    CHECK(lo->g_star[0] == doctest::Approx(0.5));
    CHECK(lo->region == Region::exterior_M);
}

TEST_CASE("enumeration guard") {
    std::vector<LoadSpec> loads(21, LoadSpec{0.01, LoadKind::flexible, 1.0});
    const SystemConfig cfg({2.0, 1.0}, loads);
    CHECK_THROWS_AS(enumerate_equilibria(cfg, ControllerParams::from(cfg)), TooManyFlexibleLoads);
}

TEST_CASE("grid search finds nothing the enumeration misses") {
    testing::Rng rng(17);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t nf = testing::pick(rng, 0, 2);
        const auto cfg = testing::random_config(rng, {nf, 2 - nf, testing::uniform(rng, 0.3, 1.4)});
        const auto eqs = enumerate_equilibria(cfg, ControllerParams::from(cfg));
        testing::GridOracle oracle(cfg, 5.0 * cfg.g_l(), 1e-3 * cfg.g_l());
        for (const auto& c : oracle.clusters()) {
            bool matched = false;
            for (const auto& e : eqs) matched = matched || c.covers(e.g_star.values(), oracle.cell_width());
            CHECK(matched);
        }
    }
}
