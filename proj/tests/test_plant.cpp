#include <gtest/gtest.h>

#include <random>

#include "chiller/plant.hpp"

using namespace chiller;

namespace {

// Independent evaluation of the cubic, written out term by term.
double cubic(const std::array<double, 4>& c, double x) { return c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x; }

ChillerAction on_at(const PlantConfig& p, std::vector<double> flows) {
    ChillerAction a;
    a.flows = std::move(flows);
    a.on.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) a.on[i] = a.flows[i] > 0.0;
    return a;
}

} // namespace

TEST(PowerCurve, TableValues) {
    const auto p = canonical_plant();
    EXPECT_NEAR(power_from_plr(p.chillers[0], 0.0), 33.3469, 1e-9);
    EXPECT_NEAR(power_from_plr(p.chillers[0], 1.0), 199.4694, 1e-4);
    EXPECT_NEAR(power_from_plr(p.chillers[3], 0.5), 24.3344, 1e-4);
    for (const auto& c : p.chillers)
        for (double x : {0.0, 0.25, 0.7, 1.3}) EXPECT_NEAR(power_from_plr(c, x), cubic(c.power_coeffs, x), 1e-9);
}

TEST(PowerCurve, NegativePlrRejected) {
    const auto p = canonical_plant();
    EXPECT_THROW(power_from_plr(p.chillers[0], -0.1), DomainError);
}

TEST(PowerCurve, IncreasingOnOperatingRange) {
    const auto p = canonical_plant();
    for (const auto& c : p.chillers) {
        for (int k = 0; k <= 700; ++k) {
            const double x = 0.30 + 1e-3 * k;
            EXPECT_GT(power_slope(c, x), 0.0) << "chiller " << c.id << " plr " << x;
            if (k > 0) EXPECT_GT(power_from_plr(c, x), power_from_plr(c, x - 1e-3));
        }
    }
}

TEST(PartLoad, Definition) {
    EXPECT_DOUBLE_EQ(part_load_ratio(850, 1700), 0.5);
    EXPECT_DOUBLE_EQ(part_load_ratio(0, 1700), 0.0);
    EXPECT_DOUBLE_EQ(part_load_ratio(710, 710), 1.0);
    EXPECT_THROW(part_load_ratio(10, 0), DomainError);
}

TEST(ReturnTemperature, Examples) {
    const auto p = canonical_plant();
    EXPECT_NEAR(return_temperature(1000, 50, p), 10.7778, 1e-4);
    EXPECT_DOUBLE_EQ(return_temperature(0, 50, p), 6.0);
    EXPECT_NEAR(return_temperature(355, 14.5, p), 6.0 + 355.0 / (14.5 * 4.186), 1e-12);
    EXPECT_NEAR(return_temperature(355, 14.5, p), 11.849, 1e-3);
    EXPECT_THROW(return_temperature(100, 0, p), DomainError);
}

TEST(ReturnTemperature, DecreasingInFlow) {
    const auto p = canonical_plant();
    double prev = return_temperature(800, 10, p);
    for (double f = 11; f < 200; f += 1.0) {
        const double t = return_temperature(800, f, p);
        EXPECT_LT(t, prev);
        EXPECT_GT(t, p.t_supply);
        prev = t;
    }
}

TEST(Dispatch, TwoChillerExample) {
    const auto p = canonical_plant();
    const auto a = on_at(p, {30, 30, 0, 0});
    const auto t = steady_state_dispatch(p, a, 1000);
    EXPECT_NEAR(t.t_return, 9.9815, 1e-4);
    EXPECT_NEAR(t.plr[0], 0.2941, 1e-4);
    EXPECT_NEAR(t.plr[1], 0.2941, 1e-4);
    EXPECT_NEAR(t.cooling[0], 500, 1e-9);
    EXPECT_NEAR(t.cooling[1], 500, 1e-9);
    EXPECT_NEAR(t.unmet_load, 0.0, 1e-9);
    // Chiller 1 at PLR 500/1700.
    EXPECT_NEAR(t.power[0], 59.09, 0.01);
    EXPECT_NEAR(t.power[0], cubic(p.chillers[0].power_coeffs, 500.0 / 1700.0), 1e-9);
}

TEST(Dispatch, IdlePlant) {
    const auto p = canonical_plant();
    const auto t = steady_state_dispatch(p, on_at(p, {0, 0, 0, 0}), 0);
    EXPECT_EQ(t.total_power, 0.0);
    EXPECT_EQ(t.unmet_load, 0.0);
}

TEST(Dispatch, AllOffUnderLoad) {
    const auto p = canonical_plant();
    const auto t = steady_state_dispatch(p, on_at(p, {0, 0, 0, 0}), 700);
    EXPECT_EQ(t.unmet_load, 700.0);
    EXPECT_EQ(t.t_return, p.t_return_max);
}

TEST(Dispatch, SingleSmallChiller) {
    const auto p = canonical_plant();
    const auto t = steady_state_dispatch(p, on_at(p, {0, 0, 0, 14.5}), 355);
    EXPECT_NEAR(t.plr[3], 0.5, 1e-12);
    EXPECT_NEAR(t.power[3], 24.3344, 1e-4);
}

TEST(Dispatch, BadInput) {
    const auto p = canonical_plant();
    const auto a = on_at(p, {20, 0, 0, 0});
    EXPECT_THROW(steady_state_dispatch(p, a, std::nan("")), InputError);
    EXPECT_THROW(steady_state_dispatch(p, a, -1), InputError);
}

TEST(Dispatch, CappingSurfacesUnmetLoad) {
    auto p = canonical_plant();
    p.plr_max = 1.0;
    const auto t = steady_state_dispatch(p, on_at(p, {0, 0, 0, 21.2}), 1000);
    EXPECT_TRUE(t.capped[3]);
    EXPECT_NEAR(t.cooling[3], 710, 1e-9);
    EXPECT_NEAR(t.unmet_load, 290, 1e-9);
}

TEST(Decode, OffThresholdAndClamp) {
    const auto p = canonical_plant();
    const std::vector<double> req{7.0, 7.25, 10.0, 30.0};
    const auto a = decode_flows(p, req);
    EXPECT_FALSE(a.on[0]);
    EXPECT_EQ(a.flows[0], 0.0);
    EXPECT_TRUE(a.on[1]);
    EXPECT_EQ(a.flows[1], 14.5);
    EXPECT_EQ(a.flows[2], 14.5);
    EXPECT_EQ(a.flows[3], 21.2);
    EXPECT_THROW(decode_flows(p, std::vector<double>{1, 2}), ContractError);
}

TEST(Constraints, InteriorPoint) {
    const auto p = canonical_plant();
    const auto a = on_at(p, {30, 30, 0, 0});
    auto t = steady_state_dispatch(p, a, 1000);
    t.t_return = 10.0;
    const auto r = check_constraints(p, t, a);
    EXPECT_TRUE(r.all_satisfied());
}

TEST(Constraints, ReturnTemperatureMagnitude) {
    const auto p = canonical_plant();
    const auto a = on_at(p, {30, 30, 0, 0});
    auto t = steady_state_dispatch(p, a, 1000);
    t.t_return = 14.5;
    const auto r = check_constraints(p, t, a);
    EXPECT_FALSE(r.at(ConstraintId::ReturnTemperature).satisfied);
    EXPECT_NEAR(r.at(ConstraintId::ReturnTemperature).violation, 0.5, 1e-12);
}

TEST(Constraints, CopAtFullLoad) {
    const auto p = canonical_plant();
    const auto a = on_at(p, {50.8, 0, 0, 0});
    const auto t = steady_state_dispatch(p, a, 1700);
    EXPECT_NEAR(t.cop[0], 8.523, 1e-3);
    EXPECT_TRUE(check_constraints(p, t, a).at(ConstraintId::CopCap).satisfied);
}

TEST(Constraints, PermutationEquivariance) {
    const auto p = canonical_plant();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> flow(0.0, 50.0), load(0.0, 6000.0);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    PlantConfig q = p;
    for (std::size_t i = 0; i < 4; ++i) q.chillers[i] = p.chillers[perm[i]];
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> req(4);
        for (auto& f : req) f = flow(rng);
        std::vector<double> preq(4);
        for (std::size_t i = 0; i < 4; ++i) preq[i] = req[perm[i]];
        const double L = load(rng);
        const auto a = decode_flows(p, req);
        const auto b = decode_flows(q, preq);
        const auto ra = check_constraints(p, steady_state_dispatch(p, a, L), a);
        const auto rb = check_constraints(q, steady_state_dispatch(q, b, L), b);
        for (auto id : kAllConstraints) {
            EXPECT_EQ(ra.at(id).satisfied, rb.at(id).satisfied);
            // COP is infinite where a fitted curve gives non-positive power.
            auto same = [](double x, double y) { return std::isinf(x) || std::isinf(y) ? x == y : std::abs(x - y) <= 1e-9 * (1.0 + std::abs(x)); };
            EXPECT_TRUE(same(ra.at(id).violation, rb.at(id).violation)) << to_string(id);
            for (std::size_t i = 0; i < ra.at(id).per_chiller.size(); ++i)
                EXPECT_TRUE(same(rb.at(id).per_chiller[i], ra.at(id).per_chiller[perm[i]])) << to_string(id);
        }
    }
}

TEST(Identity, EnergyBalanceAndSplit) {
    const auto p = canonical_plant();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> req(4);
        for (std::size_t i = 0; i < 4; ++i) req[i] = u(rng) * p.chillers[i].flow_max;
        const auto a = decode_flows(p, req);
        if (a.on_count() == 0) continue;
        const double L = u(rng) * 5800.0 + 1.0;
        const auto t = steady_state_dispatch(p, a, L);
        if (std::find(t.capped.begin(), t.capped.end(), true) != t.capped.end()) continue;
        EXPECT_LE(std::abs(t.total_cooling() - L) / L, 1e-9);
        const double F = a.total_flow();
        for (std::size_t i = 0; i < 4; ++i)
            if (a.on[i]) EXPECT_NEAR(t.cooling[i] / L, a.flows[i] / F, 1e-12);
    }
}

TEST(Config, CanonicalValues) {
    const auto p = canonical_plant();
    ASSERT_EQ(p.size(), 4u);
    EXPECT_NO_THROW(validate(p));
    EXPECT_EQ(p.total_capacity(), 5810.0);
    EXPECT_FALSE(p.chillers[3].r_squared.has_value());
    EXPECT_NEAR(*p.chillers[0].r_squared, 0.9332, 1e-12);
    EXPECT_EQ(p.chillers[3].cop_max, 5.814);
    EXPECT_EQ(p.plr_max, 10.0);
    auto bad = p;
    bad.chillers[0].flow_min = 60;
    EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Constraints, NamesRoundTrip) {
    for (auto id : kAllConstraints) EXPECT_EQ(constraint_from_string(to_string(id)), id);
    EXPECT_THROW(constraint_from_string("nonsense"), ConfigError);
}
