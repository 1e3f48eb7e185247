#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "chiller/env.hpp"
#include "chiller/forecast.hpp"
#include "chiller/oracle.hpp"
#include "chiller/synthetic.hpp"

using namespace chiller;

namespace {

std::shared_ptr<const LoadSeries> constant_trace(std::size_t n, double load) {
    auto s = std::make_shared<LoadSeries>();
    for (std::size_t k = 0; k < n; ++k) {
        s->timestamps.push_back(days_from_civil(2024, 1, 1) * 86400 + 1800 * static_cast<std::int64_t>(k));
        s->load.push_back(load);
    }
    return s;
}

EpisodeConfig episode(std::shared_ptr<const LoadSeries> s) {
    EpisodeConfig ec;
    ec.loads = std::move(s);
    ec.forecaster = std::make_shared<PersistenceForecaster>();
    return ec;
}

PlantTelemetry telemetry_with(double power, std::vector<bool> on) {
    PlantTelemetry t;
    t.total_power = power;
    t.on = std::move(on);
    return t;
}

ConstraintReport clean_report() {
    ConstraintReport r;
    for (auto id : kAllConstraints) r.at(id).id = id;
    return r;
}

} // namespace

TEST(Reward, EnergyBalancePenalty) {
    RewardSpec spec;
    auto r = clean_report();
    r.at(ConstraintId::EnergyBalance).satisfied = false;
    r.at(ConstraintId::EnergyBalance).violation = 500;
    const auto out = priority_reward(r, telemetry_with(0, {false, false, false, false}), {}, spec);
    EXPECT_DOUBLE_EQ(out.reward, -15.0);
    EXPECT_EQ(out.active_component, "energy_balance");
    EXPECT_TRUE(out.hard_violation);
}

TEST(Reward, PriorityMasksLowerComponents) {
    RewardSpec spec;
    auto r = clean_report();
    r.at(ConstraintId::EnergyBalance).satisfied = false;
    r.at(ConstraintId::EnergyBalance).violation = 10;
    r.at(ConstraintId::ReturnTemperature).satisfied = false;
    r.at(ConstraintId::ReturnTemperature).violation = 3;
    const auto out = priority_reward(r, telemetry_with(0, {true, false, false, false}), {}, spec);
    EXPECT_EQ(out.active_component, "energy_balance");
    EXPECT_DOUBLE_EQ(out.reward, -10.0 * (1.0 + 10.0 / 1000.0));

    r.at(ConstraintId::EnergyBalance).satisfied = true;
    const auto t = priority_reward(r, telemetry_with(0, {true, false, false, false}), {}, spec);
    EXPECT_EQ(t.active_component, "t_return_range");
    EXPECT_DOUBLE_EQ(t.reward, -10.0 * (1.0 + 3.0 / 2.0));
}

TEST(Reward, BaseBranch) {
    RewardSpec spec;
    spec.power_scale = 400.0;
    const std::vector<bool> on{false, false, false, true};
    const auto out = priority_reward(clean_report(), telemetry_with(200.0, on), on, spec);
    EXPECT_NEAR(out.reward, 0.475, 1e-12);
    EXPECT_EQ(out.active_component, kBaseComponent);
    EXPECT_FALSE(out.hard_violation);
}

TEST(Reward, SoftTermsAndFloor) {
    RewardSpec spec;
    spec.power_scale = 1000.0;
    auto r = clean_report();
    r.at(ConstraintId::CopCap).satisfied = false;
    r.at(ConstraintId::CopCap).violation = 2.0;
    const std::vector<bool> prev{false, false, false, false};
    const std::vector<bool> on{true, false, false, true};
    const auto out = priority_reward(r, telemetry_with(100.0, on), prev, spec);
    EXPECT_NEAR(out.reward, 0.9 - 0.5 * 2.0 - 0.2 * 2 - 0.1 * 0.5, 1e-12);

    r.at(ConstraintId::CopCap).violation = 1e6;
    EXPECT_EQ(priority_reward(r, telemetry_with(100.0, on), prev, spec).reward, spec.base_floor);
}

TEST(Reward, Validation) {
    RewardSpec s;
    s.base_floor = -10.0;
    EXPECT_THROW(validate(s), ConfigError);
    s = {};
    s.lambda = {10.0};
    EXPECT_THROW(validate(s), ConfigError);
    s = {};
    s.hard_order = {ConstraintId::EnergyBalance, ConstraintId::EnergyBalance};
    EXPECT_THROW(validate(s), ConfigError);
    EXPECT_NO_THROW(validate(RewardSpec{}));
}

// Any hard-violating step scores below every hard-feasible step.
TEST(Reward, PenaltyDominance) {
    const auto plant = canonical_plant();
    RewardSpec spec;
    spec.power_scale = 250.0;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_ok = std::numeric_limits<double>::infinity();
    double best_bad = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 20000; ++k) {
        std::vector<double> req(4);
        for (std::size_t i = 0; i < 4; ++i) req[i] = u(rng) * plant.chillers[i].flow_max;
        std::vector<bool> prev(4);
        for (std::size_t i = 0; i < 4; ++i) prev[i] = u(rng) < 0.5;
        const auto a = decode_flows(plant, req);
        const double load = u(rng) < 0.05 ? 0.0 : 6000.0 * u(rng);
        const auto t = steady_state_dispatch(plant, a, load);
        const auto r = check_constraints(plant, t, a);
        const auto out = priority_reward(r, t, prev, spec);
        if (out.hard_violation) {
            EXPECT_LT(out.reward, 0.0);
            best_bad = std::max(best_bad, out.reward);
        } else {
            EXPECT_GT(out.reward, -soft_penalty_budget(spec) - 1e-12);
            worst_ok = std::min(worst_ok, out.reward);
        }
    }
    EXPECT_LT(best_bad, worst_ok);
}

TEST(EpisodeEnergy, Arithmetic) {
    EpisodeLog log;
    log.dt_hours = 0.5;
    EXPECT_EQ(episode_energy(log), 0.0);
    for (int k = 0; k < 48; ++k) {
        StepRecord r;
        r.telemetry.total_power = 100.0;
        r.energy_kwh = 50.0;
        log.steps.push_back(r);
    }
    EXPECT_DOUBLE_EQ(episode_energy(log), 2400.0);
}

TEST(Env, ZeroLoadReset) {
    ChillerEnv env(canonical_plant(), {});
    const auto obs = env.reset(episode(constant_trace(20, 0.0)));
    const auto& L = env.layout();
    ASSERT_EQ(obs.values.size(), L.size());
    EXPECT_EQ(L.size(), 48u + 5 * 4 + 1);
    for (std::size_t k = 0; k < L.window + 4 * L.chillers; ++k) EXPECT_EQ(obs.values[k], 0.0) << k;
    // Return-temperature channel sits at the supply temperature.
    EXPECT_EQ(obs.values[L.window + 4 * L.chillers], 0.0);
    EXPECT_EQ(env.last_telemetry().t_return, 6.0);
}

TEST(Env, PerfectForesightWindow) {
    const auto tr = synthetic_campus_load(3, 5);
    auto s = std::make_shared<LoadSeries>(tr.load);
    EpisodeConfig ec;
    ec.loads = s;
    ec.perfect_foresight = true;
    ec.start = 10;
    ChillerEnv env(canonical_plant(), {});
    env.reset(ec);
    for (std::size_t h = 0; h < 48; ++h) EXPECT_EQ(env.forecast()[h], s->load[10 + h]);
    const double cap = canonical_plant().total_capacity();
    for (std::size_t h = 0; h < 48; ++h) EXPECT_NEAR(env.observation().values[h], s->load[10 + h] / cap, 1e-12);
}

TEST(Env, Deterministic) {
    const auto tr = synthetic_campus_load(10, 6);
    auto s = std::make_shared<LoadSeries>(tr.load);
    auto run = [&] {
        ChillerEnv env(canonical_plant(), {});
        auto ec = episode(s);
        ec.start = 336;
        ec.length = 50;
        std::vector<double> trace = env.reset(ec).values;
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        while (!env.done()) {
            std::vector<double> a(4);
            for (auto& v : a) v = u(rng);
            const auto r = env.step(a);
            trace.push_back(r.reward);
            trace.insert(trace.end(), r.observation.values.begin(), r.observation.values.end());
        }
        return trace;
    };
    EXPECT_EQ(run(), run());
}

TEST(Env, AllOffUnderZeroLoad) {
    ChillerEnv env(canonical_plant(), {});
    env.reset(episode(constant_trace(5, 0.0)));
    const std::vector<double> off(4, -1.0);
    const auto r = env.step(off);
    EXPECT_FALSE(r.telemetry.any_on());
    EXPECT_FALSE(r.hard_violation);
    EXPECT_TRUE(hard_constraints_hold(r.report));
    EXPECT_DOUBLE_EQ(r.reward, 1.0);
}

TEST(Env, AllOffUnderLoad) {
    ChillerEnv env(canonical_plant(), {});
    env.reset(episode(constant_trace(5, 1000.0)));
    const auto r = env.step(std::vector<double>(4, -1.0));
    EXPECT_EQ(r.telemetry.unmet_load, 1000.0);
    EXPECT_EQ(r.active_component, "energy_balance");
    EXPECT_DOUBLE_EQ(r.reward, -20.0);
}

TEST(Env, OracleActionBeatsViolations) {
    const auto plant = canonical_plant();
    const auto sol = optimal_dispatch(plant, {}, 500.0);
    ASSERT_TRUE(sol.feasible);
    ChillerEnv env(plant, {});
    env.reset(episode(constant_trace(3, 500.0)));
    const double good = env.step_action(sol.action.flows).reward;

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int bad = 0;
    for (int k = 0; k < 2000; ++k) {
        env.reset(episode(constant_trace(3, 500.0)));
        std::vector<double> a(4);
        for (auto& v : a) v = u(rng);
        const auto r = env.step(a);
        if (!r.hard_violation) continue;
        ++bad;
        EXPECT_LT(r.reward, good);
    }
    EXPECT_GT(bad, 0);
}

TEST(Env, StepAfterDone) {
    ChillerEnv env(canonical_plant(), {});
    auto ec = episode(constant_trace(4, 100.0));
    ec.length = 2;
    env.reset(ec);
    const std::vector<double> a(4, 0.0);
    EXPECT_FALSE(env.step(a).done);
    EXPECT_TRUE(env.step(a).done);
    EXPECT_THROW(env.step(a), ContractError);
}

TEST(Env, ResetErrors) {
    ChillerEnv env(canonical_plant(), {});
    EpisodeConfig ec;
    EXPECT_THROW(env.reset(ec), ConfigError);
    ec.loads = constant_trace(4, 1.0);
    EXPECT_THROW(env.reset(ec), ConfigError); // no forecaster
    ec.forecaster = std::make_shared<PersistenceForecaster>();
    ec.start = 3;
    ec.length = 5;
    EXPECT_THROW(env.reset(ec), ConfigError);
}

TEST(Env, ColdStartFlag) {
    const auto tr = synthetic_campus_load(10, 6);
    EpisodeConfig ec;
    ec.loads = std::make_shared<LoadSeries>(tr.load);
    ec.exog = std::make_shared<ExogSeries>(tr.exog);
    ec.forecaster = std::make_shared<LagRegressionForecaster>(fit_lag_regression(tr.load, tr.exog));
    ec.start = 100;
    ChillerEnv env(canonical_plant(), {});
    EXPECT_FALSE(env.reset(ec).forecast_warm);
    ec.start = 336;
    EXPECT_TRUE(env.reset(ec).forecast_warm);
    EXPECT_EQ(env.observed_load(1), tr.load.load[335]);
    EXPECT_TRUE(std::isnan(env.observed_load(0)));
}

TEST(Action, RawMapping) {
    const auto p = canonical_plant();
    const auto f = raw_to_flows(p, std::vector<double>{-1.0, 0.0, 1.0, 0.5});
    EXPECT_EQ(f[0], 0.0);
    EXPECT_DOUBLE_EQ(f[1], 25.4);
    EXPECT_DOUBLE_EQ(f[2], 50.8);
    EXPECT_DOUBLE_EQ(f[3], 0.75 * 21.2);
    EXPECT_THROW(raw_to_flows(p, std::vector<double>{0.0}), ContractError);
    EXPECT_THROW(raw_to_flows(p, std::vector<double>{0.0, 0.0, 0.0, std::nan("")}), InputError);
    // Out-of-range raw values saturate.
    const auto g = raw_to_flows(p, std::vector<double>{-3.0, 3.0, 0.0, 0.0});
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 50.8);
}

TEST(EpisodeCsv, HeaderAndRows) {
    ChillerEnv env(canonical_plant(), {});
    env.reset(episode(constant_trace(3, 400.0)));
    while (!env.done()) env.step(std::vector<double>(4, 0.0));
    std::stringstream ss;
    write_episode_csv(ss, env.log(), 4);
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(header.rfind("step,timestamp,load_kw,forecast_kw,flow_1", 0), 0u);
    int rows = 0;
    for (std::string line; std::getline(ss, line);) ++rows;
    EXPECT_EQ(rows, 3);
}
