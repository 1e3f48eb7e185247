#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "chiller/bench.hpp"

using namespace chiller;

namespace {

BenchConfig small_bench() {
    BenchConfig c;
    c.data.train_days = 12;
    c.data.eval_days = 2;
    c.data.warmup_days = 7;
    c.forecast.model = "seasonal_naive";
    c.oracle.split_grid = 21;
    c.oracle.flow_grid = 41;
    c.ppo.hidden = {8, 8};
    c.ppo.steps_per_batch = 64;
    c.ppo.minibatch_size = 32;
    c.training.episode_length = 48;
    c.ppo.seed = c.seed;
    return c;
}

std::string report_text(const BenchReport& r) {
    std::ostringstream s;
    write_report_text(s, r);
    return s.str();
}

std::shared_ptr<const ppo::ActorCritic> quick_agent(const BenchConfig& cfg, const BenchData& d, const RewardSpec& rw,
                                                    AgentKind kind, const std::shared_ptr<const Forecaster>& fc) {
    auto env = make_task_env(cfg, d, rw, kind, fc);
    auto st = ppo::train(env, cfg.ppo, 2 * cfg.ppo.steps_per_batch);
    return std::make_shared<ppo::ActorCritic>(std::move(st.ac));
}

} // namespace

TEST(Config, RoundTripAndHash) {
    const BenchConfig c = small_bench();
    const auto j = to_json(c);
    const auto back = bench_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(to_json(back).dump(), j.dump());
    EXPECT_EQ(config_hash(j), config_hash(to_json(back)));
    auto other = c;
    other.data.eval_seed = 99;
    EXPECT_NE(config_hash(to_json(other)), config_hash(j));
    EXPECT_EQ(config_hash(j).size(), 16u);
}

TEST(Config, PlantRoundTrip) {
    const auto p = canonical_plant();
    const auto q = plant_from_json(nlohmann::json::parse(to_json(p).dump()));
    ASSERT_EQ(q.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(q.chillers[i].power_coeffs, p.chillers[i].power_coeffs);
        EXPECT_EQ(q.chillers[i].r_squared, p.chillers[i].r_squared);
        EXPECT_EQ(q.chillers[i].flow_max, p.chillers[i].flow_max);
    }
    EXPECT_EQ(q.plr_max, 10.0);
}

TEST(Config, Errors) {
    auto j = to_json(small_bench());
    j["forecast"]["model"] = "crystal_ball";
    EXPECT_THROW(bench_from_json(j), ConfigError);
    j = to_json(small_bench());
    j["schema_version"] = 7;
    EXPECT_THROW(bench_from_json(j), ConfigError);
    j = to_json(small_bench());
    j["reward"]["base_floor"] = -50.0;
    EXPECT_THROW(bench_from_json(j), ConfigError);
    EXPECT_THROW(load_bench_config("/nonexistent/bench.json"), ConfigError);
    auto pj = to_json(canonical_plant());
    pj["chillers"][0].erase("flow_max_kgps");
    EXPECT_THROW(plant_from_json(pj), ConfigError);
}

TEST(Config, PowerScaleKey) {
    auto j = to_json(small_bench());
    EXPECT_EQ(j["reward"]["power_scale_kw"], "calibrate");
    j["reward"]["power_scale_kw"] = 300.0;
    const auto c = bench_from_json(j);
    EXPECT_FALSE(c.calibrate_power_scale);
    EXPECT_EQ(c.reward.power_scale, 300.0);
}

TEST(Compare, RowsBaselineAndLogs) {
    const auto cfg = small_bench();
    const auto d = make_bench_data(cfg);
    const auto rw = effective_reward(cfg, d);
    const auto fc = make_forecaster(cfg, d);
    CompareInputs in;
    in.one_step = quick_agent(cfg, d, rw, AgentKind::OneStep, fc);
    const auto rep = run_compare(cfg, d, rw, fc, in);

    ASSERT_EQ(rep.rows.size(), 4u);
    const auto* rb = find_row(rep, "rule_based");
    ASSERT_TRUE(rb && rb->ok);
    EXPECT_EQ(rb->saved_kwh, 0.0);
    EXPECT_EQ(rb->saved_pct, 0.0);
    EXPECT_EQ(rb->steps, 96u);

    const auto* rh = find_row(rep, "receding_horizon_rl");
    ASSERT_TRUE(rh);
    EXPECT_FALSE(rh->ok);
    EXPECT_EQ(rh->error, "checkpoint missing");
    EXPECT_TRUE(find_row(rep, "one_step_rl")->ok);

    const auto* orc = find_row(rep, "oracle");
    for (const auto& row : rep.rows)
        if (row.ok) EXPECT_LE(orc->energy_kwh, row.energy_kwh + 1e-6) << row.name;

    // Per-step logs add up to the reported totals.
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        if (!rep.rows[k].ok) continue;
        double e = 0.0;
        for (const auto& s : rep.logs[k].steps) e += s.energy_kwh;
        EXPECT_NEAR(e, rep.rows[k].energy_kwh, 1e-6 * rep.rows[k].energy_kwh);
    }
    const auto text = report_text(rep);
    EXPECT_NE(text.find("config_hash: " + config_hash(to_json(cfg))), std::string::npos);
    EXPECT_NE(text.find("92.35"), std::string::npos);
    EXPECT_NE(text.find("74.35"), std::string::npos);
    EXPECT_NE(text.find("receding_horizon_rl  ERROR"), std::string::npos);
}

TEST(Compare, ReportIsReproducible) {
    const auto cfg = small_bench();
    auto once = [&] {
        const auto d = make_bench_data(cfg);
        const auto rw = effective_reward(cfg, d);
        const auto fc = make_forecaster(cfg, d);
        CompareInputs in;
        in.receding_horizon = quick_agent(cfg, d, rw, AgentKind::RecedingHorizon, fc);
        const auto rep = run_compare(cfg, d, rw, fc, in);
        return report_text(rep) + to_json(rep).dump();
    };
    EXPECT_EQ(once(), once());
}

TEST(Compare, OutputFiles) {
    const auto cfg = small_bench();
    const auto d = make_bench_data(cfg);
    const auto rw = effective_reward(cfg, d);
    const auto rep = run_compare(cfg, d, rw, make_forecaster(cfg, d), {});
    const auto dir = std::filesystem::temp_directory_path() / "chiller_bench_out";
    std::filesystem::remove_all(dir);
    write_compare_outputs(dir, rep, cfg.plant.size());
    for (const char* f : {"report.txt", "report.json", "daily_energy.csv", "constraint_stats.csv",
                          "steps_rule_based.csv", "steps_oracle.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_FALSE(std::filesystem::exists(dir / "steps_one_step_rl.csv"));
    std::ifstream daily(dir / "daily_energy.csv");
    std::string header;
    std::getline(daily, header);
    EXPECT_EQ(header, "day,rule_based,oracle");
    std::filesystem::remove_all(dir);
}

TEST(Calibration, PowerScaleIsRuleBasedMean) {
    const auto cfg = small_bench();
    const auto d = make_bench_data(cfg);
    const double s = calibrate_power_scale(cfg, d);
    EXPECT_GT(s, 50.0);
    EXPECT_LT(s, 1000.0);
    EXPECT_EQ(s, calibrate_power_scale(cfg, d));
}
