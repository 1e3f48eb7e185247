#pragma once

// JSON configuration files: plant description and benchmark settings.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiller/controllers.hpp"
#include "chiller/env.hpp"
#include "chiller/errors.hpp"
#include "chiller/oracle.hpp"
#include "chiller/plant.hpp"
#include "chiller/ppo.hpp"

namespace chiller {

using nlohmann::json;

inline constexpr int kPlantSchemaVersion = 1;
inline constexpr int kBenchSchemaVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (sorted-key, compact) serialisation.
inline std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
}

namespace detail {

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void check_schema(const json& j, int expected, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
    if (!j.contains("schema_version")) throw ConfigError(std::string(what) + ": schema_version missing");
    const int v = j.at("schema_version").get<int>();
    if (v != expected)
        throw ConfigError(std::string(what) + ": unsupported schema_version " + std::to_string(v));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Plant

inline json to_json(const PlantConfig& p) {
    json chillers = json::array();
    for (const auto& c : p.chillers) {
        json row = {{"id", c.id},
                    {"rated_capacity_kw", c.rated_capacity},
                    {"flow_min_kgps", c.flow_min},
                    {"flow_max_kgps", c.flow_max},
                    {"cop_max", c.cop_max},
                    {"power_coeffs_kw", c.power_coeffs}};
        row["r_squared"] = c.r_squared ? json(*c.r_squared) : json(nullptr);
        chillers.push_back(row);
    }
    return {{"schema_version", kPlantSchemaVersion},
            {"units", {{"power", "kW"}, {"flow", "kg/s"}, {"temperature", "degC"}, {"c_w", "kJ/(kg K)"}}},
            {"t_supply_c", p.t_supply},
            {"c_w", p.c_w},
            {"plr_min", p.plr_min},
            {"plr_max", p.plr_max},
            {"t_return_min_c", p.t_return_min},
            {"t_return_max_c", p.t_return_max},
            {"dt_hours", p.dt_hours},
            {"off_fraction", p.off_fraction},
            {"chillers", chillers}};
}

inline PlantConfig plant_from_json(const json& j) {
    detail::check_schema(j, kPlantSchemaVersion, "plant config");
    PlantConfig p;
    p.chillers.clear();
    detail::get_opt(j, "t_supply_c", p.t_supply);
    detail::get_opt(j, "c_w", p.c_w);
    detail::get_opt(j, "plr_min", p.plr_min);
    detail::get_opt(j, "plr_max", p.plr_max);
    detail::get_opt(j, "t_return_min_c", p.t_return_min);
    detail::get_opt(j, "t_return_max_c", p.t_return_max);
    detail::get_opt(j, "dt_hours", p.dt_hours);
    detail::get_opt(j, "off_fraction", p.off_fraction);
    if (!j.contains("chillers") || !j["chillers"].is_array()) throw ConfigError("plant config: chillers array missing");
    try {
        for (const auto& c : j["chillers"]) {
            ChillerSpec s;
            s.id = c.at("id").get<int>();
            s.rated_capacity = c.at("rated_capacity_kw").get<double>();
            s.flow_min = c.at("flow_min_kgps").get<double>();
            s.flow_max = c.at("flow_max_kgps").get<double>();
            s.cop_max = c.at("cop_max").get<double>();
            s.power_coeffs = c.at("power_coeffs_kw").get<std::array<double, 4>>();
            if (c.contains("r_squared") && !c["r_squared"].is_null()) s.r_squared = c["r_squared"].get<double>();
            p.chillers.push_back(s);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("plant config: ") + e.what());
    }
    validate(p);
    return p;
}

inline PlantConfig load_plant(const std::filesystem::path& path) { return plant_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Component blocks

inline json to_json(const RewardSpec& r) {
    json order = json::array();
    for (auto id : r.hard_order) order.push_back(std::string(to_string(id)));
    return {{"hard_order", order},
            {"lambda", r.lambda},
            {"hard_scale", r.hard_scale},
            {"soft_weights",
             {{"plr_range", r.soft.plr_range},
              {"min_flow", r.soft.min_flow},
              {"cop_cap", r.soft.cop_cap},
              {"switching", r.soft.switching},
              {"sparsity", r.soft.sparsity}}},
            {"power_scale_kw", r.power_scale},
            {"base_floor", r.base_floor}};
}

inline RewardSpec reward_from_json(const json& j, RewardSpec r = {}) {
    if (j.contains("hard_order")) {
        r.hard_order.clear();
        for (const auto& s : j["hard_order"]) r.hard_order.push_back(constraint_from_string(s.get<std::string>()));
    }
    detail::get_opt(j, "lambda", r.lambda);
    detail::get_opt(j, "hard_scale", r.hard_scale);
    if (j.contains("soft_weights")) {
        const auto& w = j["soft_weights"];
        detail::get_opt(w, "plr_range", r.soft.plr_range);
        detail::get_opt(w, "min_flow", r.soft.min_flow);
        detail::get_opt(w, "cop_cap", r.soft.cop_cap);
        detail::get_opt(w, "switching", r.soft.switching);
        detail::get_opt(w, "sparsity", r.soft.sparsity);
    }
    if (j.contains("power_scale_kw") && j["power_scale_kw"].is_number()) r.power_scale = j["power_scale_kw"].get<double>();
    detail::get_opt(j, "base_floor", r.base_floor);
    validate(r);
    return r;
}

inline json to_json(const RuleBasedConfig& c) {
    return {{"staging_order", c.staging_order},
            {"stage_up", c.stage_up},
            {"stage_down", c.stage_down},
            {"reaction_lag", c.reaction_lag},
            {"design_delta_t_c", c.design_delta_t},
            {"working_hours",
             {{"start_hour", c.working.start_hour},
              {"end_hour", c.working.end_hour},
              {"weekdays_only", c.working.weekdays_only},
              {"min_on", c.working.min_on}}}};
}

inline RuleBasedConfig rule_based_from_json(const json& j, RuleBasedConfig c = {}) {
    detail::get_opt(j, "staging_order", c.staging_order);
    detail::get_opt(j, "stage_up", c.stage_up);
    detail::get_opt(j, "stage_down", c.stage_down);
    detail::get_opt(j, "reaction_lag", c.reaction_lag);
    detail::get_opt(j, "design_delta_t_c", c.design_delta_t);
    if (j.contains("working_hours")) {
        const auto& w = j["working_hours"];
        detail::get_opt(w, "start_hour", c.working.start_hour);
        detail::get_opt(w, "end_hour", c.working.end_hour);
        detail::get_opt(w, "weekdays_only", c.working.weekdays_only);
        detail::get_opt(w, "min_on", c.working.min_on);
    }
    return c;
}

inline json to_json(const OracleConfig& c) {
    return {{"split_grid", c.split_grid}, {"flow_grid", c.flow_grid}, {"polish", c.polish}, {"enforce_soft", c.enforce_soft},
            {"tie_break", "minimal_total_flow"}};
}

inline OracleConfig oracle_from_json(const json& j, OracleConfig c = {}) {
    detail::get_opt(j, "split_grid", c.split_grid);
    detail::get_opt(j, "flow_grid", c.flow_grid);
    detail::get_opt(j, "polish", c.polish);
    detail::get_opt(j, "enforce_soft", c.enforce_soft);
    if (j.contains("tie_break") && j["tie_break"].get<std::string>() != "minimal_total_flow")
        throw ConfigError("oracle: unknown tie_break rule");
    validate(c);
    return c;
}

inline json to_json(const RhConfig& c) { return {{"horizon", c.horizon}, {"replan_interval", c.replan_interval}}; }

inline RhConfig rh_from_json(const json& j, RhConfig c = {}) {
    detail::get_opt(j, "horizon", c.horizon);
    detail::get_opt(j, "replan_interval", c.replan_interval);
    validate(c);
    return c;
}

inline json to_json(const ppo::PpoConfig& c) {
    return {{"gamma", c.gamma},
            {"gae_lambda", c.gae_lambda},
            {"clip_ratio", c.clip_ratio},
            {"pi_lr", c.pi_lr},
            {"vf_lr", c.vf_lr},
            {"update_epochs", c.update_epochs},
            {"minibatch_size", c.minibatch_size},
            {"steps_per_batch", c.steps_per_batch},
            {"entropy_coef", c.entropy_coef},
            {"vf_coef", c.vf_coef},
            {"max_grad_norm", c.max_grad_norm},
            {"target_kl", c.target_kl},
            {"init_log_std", c.init_log_std},
            {"hidden", c.hidden},
            {"activation", nn::to_string(c.activation)},
            {"normalize_obs", c.normalize_obs},
            {"obs_clip", c.obs_clip}};
}

inline ppo::PpoConfig ppo_from_json(const json& j, ppo::PpoConfig c = {}) {
    detail::get_opt(j, "gamma", c.gamma);
    detail::get_opt(j, "gae_lambda", c.gae_lambda);
    detail::get_opt(j, "clip_ratio", c.clip_ratio);
    detail::get_opt(j, "pi_lr", c.pi_lr);
    detail::get_opt(j, "vf_lr", c.vf_lr);
    detail::get_opt(j, "update_epochs", c.update_epochs);
    detail::get_opt(j, "minibatch_size", c.minibatch_size);
    detail::get_opt(j, "steps_per_batch", c.steps_per_batch);
    detail::get_opt(j, "entropy_coef", c.entropy_coef);
    detail::get_opt(j, "vf_coef", c.vf_coef);
    detail::get_opt(j, "max_grad_norm", c.max_grad_norm);
    detail::get_opt(j, "target_kl", c.target_kl);
    detail::get_opt(j, "init_log_std", c.init_log_std);
    detail::get_opt(j, "hidden", c.hidden);
    if (j.contains("activation")) c.activation = nn::activation_from_string(j["activation"].get<std::string>());
    detail::get_opt(j, "normalize_obs", c.normalize_obs);
    detail::get_opt(j, "obs_clip", c.obs_clip);
    ppo::validate(c);
    return c;
}

// ---------------------------------------------------------------------------
// Benchmark configuration

struct DataConfig {
    std::size_t train_days = 180;
    std::uint64_t train_seed = 11;
    std::size_t eval_days = 60;
    std::uint64_t eval_seed = 22;
    std::size_t warmup_days = 7; // history ahead of the evaluation window
    double noise = 1.0;
    std::string eval_csv; // optional measured trace replacing the synthetic evaluation trace
};

struct TrainingConfig {
    std::size_t total_steps = 200000;
    std::size_t episode_length = 336;
    std::size_t smoke_batches = 2;
};

struct ForecastConfig {
    std::string model = "lag_regression"; // lag_regression | seasonal_naive | persistence | perfect
    double ridge = 1.0;
};

struct BenchConfig {
    std::uint64_t seed = 7;
    PlantConfig plant = canonical_plant();
    DataConfig data{};
    ForecastConfig forecast{};
    RewardSpec reward{};
    bool calibrate_power_scale = true;
    RuleBasedConfig rule_based{};
    RhConfig receding_horizon{};
    ppo::PpoConfig ppo{};
    TrainingConfig training{};
    OracleConfig oracle{};
    std::string rh_checkpoint = "rh_agent.ckpt.json";
    std::string one_step_checkpoint = "one_step_agent.ckpt.json";
    std::filesystem::path base_dir = ".";
};

inline json to_json(const BenchConfig& c) {
    json reward = to_json(c.reward);
    if (c.calibrate_power_scale) reward["power_scale_kw"] = "calibrate";
    return {{"schema_version", kBenchSchemaVersion},
            {"seed", c.seed},
            {"plant", to_json(c.plant)},
            {"data",
             {{"train_days", c.data.train_days},
              {"train_seed", c.data.train_seed},
              {"eval_days", c.data.eval_days},
              {"eval_seed", c.data.eval_seed},
              {"warmup_days", c.data.warmup_days},
              {"noise", c.data.noise},
              {"eval_csv", c.data.eval_csv}}},
            {"forecast", {{"model", c.forecast.model}, {"ridge", c.forecast.ridge}}},
            {"reward", reward},
            {"rule_based", to_json(c.rule_based)},
            {"receding_horizon", to_json(c.receding_horizon)},
            {"ppo", to_json(c.ppo)},
            {"training",
             {{"total_steps", c.training.total_steps},
              {"episode_length", c.training.episode_length},
              {"smoke_batches", c.training.smoke_batches}}},
            {"oracle", to_json(c.oracle)},
            {"checkpoints", {{"receding_horizon", c.rh_checkpoint}, {"one_step", c.one_step_checkpoint}}}};
}

inline BenchConfig bench_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
    detail::check_schema(j, kBenchSchemaVersion, "bench config");
    BenchConfig c;
    c.base_dir = base_dir;
    try {
        detail::get_opt(j, "seed", c.seed);
        if (j.contains("plant")) {
            const auto& p = j["plant"];
            c.plant = p.is_string() ? load_plant(base_dir / p.get<std::string>()) : plant_from_json(p);
        }
        if (j.contains("data")) {
            const auto& d = j["data"];
            detail::get_opt(d, "train_days", c.data.train_days);
            detail::get_opt(d, "train_seed", c.data.train_seed);
            detail::get_opt(d, "eval_days", c.data.eval_days);
            detail::get_opt(d, "eval_seed", c.data.eval_seed);
            detail::get_opt(d, "warmup_days", c.data.warmup_days);
            detail::get_opt(d, "noise", c.data.noise);
            detail::get_opt(d, "eval_csv", c.data.eval_csv);
        }
        if (j.contains("forecast")) {
            detail::get_opt(j["forecast"], "model", c.forecast.model);
            detail::get_opt(j["forecast"], "ridge", c.forecast.ridge);
        }
        if (j.contains("reward")) {
            const auto& r = j["reward"];
            c.calibrate_power_scale = r.contains("power_scale_kw") && r["power_scale_kw"].is_string() &&
                                      r["power_scale_kw"].get<std::string>() == "calibrate";
            if (!r.contains("power_scale_kw")) c.calibrate_power_scale = true;
            c.reward = reward_from_json(r);
        }
        if (j.contains("rule_based")) c.rule_based = rule_based_from_json(j["rule_based"]);
        validate(c.rule_based, c.plant);
        if (j.contains("receding_horizon")) c.receding_horizon = rh_from_json(j["receding_horizon"]);
        if (j.contains("ppo")) c.ppo = ppo_from_json(j["ppo"]);
        if (j.contains("training")) {
            const auto& t = j["training"];
            detail::get_opt(t, "total_steps", c.training.total_steps);
            detail::get_opt(t, "episode_length", c.training.episode_length);
            detail::get_opt(t, "smoke_batches", c.training.smoke_batches);
        }
        if (j.contains("oracle")) c.oracle = oracle_from_json(j["oracle"]);
        if (j.contains("checkpoints")) {
            detail::get_opt(j["checkpoints"], "receding_horizon", c.rh_checkpoint);
            detail::get_opt(j["checkpoints"], "one_step", c.one_step_checkpoint);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bench config: ") + e.what());
    }
    const auto& m = c.forecast.model;
    if (m != "lag_regression" && m != "seasonal_naive" && m != "persistence" && m != "perfect")
        throw ConfigError("bench config: unknown forecast model '" + m + "'");
    if (c.data.train_days == 0 || c.data.eval_days == 0) throw ConfigError("bench config: trace lengths must be >= 1 day");
    if (c.training.episode_length == 0) throw ConfigError("bench config: episode_length must be >= 1");
    c.ppo.seed = c.seed;
    return c;
}

inline BenchConfig load_bench_config(const std::filesystem::path& path) {
    return bench_from_json(read_json_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

} // namespace chiller
