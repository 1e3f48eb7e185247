#pragma once

// Control policies evaluated head to head: the reactive rule-based baseline,
// one-step RL, receding-horizon RL and the per-step oracle. Also the adapter
// that exposes the chiller environment to the PPO trainer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chiller/env.hpp"
#include "chiller/errors.hpp"
#include "chiller/forecast.hpp"
#include "chiller/oracle.hpp"
#include "chiller/plant.hpp"
#include "chiller/ppo.hpp"

namespace chiller {

struct ControlDecision {
    std::vector<double> flows; // requested flows, kg/s; the env applies the OFF rule and limits
    bool fallback = false;
};

class Controller {
public:
    virtual ~Controller() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    virtual void reset() {}
    /// Observation assembly this controller expects from the environment.
    [[nodiscard]] virtual EpisodeConfig episode_setup(EpisodeConfig base) const { return base; }
    virtual ControlDecision decide(const ChillerEnv& env) = 0;
};

// ---------------------------------------------------------------------------
// Rule-based baseline

struct WorkingHours {
    double start_hour = 7.0;
    double end_hour = 19.0;
    bool weekdays_only = true;
    // Minimum number of staged chillers inside working hours (0 disables).
    std::size_t min_on = 0;

    [[nodiscard]] bool contains(std::int64_t t) const noexcept {
        if (weekdays_only && day_of_week(t) >= 5) return false;
        const double h = hour_of_day(t);
        return h >= start_hour && h < end_hour;
    }
};

struct RuleBasedConfig {
    std::vector<int> staging_order{4, 1, 2, 3}; // 1-based chiller ids
    double stage_up = 0.9;   // fraction of staged capacity
    double stage_down = 0.5; // fraction of capacity after removing the last stage
    std::size_t reaction_lag = 1;
    double design_delta_t = 6.0; // degC, sets the flow tracking law
    WorkingHours working{};
};

inline void validate(const RuleBasedConfig& c, const PlantConfig& plant) {
    if (!(c.stage_up > 0.0 && c.stage_up < 1.0 && c.stage_down > 0.0 && c.stage_down < 1.0))
        throw ConfigError("rule-based: thresholds must lie in (0, 1)");
    if (!(c.stage_down < c.stage_up)) throw ConfigError("rule-based: stage_down must be < stage_up");
    if (c.reaction_lag < 1) throw ConfigError("rule-based: reaction lag must be >= 1 step");
    if (!(c.design_delta_t > 0.0)) throw ConfigError("rule-based: design_delta_t must be > 0");
    if (c.staging_order.size() != plant.size()) throw ConfigError("rule-based: staging order must list every chiller");
    std::vector<bool> seen(plant.size(), false);
    for (int id : c.staging_order) {
        if (id < 1 || static_cast<std::size_t>(id) > plant.size() || seen[static_cast<std::size_t>(id - 1)])
            throw ConfigError("rule-based: staging order must be a permutation of chiller ids 1..n");
        seen[static_cast<std::size_t>(id - 1)] = true;
    }
    if (c.working.min_on > plant.size()) throw ConfigError("rule-based: working-hours minimum exceeds plant size");
}

class RuleBasedController : public Controller {
public:
    RuleBasedController(PlantConfig plant, RuleBasedConfig cfg) : plant_(std::move(plant)), cfg_(std::move(cfg)) {
        validate(cfg_, plant_);
    }

    [[nodiscard]] std::string name() const override { return "rule_based"; }
    void reset() override { staged_ = 0; }
    [[nodiscard]] std::size_t staged() const noexcept { return staged_; }
    [[nodiscard]] const RuleBasedConfig& config() const noexcept { return cfg_; }

    /// Stages against the observed load and sets a common fraction of each ON chiller's flow range.
    ChillerAction step(double recent_load, std::int64_t timestamp) {
        if (!std::isfinite(recent_load) || recent_load < 0.0)
            throw InputError("rule-based: recent load must be finite and >= 0");
        const std::size_t n = plant_.size();
        if (recent_load > 0.0 && staged_ == 0) staged_ = 1;
        while (staged_ < n && recent_load > cfg_.stage_up * capacity(staged_)) ++staged_;
        while (staged_ > 1 && recent_load < cfg_.stage_down * capacity(staged_ - 1)) --staged_;
        if (staged_ == 1 && recent_load <= 0.0) staged_ = 0;
        std::size_t k = staged_;
        if (cfg_.working.contains(timestamp)) k = std::max(k, cfg_.working.min_on);

        ChillerAction a{std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
        if (k == 0) return a;
        double fmin = 0.0, fmax = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            const auto& c = plant_.chillers[index(s)];
            fmin += c.flow_min;
            fmax += c.flow_max;
        }
        const double target = recent_load / (plant_.c_w * cfg_.design_delta_t);
        const double u = fmax > fmin ? std::clamp((target - fmin) / (fmax - fmin), 0.0, 1.0) : 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t i = index(s);
            const auto& c = plant_.chillers[i];
            a.on[i] = true;
            a.flows[i] = std::clamp(c.flow_min + u * (c.flow_max - c.flow_min), c.flow_min, c.flow_max);
        }
        return a;
    }

    ControlDecision decide(const ChillerEnv& env) override {
        const double seen = env.observed_load(cfg_.reaction_lag);
        return {step(std::isfinite(seen) ? seen : 0.0, env.timestamp()).flows, false};
    }

private:
    [[nodiscard]] std::size_t index(std::size_t stage) const {
        return static_cast<std::size_t>(cfg_.staging_order[stage] - 1);
    }
    [[nodiscard]] double capacity(std::size_t stages) const {
        double c = 0.0;
        for (std::size_t s = 0; s < stages; ++s) c += plant_.chillers[index(s)].rated_capacity;
        return c;
    }

    PlantConfig plant_;
    RuleBasedConfig cfg_;
    std::size_t staged_ = 0;
};

// ---------------------------------------------------------------------------
// Policy evaluation shared by both RL controllers

class PolicyEvaluator {
public:
    explicit PolicyEvaluator(std::shared_ptr<const ppo::ActorCritic> net) : net_(std::move(net)) {
        if (!net_) throw ContractError("policy controller: network missing");
    }

    [[nodiscard]] std::vector<double> flows(const PlantConfig& plant, std::span<const double> obs) const {
        if (obs.size() != net_->obs_dim() || plant.size() != net_->act_dim())
            throw ContractError("policy controller: observation layout does not match the trained network");
        return raw_to_flows(plant, ppo::deterministic_action(*net_, obs));
    }

    [[nodiscard]] const ppo::ActorCritic& network() const noexcept { return *net_; }

private:
    std::shared_ptr<const ppo::ActorCritic> net_;
};

/// One-step RL: the forecast channel holds only the latest observed load.
class OneStepRlController : public Controller {
public:
    explicit OneStepRlController(std::shared_ptr<const ppo::ActorCritic> net) : policy_(std::move(net)) {}

    [[nodiscard]] std::string name() const override { return "one_step_rl"; }

    [[nodiscard]] EpisodeConfig episode_setup(EpisodeConfig base) const override {
        base.window = 1;
        base.perfect_foresight = false;
        base.forecaster = std::make_shared<PersistenceForecaster>();
        return base;
    }

    ControlDecision decide(const ChillerEnv& env) override {
        return {policy_.flows(env.plant(), env.observation().values), false};
    }

private:
    PolicyEvaluator policy_;
};

struct RhConfig {
    std::size_t horizon = kDefaultHorizon;
    std::size_t replan_interval = 1;
};

inline void validate(const RhConfig& c) {
    if (c.horizon == 0) throw ConfigError("receding horizon: horizon must be >= 1");
    if (c.replan_interval < 1 || c.replan_interval > c.horizon)
        throw ConfigError("receding horizon: replan interval must lie in [1, horizon]");
}

/// Receding-horizon RL: forecasts the next N steps, plans with the policy over the
/// forecast and executes the plan until the next replan.
class RecedingHorizonController : public Controller {
public:
    RecedingHorizonController(std::shared_ptr<const ppo::ActorCritic> net, RhConfig cfg,
                              std::shared_ptr<const Forecaster> forecaster, PlantConfig plant,
                              RuleBasedConfig fallback = {})
        : policy_(std::move(net)), cfg_(cfg), forecaster_(std::move(forecaster)),
          fallback_(std::move(plant), std::move(fallback)) {
        validate(cfg_);
    }

    [[nodiscard]] std::string name() const override { return "receding_horizon_rl"; }
    void reset() override {
        plan_.clear();
        pos_ = 0;
        fallback_.reset();
        fallbacks_ = 0;
    }
    [[nodiscard]] std::size_t fallback_steps() const noexcept { return fallbacks_; }

    [[nodiscard]] EpisodeConfig episode_setup(EpisodeConfig base) const override {
        base.window = cfg_.horizon;
        if (forecaster_) {
            base.forecaster = forecaster_;
            base.perfect_foresight = false;
        }
        return base;
    }

    ControlDecision decide(const ChillerEnv& env) override {
        if (env.layout().window != cfg_.horizon)
            throw ContractError("receding horizon: environment window differs from the planning horizon");
        if (!env.observation().forecast_warm) {
            plan_.clear();
            pos_ = 0;
            ++fallbacks_;
            auto d = fallback_.decide(env);
            d.fallback = true;
            return d;
        }
        // Keep the fallback's staging state current so a later cold start resumes sensibly.
        const double seen = env.observed_load(fallback_.config().reaction_lag);
        fallback_.step(std::isfinite(seen) ? seen : 0.0, env.timestamp());
        if (pos_ >= plan_.size() || pos_ >= cfg_.replan_interval) replan(env);
        return {plan_[pos_++], false};
    }

    /// Flows for the next replan_interval steps, rolled out against the forecast.
    void replan(const ChillerEnv& env) {
        const auto& plant = env.plant();
        const auto& forecast = env.forecast();
        plan_.clear();
        pos_ = 0;
        plan_.push_back(policy_.flows(plant, env.observation().values));
        if (cfg_.replan_interval == 1) return;
        PlantTelemetry tel = env.last_telemetry();
        std::vector<bool> prev_on = env.prev_on();
        std::vector<double> window(forecast.size());
        for (std::size_t k = 1; k < cfg_.replan_interval; ++k) {
            const ChillerAction a = decode_flows(plant, plan_.back());
            const double expected = forecast[std::min(k - 1, forecast.size() - 1)];
            tel = steady_state_dispatch(plant, a, expected);
            prev_on = a.on;
            for (std::size_t h = 0; h < window.size(); ++h) window[h] = forecast[std::min(k + h, forecast.size() - 1)];
            const auto obs = build_observation(plant, env.layout(), window, tel, prev_on);
            plan_.push_back(policy_.flows(plant, obs));
        }
    }

private:
    PolicyEvaluator policy_;
    RhConfig cfg_;
    std::shared_ptr<const Forecaster> forecaster_;
    RuleBasedController fallback_;
    std::vector<std::vector<double>> plan_;
    std::size_t pos_ = 0;
    std::size_t fallbacks_ = 0;
};

/// Per-step oracle on the true load: the energy lower bound.
class OracleController : public Controller {
public:
    explicit OracleController(OracleConfig cfg = {}) : cfg_(cfg) { validate(cfg_); }

    [[nodiscard]] std::string name() const override { return "oracle"; }

    ControlDecision decide(const ChillerEnv& env) override {
        const double load = env.episode().loads->load[env.index()];
        return {optimal_dispatch(env.plant(), cfg_, load).action.flows, false};
    }

private:
    OracleConfig cfg_;
};

// ---------------------------------------------------------------------------
// Episode runner

inline EpisodeLog run_episode(ChillerEnv& env, Controller& ctl, const EpisodeConfig& base) {
    EpisodeConfig ec = ctl.episode_setup(base);
    ec.record_log = true;
    ctl.reset();
    env.reset(ec);
    while (!env.done()) {
        const auto d = ctl.decide(env);
        env.step_action(d.flows, d.fallback);
    }
    return env.log();
}

// ---------------------------------------------------------------------------
// Training adapter

struct TaskConfig {
    std::size_t episode_length = 336;
    // First admissible episode start; leaves history for the forecaster.
    std::size_t warmup = kDefaultWindow;
};

class ChillerTaskEnv : public ppo::Environment {
public:
    ChillerTaskEnv(PlantConfig plant, RewardSpec reward, EpisodeConfig base, TaskConfig task)
        : env_(std::move(plant), std::move(reward)), base_(std::move(base)), task_(task) {
        if (!base_.loads) throw ConfigError("training env: load trace missing");
        if (task_.episode_length == 0) throw ConfigError("training env: episode length must be >= 1");
        if (task_.warmup + task_.episode_length > base_.loads->size())
            throw ConfigError("training env: trace shorter than warmup + episode length");
        base_.record_log = false;
        base_.length = task_.episode_length;
        base_.start = task_.warmup;
        obs_size_ = env_.reset(base_).values.size();
    }

    [[nodiscard]] std::size_t observation_size() const override { return obs_size_; }
    [[nodiscard]] std::size_t action_size() const override { return env_.plant().size(); }

    std::vector<double> reset(std::uint64_t episode_seed) override {
        const std::size_t span = base_.loads->size() - task_.warmup - task_.episode_length + 1;
        std::mt19937_64 rng(episode_seed);
        base_.start = task_.warmup + static_cast<std::size_t>(rng() % span);
        return env_.reset(base_).values;
    }

    ppo::EnvStep step(std::span<const double> action) override {
        auto r = env_.step(action);
        ppo::EnvStep s;
        s.reward = r.reward;
        s.truncated = r.done;
        s.hard_violation = r.hard_violation;
        s.observation = std::move(r.observation.values);
        return s;
    }

    [[nodiscard]] const ChillerEnv& env() const noexcept { return env_; }

private:
    ChillerEnv env_;
    EpisodeConfig base_;
    TaskConfig task_;
    std::size_t obs_size_ = 0;
};

} // namespace chiller
