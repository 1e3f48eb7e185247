#pragma once

// Episodic control environment over a load trace.
//
// Each step decodes a raw action in [-1, 1]^n into chilled-water flows,
// resolves the plant against the true load of the step, scores it with the
// prioritised reward and advances the trace by one step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chiller/errors.hpp"
#include "chiller/forecast.hpp"
#include "chiller/plant.hpp"
#include "chiller/timeseries.hpp"

namespace chiller {

// ---------------------------------------------------------------------------
// Reward

struct SoftWeights {
    double plr_range = 0.5;
    double min_flow = 0.5;
    double cop_cap = 0.5;
    double switching = 0.2;
    double sparsity = 0.1;
};

struct RewardSpec {
    // Priority order of the hard constraints; the first violated one alone sets the reward.
    std::vector<ConstraintId> hard_order{ConstraintId::EnergyBalance, ConstraintId::ReturnTemperature};
    std::vector<double> lambda{10.0, 10.0};
    // Violation magnitude that adds one more lambda to the penalty (kW, degC).
    std::vector<double> hard_scale{1000.0, 2.0};
    SoftWeights soft{};
    double power_scale = 1000.0; // kW
    // Lower bound of the no-violation branch; its magnitude is the soft-penalty budget.
    double base_floor = -8.0;
    ConstraintTolerances tolerances{};
};

inline void validate(const RewardSpec& s) {
    if (s.hard_order.empty()) throw ConfigError("reward: hard_order must not be empty");
    for (std::size_t i = 0; i < s.hard_order.size(); ++i)
        for (std::size_t j = i + 1; j < s.hard_order.size(); ++j)
            if (s.hard_order[i] == s.hard_order[j]) throw ConfigError("reward: hard_order ids must be distinct");
    if (s.lambda.size() != s.hard_order.size() || s.hard_scale.size() != s.hard_order.size())
        throw ConfigError("reward: lambda and hard_scale need one entry per hard constraint");
    for (double l : s.lambda)
        if (!(l > 0.0)) throw ConfigError("reward: penalty weights must be > 0");
    for (double sc : s.hard_scale)
        if (!(sc > 0.0)) throw ConfigError("reward: hard scales must be > 0");
    for (double w : {s.soft.plr_range, s.soft.min_flow, s.soft.cop_cap, s.soft.switching, s.soft.sparsity})
        if (!(w >= 0.0)) throw ConfigError("reward: soft weights must be >= 0");
    if (!(s.power_scale > 0.0)) throw ConfigError("reward: power_scale must be > 0");
    const double lambda_min = *std::min_element(s.lambda.begin(), s.lambda.end());
    if (!(s.base_floor < 0.0 && -s.base_floor < lambda_min))
        throw ConfigError("reward: base_floor must lie in (-min(lambda), 0) so penalties dominate");
}

inline double soft_penalty_budget(const RewardSpec& s) noexcept { return -s.base_floor; }

inline constexpr std::string_view kBaseComponent = "power";

struct RewardOutcome {
    double reward = 0.0;
    std::string_view active_component = kBaseComponent;
    bool hard_violation = false;
    double power_term = 0.0;
    double soft_penalty = 0.0;
};

inline RewardOutcome priority_reward(const ConstraintReport& report, const PlantTelemetry& t,
                                     const std::vector<bool>& prev_on, const RewardSpec& spec) {
    RewardOutcome out;
    for (std::size_t k = 0; k < spec.hard_order.size(); ++k) {
        const auto& e = report.at(spec.hard_order[k]);
        if (e.satisfied) continue;
        out.reward = -spec.lambda[k] * (1.0 + e.violation / spec.hard_scale[k]);
        out.active_component = to_string(e.id);
        out.hard_violation = true;
        return out;
    }
    const std::size_t n = t.on.size();
    std::size_t toggles = 0, running = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool before = i < prev_on.size() && prev_on[i];
        toggles += before != t.on[i];
        running += t.on[i];
    }
    auto magnitude = [&](ConstraintId id) {
        // Soft constraints that are promoted to hard are not charged twice.
        if (std::find(spec.hard_order.begin(), spec.hard_order.end(), id) != spec.hard_order.end()) return 0.0;
        const auto& e = report.at(id);
        return e.satisfied ? 0.0 : e.violation;
    };
    out.power_term = (spec.power_scale - t.total_power) / spec.power_scale;
    out.soft_penalty = spec.soft.plr_range * magnitude(ConstraintId::PlrRange) +
                       spec.soft.min_flow * magnitude(ConstraintId::MinFlow) +
                       spec.soft.cop_cap * magnitude(ConstraintId::CopCap) +
                       spec.soft.switching * static_cast<double>(toggles) +
                       spec.soft.sparsity * (n ? static_cast<double>(running) / static_cast<double>(n) : 0.0);
    out.reward = std::max(spec.base_floor, out.power_term - out.soft_penalty);
    return out;
}

// ---------------------------------------------------------------------------
// Observation

struct ObservationLayout {
    std::size_t chillers = 0;
    std::size_t window = kDefaultHorizon;

    // forecast window | cooling | plr | cop | power | t_return | previous on/off
    [[nodiscard]] std::size_t size() const noexcept { return window + 5 * chillers + 1; }
    bool operator==(const ObservationLayout&) const = default;
};

struct Observation {
    std::vector<double> values;
    bool forecast_warm = true;
};

/// Maps raw actions in [-1, 1] affinely onto [0, flow_max] per chiller.
inline std::vector<double> raw_to_flows(const PlantConfig& plant, std::span<const double> raw) {
    if (raw.size() != plant.size()) throw ContractError("raw action size does not match plant");
    std::vector<double> flows(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) throw InputError("raw action must be finite");
        flows[i] = 0.5 * (std::clamp(raw[i], -1.0, 1.0) + 1.0) * plant.chillers[i].flow_max;
    }
    return flows;
}

inline std::vector<double> build_observation(const PlantConfig& plant, const ObservationLayout& layout,
                                             std::span<const double> forecast, const PlantTelemetry& last,
                                             const std::vector<bool>& prev_on) {
    const std::size_t n = plant.size();
    if (layout.chillers != n) throw ContractError("observation layout does not match plant");
    std::vector<double> obs;
    obs.reserve(layout.size());
    const double cap = plant.total_capacity();
    for (std::size_t k = 0; k < layout.window; ++k) {
        const double v = forecast.empty() ? 0.0 : forecast[std::min(k, forecast.size() - 1)];
        obs.push_back(v / cap);
    }
    auto get = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
    for (std::size_t i = 0; i < n; ++i) obs.push_back(get(last.cooling, i) / cap);
    for (std::size_t i = 0; i < n; ++i) obs.push_back(std::clamp(get(last.plr, i), 0.0, 3.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double c = get(last.cop, i);
        obs.push_back(std::isfinite(c) ? std::clamp(c / 10.0, 0.0, 3.0) : 3.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double ref = power_from_plr(plant.chillers[i], 1.0);
        obs.push_back(std::clamp(get(last.power, i) / (ref > 0.0 ? ref : 1.0), -3.0, 3.0));
    }
    const double span = plant.t_return_max - plant.t_supply;
    const double tr = last.t_return == 0.0 && last.on.empty() ? plant.t_supply : last.t_return;
    obs.push_back(std::clamp((tr - plant.t_supply) / span, -1.0, 4.0));
    for (std::size_t i = 0; i < n; ++i) obs.push_back(i < prev_on.size() && prev_on[i] ? 1.0 : 0.0);
    return obs;
}

// ---------------------------------------------------------------------------
// Episode bookkeeping

struct StepRecord {
    std::size_t index = 0;
    std::int64_t timestamp = 0;
    double load = 0.0;
    double forecast = 0.0; // forecast of this step's load used in the observation
    std::vector<double> flows;
    PlantTelemetry telemetry;
    double reward = 0.0;
    std::string active_component;
    bool hard_violation = false;
    std::array<bool, kAllConstraints.size()> violated{};
    double energy_kwh = 0.0;
    bool fallback = false;
};

struct EpisodeLog {
    std::vector<StepRecord> steps;
    double dt_hours = 0.5;
};

inline double episode_energy(const EpisodeLog& log) noexcept {
    double e = 0.0;
    for (const auto& s : log.steps) e += s.telemetry.total_power * log.dt_hours;
    return e;
}

inline void write_episode_csv(std::ostream& out, const EpisodeLog& log, std::size_t chillers) {
    out << "step,timestamp,load_kw,forecast_kw";
    for (const char* col : {"flow", "on", "plr", "power", "cop"})
        for (std::size_t i = 1; i <= chillers; ++i) out << ',' << col << '_' << i;
    out << ",t_return_c,total_power_kw,unmet_kw,reward,active_component,hard_violation,energy_kwh\n";
    auto cell = [](const std::vector<double>& v, std::size_t i, int digits) {
        if (i >= v.size()) return std::string("0");
        return std::isfinite(v[i]) ? fixed(v[i], digits) : std::string("inf");
    };
    for (const auto& s : log.steps) {
        const auto& t = s.telemetry;
        out << s.index << ',' << format_iso8601(s.timestamp) << ',' << fixed(s.load, 4) << ','
            << fixed(s.forecast, 4);
        for (std::size_t i = 0; i < chillers; ++i) out << ',' << cell(t.flow, i, 4);
        for (std::size_t i = 0; i < chillers; ++i) out << ',' << (i < t.on.size() && t.on[i] ? 1 : 0);
        for (std::size_t i = 0; i < chillers; ++i) out << ',' << cell(t.plr, i, 6);
        for (std::size_t i = 0; i < chillers; ++i) out << ',' << cell(t.power, i, 4);
        for (std::size_t i = 0; i < chillers; ++i) out << ',' << cell(t.cop, i, 4);
        out << ',' << fixed(t.t_return, 4) << ',' << fixed(t.total_power, 6) << ',' << fixed(t.unmet_load, 4)
            << ',' << fixed(s.reward, 6) << ',' << s.active_component << ',' << (s.hard_violation ? 1 : 0)
            << ',' << fixed(s.energy_kwh, 6) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Environment

struct EpisodeConfig {
    std::shared_ptr<const LoadSeries> loads;
    std::shared_ptr<const ExogSeries> exog;
    // Null is allowed with perfect_foresight.
    std::shared_ptr<const Forecaster> forecaster;
    std::size_t start = 0;
    std::size_t length = 0; // 0 runs to the end of the trace
    bool perfect_foresight = false;
    std::size_t window = kDefaultHorizon; // forecast steps in the observation
    std::size_t history = kDefaultWindow; // history handed to the forecaster
    bool record_log = true;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    PlantTelemetry telemetry;
    ConstraintReport report;
    bool done = false;
    std::string_view active_component = kBaseComponent;
    bool hard_violation = false;
    double energy_kwh = 0.0;
};

class ChillerEnv {
public:
    ChillerEnv(PlantConfig plant, RewardSpec reward) : plant_(std::move(plant)), reward_(std::move(reward)) {
        validate(plant_);
        validate(reward_);
    }

    [[nodiscard]] const PlantConfig& plant() const noexcept { return plant_; }
    [[nodiscard]] const RewardSpec& reward_spec() const noexcept { return reward_; }
    void set_reward_spec(RewardSpec r) {
        validate(r);
        reward_ = std::move(r);
    }

    Observation reset(const EpisodeConfig& cfg) {
        if (!cfg.loads) throw ConfigError("episode: load trace missing");
        if (!cfg.perfect_foresight && !cfg.forecaster)
            throw ConfigError("episode: forecaster missing and perfect_foresight disabled");
        if (cfg.window == 0) throw ConfigError("episode: forecast window must be >= 1");
        const std::size_t n = cfg.loads->size();
        const std::size_t length = cfg.length ? cfg.length : (n > cfg.start ? n - cfg.start : 0);
        if (length == 0 || cfg.start + length > n)
            throw ConfigError("episode: trace shorter than start + episode length");
        if (cfg.exog && cfg.exog->size() != n) throw ConfigError("episode: exogenous series not aligned");
        cfg_ = cfg;
        length_ = length;
        index_ = cfg.start;
        steps_ = 0;
        layout_ = ObservationLayout{plant_.size(), cfg.window};
        prev_on_.assign(plant_.size(), false);
        last_ = steady_state_dispatch(plant_, idle_action(), 0.0);
        log_ = EpisodeLog{};
        log_.dt_hours = plant_.dt_hours;
        refresh_observation();
        return obs_;
    }

    StepResult step(std::span<const double> raw) { return step_action(raw_to_flows(plant_, raw)); }

    /// Steps with requested flows (kg/s); the OFF threshold and limits are applied here.
    StepResult step_action(std::span<const double> requested_flows, bool fallback = false) {
        if (!cfg_.loads) throw ContractError("step called before reset");
        if (done()) throw ContractError("step called after the episode finished");
        const ChillerAction action = decode_flows(plant_, requested_flows);
        const double load = cfg_.loads->load[index_];

        StepResult r;
        r.telemetry = steady_state_dispatch(plant_, action, load);
        r.report = check_constraints(plant_, r.telemetry, action, reward_.tolerances);
        const auto outcome = priority_reward(r.report, r.telemetry, prev_on_, reward_);
        r.reward = outcome.reward;
        r.active_component = outcome.active_component;
        r.hard_violation = outcome.hard_violation;
        r.energy_kwh = r.telemetry.total_power * plant_.dt_hours;

        if (cfg_.record_log) {
            StepRecord rec;
            rec.index = index_;
            rec.timestamp = cfg_.loads->timestamps[index_];
            rec.load = load;
            rec.forecast = forecast_.empty() ? 0.0 : forecast_.front();
            rec.flows = action.flows;
            rec.telemetry = r.telemetry;
            rec.reward = r.reward;
            rec.active_component = std::string(r.active_component);
            rec.hard_violation = r.hard_violation;
            for (std::size_t k = 0; k < kAllConstraints.size(); ++k) rec.violated[k] = !r.report.entries[k].satisfied;
            rec.energy_kwh = r.energy_kwh;
            rec.fallback = fallback;
            log_.steps.push_back(std::move(rec));
        }

        prev_on_ = action.on;
        last_ = r.telemetry;
        ++index_;
        ++steps_;
        r.done = done();
        if (index_ < cfg_.loads->size()) refresh_observation();
        r.observation = obs_;
        return r;
    }

    [[nodiscard]] bool done() const noexcept { return steps_ >= length_; }
    [[nodiscard]] const Observation& observation() const noexcept { return obs_; }
    [[nodiscard]] const ObservationLayout& layout() const noexcept { return layout_; }
    /// Raw forecast (kW) behind the current observation; front() is this step's load.
    [[nodiscard]] const std::vector<double>& forecast() const noexcept { return forecast_; }
    [[nodiscard]] const PlantTelemetry& last_telemetry() const noexcept { return last_; }
    [[nodiscard]] const std::vector<bool>& prev_on() const noexcept { return prev_on_; }
    [[nodiscard]] const EpisodeLog& log() const noexcept { return log_; }
    [[nodiscard]] const EpisodeConfig& episode() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t index() const noexcept { return index_; }
    [[nodiscard]] std::size_t steps_taken() const noexcept { return steps_; }

    [[nodiscard]] std::int64_t timestamp() const {
        return cfg_.loads->timestamps[std::min(index_, cfg_.loads->size() - 1)];
    }

    /// Load observed `back` steps before the current one; NaN before the trace start.
    [[nodiscard]] double observed_load(std::size_t back) const noexcept {
        if (back == 0 || back > index_) return std::numeric_limits<double>::quiet_NaN();
        return cfg_.loads->load[index_ - back];
    }

    [[nodiscard]] ChillerAction idle_action() const {
        return ChillerAction{std::vector<double>(plant_.size(), 0.0), std::vector<bool>(plant_.size(), false)};
    }

private:
    void refresh_observation() {
        const auto& loads = *cfg_.loads;
        const std::size_t k = cfg_.window;
        forecast_.assign(k, 0.0);
        bool warm = true;
        if (cfg_.perfect_foresight) {
            for (std::size_t h = 0; h < k; ++h) forecast_[h] = loads.load[std::min(index_ + h, loads.size() - 1)];
        } else {
            const std::size_t hist = std::min(cfg_.history, index_);
            if (hist >= cfg_.forecaster->min_history() && hist > 0) {
                static const ExogSeries kNoExog{};
                const auto req = make_request(loads, cfg_.exog ? *cfg_.exog : kNoExog, index_, hist, k);
                const auto f = cfg_.forecaster->forecast(req);
                for (std::size_t h = 0; h < k && h < f.load.size(); ++h) forecast_[h] = f.load[h];
            } else {
                warm = false;
                const double latest = index_ > 0 ? loads.load[index_ - 1] : 0.0;
                std::fill(forecast_.begin(), forecast_.end(), latest);
            }
        }
        obs_.values = build_observation(plant_, layout_, forecast_, last_, prev_on_);
        obs_.forecast_warm = warm;
    }

    PlantConfig plant_;
    RewardSpec reward_;
    EpisodeConfig cfg_{};
    ObservationLayout layout_{};
    std::size_t length_ = 0;
    std::size_t index_ = 0;
    std::size_t steps_ = 0;
    std::vector<bool> prev_on_;
    PlantTelemetry last_;
    std::vector<double> forecast_;
    Observation obs_;
    EpisodeLog log_;
};

} // namespace chiller
