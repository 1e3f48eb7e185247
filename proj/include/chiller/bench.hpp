#pragma once

// Benchmark pipeline: data preparation, agent training, evaluation of all
// controllers on one trace and report generation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiller/config_io.hpp"
#include "chiller/controllers.hpp"
#include "chiller/env.hpp"
#include "chiller/forecast.hpp"
#include "chiller/oracle.hpp"
#include "chiller/ppo.hpp"
#include "chiller/synthetic.hpp"

namespace chiller {

// Published field results (proprietary campus data); reported for reference only.
struct FieldReference {
    static constexpr double rule_based_mwh = 92.35;
    static constexpr double one_step_rl_mwh = 74.15;
    static constexpr double one_step_rl_text_mwh = 74.35;
    static constexpr double receding_horizon_mwh = 66.49;
    static constexpr double saving_pct = 28.0;
    static constexpr double forecast_nmae = 0.235;
};

// ---------------------------------------------------------------------------
// Data

struct BenchData {
    std::shared_ptr<const LoadSeries> train_load;
    std::shared_ptr<const ExogSeries> train_exog;
    std::shared_ptr<const LoadSeries> eval_load;
    std::shared_ptr<const ExogSeries> eval_exog;
    std::size_t eval_start = 0;
    std::size_t eval_steps = 0;
    std::string trace_id;
};

inline BenchData make_bench_data(const BenchConfig& cfg) {
    BenchData d;
    SyntheticParams sp;
    sp.noise = cfg.data.noise;
    auto train = synthetic_campus_load(cfg.data.train_days, cfg.data.train_seed, sp);
    d.train_load = std::make_shared<LoadSeries>(std::move(train.load));
    d.train_exog = std::make_shared<ExogSeries>(std::move(train.exog));
    const std::size_t warm = cfg.data.warmup_days * 48;
    if (!cfg.data.eval_csv.empty()) {
        LoadSeries s;
        ExogSeries e;
        const auto path = std::filesystem::path(cfg.data.eval_csv).is_absolute() ? std::filesystem::path(cfg.data.eval_csv)
                                                                                  : cfg.base_dir / cfg.data.eval_csv;
        read_load_csv(path.string(), s, e);
        if (s.size() <= warm) throw ConfigError("evaluation trace shorter than the warmup history");
        d.eval_start = warm;
        d.eval_steps = s.size() - warm;
        d.trace_id = "csv:" + path.filename().string() + ":steps=" + std::to_string(s.size());
        d.eval_load = std::make_shared<LoadSeries>(std::move(s));
        d.eval_exog = std::make_shared<ExogSeries>(std::move(e));
    } else {
        auto ev = synthetic_campus_load(cfg.data.eval_days + cfg.data.warmup_days, cfg.data.eval_seed, sp);
        d.eval_start = warm;
        d.eval_steps = cfg.data.eval_days * 48;
        std::ostringstream id;
        id << "synthetic:seed=" << cfg.data.eval_seed << ":days=" << cfg.data.eval_days << "+" << cfg.data.warmup_days
           << ":noise=" << cfg.data.noise;
        d.trace_id = id.str();
        d.eval_load = std::make_shared<LoadSeries>(std::move(ev.load));
        d.eval_exog = std::make_shared<ExogSeries>(std::move(ev.exog));
    }
    return d;
}

/// Forecaster named in the config; null for perfect foresight.
inline std::shared_ptr<const Forecaster> make_forecaster(const BenchConfig& cfg, const BenchData& d) {
    const auto& m = cfg.forecast.model;
    if (m == "perfect") return nullptr;
    if (m == "persistence") return std::make_shared<PersistenceForecaster>();
    if (m == "seasonal_naive") return std::make_shared<SeasonalNaiveForecaster>(48);
    LagRegressionOptions opt;
    opt.ridge = cfg.forecast.ridge;
    opt.layout.horizon = cfg.receding_horizon.horizon;
    return std::make_shared<LagRegressionForecaster>(fit_lag_regression(*d.train_load, *d.train_exog, opt));
}

inline EpisodeConfig base_episode(const std::shared_ptr<const LoadSeries>& loads,
                                  const std::shared_ptr<const ExogSeries>& exog,
                                  const std::shared_ptr<const Forecaster>& fc, std::size_t window) {
    EpisodeConfig ec;
    ec.loads = loads;
    ec.exog = exog;
    ec.forecaster = fc;
    ec.perfect_foresight = fc == nullptr;
    ec.window = window;
    return ec;
}

/// Rule-based mean step power on the training trace: the reference of the base reward.
inline double calibrate_power_scale(const BenchConfig& cfg, const BenchData& d) {
    ChillerEnv env(cfg.plant, cfg.reward);
    RuleBasedController rb(cfg.plant, cfg.rule_based);
    auto ec = base_episode(d.train_load, d.train_exog, nullptr, 1);
    ec.start = std::min<std::size_t>(cfg.data.warmup_days * 48, d.train_load->size() - 1);
    const auto log = run_episode(env, rb, ec);
    const double mean = episode_energy(log) / (cfg.plant.dt_hours * static_cast<double>(log.steps.size()));
    if (!(mean > 0.0)) throw NumericError("power-scale calibration produced a non-positive mean power");
    return mean;
}

inline RewardSpec effective_reward(const BenchConfig& cfg, const BenchData& d) {
    RewardSpec r = cfg.reward;
    if (cfg.calibrate_power_scale) r.power_scale = calibrate_power_scale(cfg, d);
    validate(r);
    return r;
}

// ---------------------------------------------------------------------------
// Training

enum class AgentKind { RecedingHorizon, OneStep };

inline std::string to_string(AgentKind k) { return k == AgentKind::RecedingHorizon ? "receding_horizon" : "one_step"; }

inline EpisodeConfig training_episode(const BenchConfig& cfg, const BenchData& d, AgentKind kind,
                                      const std::shared_ptr<const Forecaster>& fc) {
    if (kind == AgentKind::OneStep)
        return base_episode(d.train_load, d.train_exog, std::make_shared<PersistenceForecaster>(), 1);
    return base_episode(d.train_load, d.train_exog, fc, cfg.receding_horizon.horizon);
}

inline ChillerTaskEnv make_task_env(const BenchConfig& cfg, const BenchData& d, const RewardSpec& reward,
                                    AgentKind kind, const std::shared_ptr<const Forecaster>& fc) {
    TaskConfig task;
    task.episode_length = cfg.training.episode_length;
    task.warmup = std::max<std::size_t>(kDefaultWindow, cfg.data.warmup_days * 48);
    return ChillerTaskEnv(cfg.plant, reward, training_episode(cfg, d, kind, fc), task);
}

// ---------------------------------------------------------------------------
// Evaluation summary and report

struct ControllerSummary {
    std::string name;
    bool ok = true;
    std::string error;
    std::size_t steps = 0;
    double energy_kwh = 0.0;
    double saved_kwh = 0.0;
    double saved_pct = 0.0;
    double hard_violation_fraction = 0.0;
    double mean_plr_on = 0.0;
    double mean_cop_on = 0.0;
    double rmse_kw = 0.0;
    double mean_reward = 0.0;
    std::size_t fallback_steps = 0;
    std::array<std::size_t, kAllConstraints.size()> violations{};
};

inline ControllerSummary summarize(const std::string& name, const EpisodeLog& log) {
    ControllerSummary s;
    s.name = name;
    s.steps = log.steps.size();
    s.energy_kwh = episode_energy(log);
    double plr = 0.0, cop = 0.0, sq = 0.0, rew = 0.0;
    std::size_t on = 0, cop_n = 0, hard = 0;
    for (const auto& r : log.steps) {
        const auto& t = r.telemetry;
        for (std::size_t i = 0; i < t.on.size(); ++i) {
            if (!t.on[i]) continue;
            ++on;
            plr += t.plr[i];
            if (std::isfinite(t.cop[i])) {
                cop += t.cop[i];
                ++cop_n;
            }
        }
        sq += t.unmet_load * t.unmet_load;
        rew += r.reward;
        hard += r.hard_violation;
        s.fallback_steps += r.fallback;
        for (std::size_t k = 0; k < kAllConstraints.size(); ++k) s.violations[k] += r.violated[k];
    }
    const double n = s.steps ? static_cast<double>(s.steps) : 1.0;
    s.hard_violation_fraction = static_cast<double>(hard) / n;
    s.mean_plr_on = on ? plr / static_cast<double>(on) : 0.0;
    s.mean_cop_on = cop_n ? cop / static_cast<double>(cop_n) : 0.0;
    s.rmse_kw = std::sqrt(sq / n);
    s.mean_reward = rew / n;
    return s;
}

struct BenchReport {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string trace_id;
    std::size_t steps = 0;
    double dt_hours = 0.5;
    double power_scale = 0.0;
    std::vector<ControllerSummary> rows;
    std::vector<EpisodeLog> logs; // aligned with rows; empty logs for failed rows
};

inline const ControllerSummary* find_row(const BenchReport& r, const std::string& name) {
    for (const auto& row : r.rows)
        if (row.name == name) return &row;
    return nullptr;
}

/// Savings are measured against the rule-based row.
inline void apply_baseline(BenchReport& r) {
    const auto* base = find_row(r, "rule_based");
    if (!base || !base->ok) return;
    const double e = base->energy_kwh;
    for (auto& row : r.rows) {
        if (!row.ok) continue;
        row.saved_kwh = row.name == "rule_based" ? 0.0 : e - row.energy_kwh;
        row.saved_pct = row.name == "rule_based" || e <= 0.0 ? 0.0 : 100.0 * row.saved_kwh / e;
    }
}

inline nlohmann::json to_json(const BenchReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : r.rows) {
        nlohmann::json row = {{"controller", s.name}, {"ok", s.ok}};
        if (!s.ok) {
            row["error"] = s.error;
        } else {
            nlohmann::json viol;
            for (std::size_t k = 0; k < kAllConstraints.size(); ++k)
                viol[std::string(to_string(kAllConstraints[k]))] = s.violations[k];
            row.update({{"steps", s.steps},
                        {"energy_kwh", s.energy_kwh},
                        {"saved_kwh", s.saved_kwh},
                        {"saved_pct", s.saved_pct},
                        {"hard_violation_fraction", s.hard_violation_fraction},
                        {"mean_plr_on", s.mean_plr_on},
                        {"mean_cop_on", s.mean_cop_on},
                        {"load_rmse_kw", s.rmse_kw},
                        {"mean_reward", s.mean_reward},
                        {"fallback_steps", s.fallback_steps},
                        {"violation_steps", viol}});
        }
        rows.push_back(row);
    }
    return {{"seed", r.seed},
            {"config_hash", r.config_hash},
            {"trace_id", r.trace_id},
            {"steps", r.steps},
            {"dt_hours", r.dt_hours},
            {"power_scale_kw", r.power_scale},
            {"rows", rows},
            {"field_reference",
             {{"rule_based_mwh", FieldReference::rule_based_mwh},
              {"one_step_rl_mwh", FieldReference::one_step_rl_mwh},
              {"one_step_rl_mwh_in_text", FieldReference::one_step_rl_text_mwh},
              {"receding_horizon_rl_mwh", FieldReference::receding_horizon_mwh},
              {"saving_pct", FieldReference::saving_pct},
              {"forecast_nmae", FieldReference::forecast_nmae},
              {"reproduced", false}}}};
}

inline void write_report_text(std::ostream& out, const BenchReport& r) {
    char line[256];
    out << "Chiller plant benchmark\n";
    out << "config_hash: " << r.config_hash << "\n";
    out << "seed: " << r.seed << "\n";
    out << "trace: " << r.trace_id << "\n";
    out << "evaluation steps: " << r.steps << " (dt " << fixed(r.dt_hours, 2) << " h)\n";
    out << "power_scale_kw: " << fixed(r.power_scale, 4) << "\n\n";
    std::snprintf(line, sizeof line, "%-22s %14s %13s %9s %11s %9s %9s %10s\n", "controller", "energy_kWh",
                  "saved_kWh", "saved_%", "hard_viol_%", "mean_PLR", "mean_COP", "rmse_kW");
    out << line;
    for (const auto& s : r.rows) {
        if (!s.ok) {
            out << s.name << "  ERROR: " << s.error << "\n";
            continue;
        }
        std::snprintf(line, sizeof line, "%-22s %14.3f %13.3f %9.3f %11.3f %9.4f %9.4f %10.3f\n", s.name.c_str(),
                      s.energy_kwh, s.saved_kwh, s.saved_pct, 100.0 * s.hard_violation_fraction, s.mean_plr_on,
                      s.mean_cop_on, s.rmse_kw);
        out << line;
    }
    out << "\nConstraint violation steps\n";
    std::snprintf(line, sizeof line, "%-22s", "controller");
    out << line;
    for (auto id : kAllConstraints) {
        std::snprintf(line, sizeof line, " %15s", std::string(to_string(id)).c_str());
        out << line;
    }
    out << "\n";
    for (const auto& s : r.rows) {
        if (!s.ok) continue;
        std::snprintf(line, sizeof line, "%-22s", s.name.c_str());
        out << line;
        for (std::size_t k = 0; k < kAllConstraints.size(); ++k) {
            std::snprintf(line, sizeof line, " %15zu", s.violations[k]);
            out << line;
        }
        out << "\n";
    }
    out << "\nPublished field results (proprietary data, not reproduced here):\n";
    out << "  rule-based " << fixed(FieldReference::rule_based_mwh, 2) << " MWh, one-step RL "
        << fixed(FieldReference::one_step_rl_mwh, 2) << " MWh*, receding-horizon RL "
        << fixed(FieldReference::receding_horizon_mwh, 2) << " MWh, saving " << fixed(FieldReference::saving_pct, 0)
        << "%; forecast NMAE " << fixed(FieldReference::forecast_nmae, 3) << "\n";
    out << "  * the accompanying text quotes " << fixed(FieldReference::one_step_rl_text_mwh, 2)
        << " MWh for the one-step row; the tabulated value is shown.\n";
}

/// Daily energy per controller (kWh), one row per day of the evaluation window.
inline void write_daily_energy_csv(std::ostream& out, const BenchReport& r) {
    out << "day";
    for (const auto& s : r.rows)
        if (s.ok) out << ',' << s.name;
    out << '\n';
    const std::size_t per_day = static_cast<std::size_t>(std::llround(24.0 / r.dt_hours));
    const std::size_t days = per_day ? (r.steps + per_day - 1) / per_day : 0;
    for (std::size_t d = 0; d < days; ++d) {
        out << d;
        for (std::size_t k = 0; k < r.rows.size(); ++k) {
            if (!r.rows[k].ok) continue;
            double e = 0.0;
            const auto& steps = r.logs[k].steps;
            for (std::size_t t = d * per_day; t < std::min(steps.size(), (d + 1) * per_day); ++t)
                e += steps[t].telemetry.total_power * r.dt_hours;
            out << ',' << fixed(e, 6);
        }
        out << '\n';
    }
}

inline void write_constraint_stats_csv(std::ostream& out, const BenchReport& r) {
    out << "controller";
    for (auto id : kAllConstraints) out << ',' << to_string(id);
    out << ",hard_violation_fraction\n";
    for (const auto& s : r.rows) {
        if (!s.ok) continue;
        out << s.name;
        for (auto v : s.violations) out << ',' << v;
        out << ',' << fixed(s.hard_violation_fraction, 6) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Compare

struct CompareInputs {
    std::shared_ptr<const ppo::ActorCritic> one_step; // null: row reports an error
    std::shared_ptr<const ppo::ActorCritic> receding_horizon;
    std::string one_step_error = "checkpoint missing";
    std::string receding_horizon_error = "checkpoint missing";
};

inline BenchReport run_compare(const BenchConfig& cfg, const BenchData& d, const RewardSpec& reward,
                               const std::shared_ptr<const Forecaster>& fc, const CompareInputs& in) {
    BenchReport rep;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash(to_json(cfg));
    rep.trace_id = d.trace_id;
    rep.steps = d.eval_steps;
    rep.dt_hours = cfg.plant.dt_hours;
    rep.power_scale = reward.power_scale;

    auto ec = base_episode(d.eval_load, d.eval_exog, fc, cfg.receding_horizon.horizon);
    ec.start = d.eval_start;
    ec.length = d.eval_steps;

    auto run = [&](Controller& ctl) {
        ChillerEnv env(cfg.plant, reward);
        auto log = run_episode(env, ctl, ec);
        rep.rows.push_back(summarize(ctl.name(), log));
        rep.logs.push_back(std::move(log));
    };
    auto fail = [&](const std::string& name, const std::string& why) {
        ControllerSummary s;
        s.name = name;
        s.ok = false;
        s.error = why;
        rep.rows.push_back(s);
        rep.logs.emplace_back();
    };

    RuleBasedController rb(cfg.plant, cfg.rule_based);
    run(rb);
    if (in.one_step) {
        try {
            OneStepRlController os(in.one_step);
            run(os);
        } catch (const ContractError& e) {
            fail("one_step_rl", e.what());
        }
    } else {
        fail("one_step_rl", in.one_step_error);
    }
    if (in.receding_horizon) {
        try {
            RecedingHorizonController rh(in.receding_horizon, cfg.receding_horizon, fc, cfg.plant, cfg.rule_based);
            run(rh);
        } catch (const ContractError& e) {
            fail("receding_horizon_rl", e.what());
        }
    } else {
        fail("receding_horizon_rl", in.receding_horizon_error);
    }
    OracleController oc(cfg.oracle);
    run(oc);
    apply_baseline(rep);
    return rep;
}

inline void write_compare_outputs(const std::filesystem::path& dir, const BenchReport& rep, std::size_t chillers) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream f(dir / name);
        if (!f) throw ConfigError("cannot write '" + (dir / name).string() + "'");
        return f;
    };
    {
        auto f = open("report.txt");
        write_report_text(f, rep);
    }
    {
        auto f = open("report.json");
        f << to_json(rep).dump(2) << '\n';
    }
    {
        auto f = open("daily_energy.csv");
        write_daily_energy_csv(f, rep);
    }
    {
        auto f = open("constraint_stats.csv");
        write_constraint_stats_csv(f, rep);
    }
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        if (!rep.rows[k].ok) continue;
        auto f = open("steps_" + rep.rows[k].name + ".csv");
        write_episode_csv(f, rep.logs[k], chillers);
    }
}

} // namespace chiller
