// chillerbench: command-line front end for the chiller control benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chiller/bench.hpp"
#include "chiller/config_io.hpp"
#include "chiller/curve_fit.hpp"
#include "chiller/oracle.hpp"
#include "chiller/synthetic.hpp"

namespace fs = std::filesystem;
using namespace chiller;

namespace {

struct Globals {
    std::string config;
    std::int64_t seed = -1;
    std::string out = "out";
    bool deterministic = false;
};

BenchConfig load_config(const Globals& g) {
    BenchConfig cfg;
    if (!g.config.empty()) cfg = load_bench_config(g.config);
    if (g.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(g.seed);
        cfg.ppo.seed = cfg.seed;
    }
    return cfg;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    return f;
}

fs::path checkpoint_path(const Globals& g, const BenchConfig& cfg, AgentKind kind) {
    const std::string name = kind == AgentKind::RecedingHorizon ? cfg.rh_checkpoint : cfg.one_step_checkpoint;
    const fs::path p(name);
    return p.is_absolute() ? p : fs::path(g.out) / p;
}

// ---------------------------------------------------------------------------

struct CurveArgs {
    std::string samples;
};

int cmd_fit_curves(const Globals& g, const CurveArgs& a) {
    if (a.samples.empty()) throw ConfigError("fit-curves: --samples is required");
    std::ifstream in(a.samples);
    if (!in) throw ConfigError("cannot open samples '" + a.samples + "'");
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "chiller_id,plr,power_kw") throw InputError("samples: expected header chiller_id,plr,power_kw");
    std::map<int, std::vector<CurveSample>> by_chiller;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        int id = 0;
        double plr = 0.0, p = 0.0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &id, &plr, &p) != 3)
            throw InputError("samples: malformed row " + std::to_string(row));
        by_chiller[id].push_back({plr, p});
    }
    std::ostringstream txt, csv;
    csv << "chiller_id,samples,alpha,beta,gamma,psi,r_squared,well_sampled,error\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %8s %12s %12s %12s %12s %8s\n", "chiller", "samples", "alpha", "beta",
                  "gamma", "psi", "R2");
    txt << "Power curve coefficients (P = alpha + beta PLR + gamma PLR^2 + psi PLR^3, kW)\n" << buf;
    for (const auto& [id, samples] : by_chiller) {
        try {
            const auto fit = fit_power_curve(samples);
            std::snprintf(buf, sizeof buf, "%-8d %8zu %12.4f %12.4f %12.4f %12.4f %8.4f%s\n", id, samples.size(),
                          fit.coeffs[0], fit.coeffs[1], fit.coeffs[2], fit.coeffs[3], fit.r_squared,
                          fit.well_sampled ? "" : "  (sparse PLR coverage)");
            txt << buf;
            csv << id << ',' << samples.size();
            for (double c : fit.coeffs) csv << ',' << fixed(c, 8);
            csv << ',' << fixed(fit.r_squared, 8) << ',' << (fit.well_sampled ? 1 : 0) << ",\n";
        } catch (const NumericError& e) {
            std::snprintf(buf, sizeof buf, "%-8d %8zu  ERROR: %s\n", id, samples.size(), e.what());
            txt << buf;
            csv << id << ',' << samples.size() << ",,,,,,," << e.what() << '\n';
        }
    }
    std::cout << txt.str();
    auto f1 = open_out(fs::path(g.out) / "curve_fit.txt");
    f1 << txt.str();
    auto f2 = open_out(fs::path(g.out) / "curve_fit.csv");
    f2 << csv.str();
    return 0;
}

struct GenArgs {
    std::string kind = "load";
    std::size_t days = 60;
    double noise = 1.0;
    double sigma = 10.0;
    std::size_t points = 20;
};

int cmd_gen_data(const Globals& g, const GenArgs& a) {
    const std::uint64_t seed = g.seed >= 0 ? static_cast<std::uint64_t>(g.seed) : 0;
    if (a.kind == "load") {
        SyntheticParams sp;
        sp.noise = a.noise;
        const auto tr = synthetic_campus_load(a.days, seed, sp);
        const fs::path p = fs::path(g.out) / "load.csv";
        auto f = open_out(p);
        write_load_csv(f, tr.load, &tr.exog);
        std::cout << "wrote " << tr.load.size() << " steps to " << p.string() << "\n";
        return 0;
    }
    if (a.kind == "curves") {
        if (a.points < 1) throw ConfigError("gen-data: --points must be >= 1");
        const auto plant = canonical_plant();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, a.sigma);
        const fs::path p = fs::path(g.out) / "curve_samples.csv";
        auto f = open_out(p);
        f << "chiller_id,plr,power_kw\n";
        for (const auto& c : plant.chillers) {
            for (std::size_t k = 0; k < a.points; ++k) {
                const double plr = a.points == 1 ? 0.6 : 0.2 + 0.8 * static_cast<double>(k) / static_cast<double>(a.points - 1);
                const double pw = power_from_plr(c, plr) + (a.sigma > 0.0 ? noise(rng) : 0.0);
                f << c.id << ',' << fixed(plr, 6) << ',' << fixed(pw, 6) << '\n';
            }
        }
        std::cout << "wrote " << plant.size() * a.points << " samples to " << p.string() << "\n";
        return 0;
    }
    throw ConfigError("gen-data: --kind must be 'load' or 'curves'");
}

struct TrainArgs {
    std::string agent = "both";
    bool smoke = false;
    std::size_t steps = 0;
    bool resume = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    const BenchConfig cfg = load_config(g);
    const auto data = make_bench_data(cfg);
    const auto fc = make_forecaster(cfg, data);
    const auto reward = effective_reward(cfg, data);
    std::vector<AgentKind> kinds;
    if (a.agent == "both" || a.agent == "rh") kinds.push_back(AgentKind::RecedingHorizon);
    if (a.agent == "both" || a.agent == "one_step") kinds.push_back(AgentKind::OneStep);
    if (kinds.empty()) throw ConfigError("train: --agent must be rh, one_step or both");

    for (auto kind : kinds) {
        auto env = make_task_env(cfg, data, reward, kind, fc);
        const auto ckpt = checkpoint_path(g, cfg, kind);
        fs::create_directories(ckpt.parent_path().empty() ? fs::path(".") : ckpt.parent_path());
        ppo::TrainState st;
        if (a.resume && fs::exists(ckpt)) {
            st = ppo::load_checkpoint(ckpt.string());
            std::cout << to_string(kind) << ": resuming at batch " << st.batch << " (" << st.steps << " steps)\n";
        } else {
            st = ppo::init_train_state(env.observation_size(), env.action_size(), cfg.ppo);
        }
        std::size_t total = a.steps ? a.steps : cfg.training.total_steps;
        if (a.smoke) total = st.steps + cfg.training.smoke_batches * cfg.ppo.steps_per_batch;
        ppo::TrainOptions opts;
        opts.total_steps = total;
        opts.checkpoint_path = ckpt.string();
        opts.on_batch = [&](const ppo::CurveRow& r) {
            std::cout << to_string(kind) << " batch " << r.batch << " steps " << r.steps << " mean_return "
                      << fixed(r.mean_return, 3) << " hard_violation " << fixed(r.hard_violation_fraction, 4) << "\n";
        };
        ppo::train(st, env, cfg.ppo, opts);
        if (st.steps == 0) ppo::save_checkpoint(ckpt.string(), st);
        auto f = open_out(fs::path(g.out) / ("training_curve_" + to_string(kind) + ".csv"));
        ppo::write_curve_csv(f, st.curve);
        std::cout << to_string(kind) << ": checkpoint " << ckpt.string() << "\n";
    }
    return 0;
}

std::shared_ptr<const ppo::ActorCritic> try_load(const fs::path& p, std::string& err) {
    if (!fs::exists(p)) {
        err = "checkpoint '" + p.string() + "' not found";
        return nullptr;
    }
    try {
        return std::make_shared<ppo::ActorCritic>(ppo::load_checkpoint(p.string()).ac);
    } catch (const ConfigError& e) {
        err = e.what();
        return nullptr;
    }
}

struct EvalArgs {
    std::string controller = "rule_based";
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const BenchConfig cfg = load_config(g);
    const auto data = make_bench_data(cfg);
    const auto fc = make_forecaster(cfg, data);
    const auto reward = effective_reward(cfg, data);
    std::unique_ptr<Controller> ctl;
    std::string err;
    if (a.controller == "rule_based") {
        ctl = std::make_unique<RuleBasedController>(cfg.plant, cfg.rule_based);
    } else if (a.controller == "oracle") {
        ctl = std::make_unique<OracleController>(cfg.oracle);
    } else if (a.controller == "one_step_rl") {
        auto net = try_load(checkpoint_path(g, cfg, AgentKind::OneStep), err);
        if (!net) throw ConfigError(err);
        ctl = std::make_unique<OneStepRlController>(net);
    } else if (a.controller == "receding_horizon_rl") {
        auto net = try_load(checkpoint_path(g, cfg, AgentKind::RecedingHorizon), err);
        if (!net) throw ConfigError(err);
        ctl = std::make_unique<RecedingHorizonController>(net, cfg.receding_horizon, fc, cfg.plant, cfg.rule_based);
    } else {
        throw ConfigError("eval: unknown controller '" + a.controller + "'");
    }
    auto ec = base_episode(data.eval_load, data.eval_exog, fc, cfg.receding_horizon.horizon);
    ec.start = data.eval_start;
    ec.length = data.eval_steps;
    ChillerEnv env(cfg.plant, reward);
    const auto log = run_episode(env, *ctl, ec);
    const auto s = summarize(ctl->name(), log);
    auto f = open_out(fs::path(g.out) / ("steps_" + s.name + ".csv"));
    write_episode_csv(f, log, cfg.plant.size());
    std::cout << s.name << ": energy_kwh " << fixed(s.energy_kwh, 3) << " hard_violation_fraction "
              << fixed(s.hard_violation_fraction, 4) << " mean_plr_on " << fixed(s.mean_plr_on, 4)
              << " mean_cop_on " << fixed(s.mean_cop_on, 4) << " rmse_kw " << fixed(s.rmse_kw, 3) << "\n";
    return 0;
}

int cmd_compare(const Globals& g) {
    const BenchConfig cfg = load_config(g);
    const auto data = make_bench_data(cfg);
    const auto fc = make_forecaster(cfg, data);
    const auto reward = effective_reward(cfg, data);
    CompareInputs in;
    in.one_step = try_load(checkpoint_path(g, cfg, AgentKind::OneStep), in.one_step_error);
    in.receding_horizon = try_load(checkpoint_path(g, cfg, AgentKind::RecedingHorizon), in.receding_horizon_error);
    const auto rep = run_compare(cfg, data, reward, fc, in);
    write_compare_outputs(g.out, rep, cfg.plant.size());
    write_report_text(std::cout, rep);
    return 0;
}

struct OracleArgs {
    std::vector<double> loads;
    std::string loads_csv;
    std::size_t steps = 0;
};

int cmd_oracle(const Globals& g, const OracleArgs& a) {
    BenchConfig cfg;
    if (!g.config.empty()) cfg = load_config(g);
    std::vector<double> loads = a.loads;
    if (!a.loads_csv.empty()) {
        LoadSeries s;
        ExogSeries e;
        read_load_csv(a.loads_csv, s, e);
        loads.insert(loads.end(), s.load.begin(), s.load.end());
    }
    if (a.steps && loads.size() > a.steps) loads.resize(a.steps);
    if (loads.empty()) throw ConfigError("oracle: give --load values or --loads <csv>");
    const std::size_t n = cfg.plant.size();
    std::ostringstream out;
    out << "step,load_kw,feasible,total_power_kw,total_flow_kgps,t_return_c";
    for (const char* col : {"flow", "plr", "power"})
        for (std::size_t i = 1; i <= n; ++i) out << ',' << col << '_' << i;
    out << '\n';
    for (std::size_t k = 0; k < loads.size(); ++k) {
        const auto s = optimal_dispatch(cfg.plant, cfg.oracle, loads[k]);
        out << k << ',' << fixed(loads[k], 4) << ',' << (s.feasible ? 1 : 0) << ',' << fixed(s.total_power, 6) << ','
            << fixed(s.total_flow, 6) << ',' << fixed(s.telemetry.t_return, 6);
        for (double v : s.action.flows) out << ',' << fixed(v, 6);
        for (double v : s.telemetry.plr) out << ',' << fixed(v, 6);
        for (double v : s.telemetry.power) out << ',' << fixed(v, 6);
        out << '\n';
    }
    std::cout << out.str();
    auto f = open_out(fs::path(g.out) / "oracle.csv");
    f << out.str();
    return 0;
}

int cmd_forecast(const Globals& g) {
    const BenchConfig cfg = load_config(g);
    const auto data = make_bench_data(cfg);
    LagRegressionOptions opt;
    opt.ridge = cfg.forecast.ridge;
    opt.layout.horizon = cfg.receding_horizon.horizon;
    const LagRegressionForecaster lr(fit_lag_regression(*data.train_load, *data.train_exog, opt));
    const PersistenceForecaster pers;
    const SeasonalNaiveForecaster seas(48);
    const std::size_t h = cfg.receding_horizon.horizon;
    const std::size_t first = data.eval_start;
    const std::size_t last = data.eval_start + data.eval_steps - h + 1;
    std::ostringstream txt;
    txt << "Forecast NMAE on " << data.trace_id << " (issues " << first << ".." << last - 1 << ", horizon " << h
        << ")\n";
    for (const Forecaster* m : std::initializer_list<const Forecaster*>{&pers, &seas, &lr}) {
        const double v = rolling_nmae(*m, *data.eval_load, *data.eval_exog, first, last, h);
        txt << "  " << m->id() << ": " << fixed(v, 6) << "\n";
    }
    txt << "  published field value (not reproduced): " << fixed(FieldReference::forecast_nmae, 3) << "\n";
    std::cout << txt.str();
    auto f = open_out(fs::path(g.out) / "forecast_nmae.txt");
    f << txt.str();
    const auto req = make_request(*data.eval_load, *data.eval_exog, first, kDefaultWindow, h);
    const auto fcst = lr.forecast(req);
    auto fc = open_out(fs::path(g.out) / "forecast.csv");
    write_forecast_csv(fc, fcst, data.eval_load->step_seconds, req.exog_future);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chiller plant control benchmark"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Benchmark configuration (JSON)");
    app.add_option("--seed", g.seed, "Seed override");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--deterministic", g.deterministic, "Deterministic execution (runs are always single-threaded)");

    CurveArgs curve;
    auto* fit = app.add_subcommand("fit-curves", "Fit cubic power curves to (plr, power) samples");
    fit->add_option("--samples", curve.samples, "CSV with header chiller_id,plr,power_kw")->required();

    GenArgs gen;
    auto* gd = app.add_subcommand("gen-data", "Generate a synthetic load trace or power-curve samples");
    gd->add_option("--kind", gen.kind, "load | curves");
    gd->add_option("--days", gen.days, "Days of half-hourly load");
    gd->add_option("--noise", gen.noise, "Load/weather noise scale");
    gd->add_option("--sigma", gen.sigma, "Power noise sd for curve samples, kW");
    gd->add_option("--points", gen.points, "Samples per chiller");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the RL agents");
    train->add_option("--agent", tr.agent, "rh | one_step | both");
    train->add_flag("--smoke", tr.smoke, "Run only the configured number of smoke batches");
    train->add_option("--steps", tr.steps, "Total environment steps (overrides the config)");
    train->add_flag("--resume", tr.resume, "Resume from an existing checkpoint");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Evaluate one controller on the benchmark trace");
    eval->add_option("--controller", ev.controller, "rule_based | one_step_rl | receding_horizon_rl | oracle");

    auto* cmp = app.add_subcommand("compare", "Evaluate all controllers and write the comparison report");

    OracleArgs orc;
    auto* oracle = app.add_subcommand("oracle", "Per-step optimal dispatch");
    oracle->add_option("--load", orc.loads, "Building load, kW (repeatable)");
    oracle->add_option("--loads", orc.loads_csv, "Load trace CSV");
    oracle->add_option("--steps", orc.steps, "Limit the number of steps");

    auto* fcst = app.add_subcommand("forecast", "Fit forecasters and report NMAE on the evaluation trace");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit) return cmd_fit_curves(g, curve);
        if (*gd) return cmd_gen_data(g, gen);
        if (*train) return cmd_train(g, tr);
        if (*eval) return cmd_eval(g, ev);
        if (*cmp) return cmd_compare(g);
        if (*oracle) return cmd_oracle(g, orc);
        if (*fcst) return cmd_forecast(g);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DomainError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
