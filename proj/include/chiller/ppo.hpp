#pragma once

// Clipped-surrogate PPO with a tanh-squashed diagonal Gaussian actor and a
// separate value network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiller/errors.hpp"
#include "chiller/nn.hpp"

namespace chiller::ppo {

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_ratio = 0.2;
    double pi_lr = 3e-4;
    double vf_lr = 1e-3;
    int update_epochs = 10;
    std::size_t minibatch_size = 256;
    std::size_t steps_per_batch = 2016;
    double entropy_coef = 0.001;
    double vf_coef = 0.5;
    double max_grad_norm = 0.5;
    double target_kl = 0.015; // policy updates stop once approx KL > 1.5 x target; <= 0 disables
    std::uint64_t seed = 0;
    double init_log_std = -0.5;
    std::vector<std::size_t> hidden{64, 64};
    nn::Activation activation = nn::Activation::Tanh;
    bool normalize_obs = true;
    double obs_clip = 10.0;
};

inline void validate(const PpoConfig& c) {
    if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in [0, 1]");
    if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
    if (!(c.clip_ratio > 0.0 && c.clip_ratio < 1.0)) throw ConfigError("ppo: clip_ratio must lie in (0, 1)");
    if (!(c.pi_lr > 0.0 && c.vf_lr > 0.0)) throw ConfigError("ppo: step sizes must be > 0");
    if (c.update_epochs <= 0 || c.minibatch_size == 0 || c.steps_per_batch == 0)
        throw ConfigError("ppo: epochs, minibatch and batch sizes must be > 0");
    if (!(c.entropy_coef >= 0.0 && c.vf_coef >= 0.0)) throw ConfigError("ppo: loss coefficients must be >= 0");
    if (!std::isfinite(c.init_log_std)) throw ConfigError("ppo: init_log_std must be finite");
    if (!(c.obs_clip > 0.0)) throw ConfigError("ppo: obs_clip must be > 0");
    for (auto h : c.hidden)
        if (h == 0) throw ConfigError("ppo: hidden widths must be > 0");
}

// ---------------------------------------------------------------------------
// Observation normaliser (running mean / variance)

struct ObsNormalizer {
    std::vector<double> mean;
    std::vector<double> m2;
    double count = 0.0;
    double clip = 10.0;
    bool enabled = true;

    void init(std::size_t dim, bool on, double clip_value) {
        mean.assign(dim, 0.0);
        m2.assign(dim, 0.0);
        count = 0.0;
        enabled = on;
        clip = clip_value;
    }

    void update(std::span<const double> x) {
        if (!enabled) return;
        if (x.size() != mean.size()) throw ContractError("normalizer: dimension mismatch");
        count += 1.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - mean[i];
            mean[i] += d / count;
            m2[i] += d * (x[i] - mean[i]);
        }
    }

    void apply(std::span<const double> x, std::span<double> out) const {
        if (x.size() != mean.size() || out.size() != x.size()) throw ContractError("normalizer: dimension mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!enabled) {
                out[i] = x[i];
                continue;
            }
            const double var = count > 1.0 ? m2[i] / count : 1.0;
            out[i] = std::clamp((x[i] - mean[i]) / std::sqrt(var + 1e-8), -clip, clip);
        }
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> x) const {
        std::vector<double> out(x.size());
        apply(x, out);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Actor-critic

struct ActorCritic {
    nn::Mlp actor;
    std::vector<double> log_std;
    nn::Mlp critic;
    ObsNormalizer normalizer;

    [[nodiscard]] std::size_t obs_dim() const noexcept { return actor.arch.input; }
    [[nodiscard]] std::size_t act_dim() const noexcept { return actor.arch.output; }
    [[nodiscard]] std::size_t policy_size() const noexcept { return actor.params.size() + log_std.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return policy_size() + critic.params.size(); }
};

inline ActorCritic make_actor_critic(std::size_t obs_dim, std::size_t act_dim, const PpoConfig& cfg,
                                     std::mt19937_64& rng) {
    validate(cfg);
    nn::MlpArch a{obs_dim, cfg.hidden, act_dim, cfg.activation};
    nn::MlpArch v{obs_dim, cfg.hidden, 1, cfg.activation};
    ActorCritic ac;
    ac.actor = nn::make_mlp(a, rng, 0.01);
    ac.critic = nn::make_mlp(v, rng, 1.0);
    ac.log_std.assign(act_dim, cfg.init_log_std);
    ac.normalizer.init(obs_dim, cfg.normalize_obs, cfg.obs_clip);
    return ac;
}

/// Concatenation [actor | log_std | critic].
inline std::vector<double> flatten(const ActorCritic& ac) {
    std::vector<double> p;
    p.reserve(ac.size());
    p.insert(p.end(), ac.actor.params.begin(), ac.actor.params.end());
    p.insert(p.end(), ac.log_std.begin(), ac.log_std.end());
    p.insert(p.end(), ac.critic.params.begin(), ac.critic.params.end());
    return p;
}

inline void unflatten(ActorCritic& ac, std::span<const double> p) {
    if (p.size() != ac.size()) throw ContractError("unflatten: parameter count mismatch");
    auto it = p.begin();
    std::copy(it, it + static_cast<std::ptrdiff_t>(ac.actor.params.size()), ac.actor.params.begin());
    it += static_cast<std::ptrdiff_t>(ac.actor.params.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(ac.log_std.size()), ac.log_std.begin());
    it += static_cast<std::ptrdiff_t>(ac.log_std.size());
    std::copy(it, p.end(), ac.critic.params.begin());
}

// ---------------------------------------------------------------------------
// Squashed Gaussian

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

inline double softplus(double x) noexcept { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// log(1 - tanh(u)^2), stable for large |u|.
inline double log_squash_jacobian(double u) noexcept {
    return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

inline double gaussian_log_prob(std::span<const double> u, std::span<const double> mean,
                                std::span<const double> log_std) noexcept {
    double lp = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double z = (u[j] - mean[j]) * std::exp(-log_std[j]);
        lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
    }
    return lp;
}

/// Log-density of a = tanh(u) where u ~ N(mean, exp(log_std)^2).
inline double squashed_log_prob(std::span<const double> u, std::span<const double> mean,
                                std::span<const double> log_std) noexcept {
    double lp = gaussian_log_prob(u, mean, log_std);
    for (double x : u) lp -= log_squash_jacobian(x);
    return lp;
}

inline double gaussian_entropy(std::span<const double> log_std) noexcept {
    double h = 0.0;
    for (double s : log_std) h += s + 0.5 + kHalfLog2Pi;
    return h;
}

struct PolicyOutput {
    std::vector<double> mean;
    std::vector<double> log_std;
    std::vector<double> pre_squash;
    std::vector<double> action; // in (-1, 1)
    double log_prob = 0.0;
};

/// Policy on an already normalised observation; deterministic (mean action) when rng is null.
inline PolicyOutput policy_forward_normalized(const ActorCritic& ac, std::span<const double> x,
                                              std::mt19937_64* rng = nullptr,
                                              std::normal_distribution<double>* n01 = nullptr) {
    if (x.size() != ac.obs_dim()) throw ContractError("policy: observation size does not match network");
    nn::check_finite(ac.actor.params, "policy parameters");
    nn::check_finite(ac.log_std, "policy log_std");
    nn::MlpCache cache;
    nn::forward(ac.actor, x, 1, cache);
    PolicyOutput out;
    const auto mu = cache.output();
    out.mean.assign(mu.begin(), mu.end());
    out.log_std = ac.log_std;
    out.pre_squash = out.mean;
    if (rng) {
        std::normal_distribution<double> local(0.0, 1.0);
        auto& dist = n01 ? *n01 : local;
        for (std::size_t j = 0; j < out.mean.size(); ++j)
            out.pre_squash[j] = out.mean[j] + std::exp(out.log_std[j]) * dist(*rng);
    }
    out.action.resize(out.mean.size());
    for (std::size_t j = 0; j < out.mean.size(); ++j) out.action[j] = std::tanh(out.pre_squash[j]);
    out.log_prob = squashed_log_prob(out.pre_squash, out.mean, out.log_std);
    return out;
}

/// Policy on a raw observation, normalised with the (frozen) statistics held by `ac`.
inline PolicyOutput policy_forward(const ActorCritic& ac, std::span<const double> obs,
                                   std::mt19937_64* rng = nullptr) {
    if (obs.size() != ac.obs_dim()) throw ContractError("policy: observation size does not match network");
    return policy_forward_normalized(ac, ac.normalizer.apply(obs), rng);
}

inline double value_normalized(const ActorCritic& ac, std::span<const double> x) {
    nn::MlpCache cache;
    nn::forward(ac.critic, x, 1, cache);
    return cache.output()[0];
}

/// Deterministic action in [-1, 1]: tanh of the policy mean.
inline std::vector<double> deterministic_action(const ActorCritic& ac, std::span<const double> obs) {
    return policy_forward(ac, obs, nullptr).action;
}

// ---------------------------------------------------------------------------
// Advantages

struct AdvantageResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// General form: delta_t = r_t + gamma (1 - terminal_t) next_value_t - V_t,
/// A_t = delta_t + gamma lambda (1 - end_t) A_{t+1}. `end_t` marks any episode
/// boundary after step t (terminal or truncated).
inline AdvantageResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const double> next_values, std::span<const std::uint8_t> terminal,
                                      std::span<const std::uint8_t> ends, double gamma, double lambda) {
    const std::size_t T = rewards.size();
    if (values.size() != T || next_values.size() != T || terminal.size() != T || ends.size() != T)
        throw ContractError("gae: sequence lengths differ");
    AdvantageResult r;
    r.advantages.assign(T, 0.0);
    r.returns.assign(T, 0.0);
    double next_adv = 0.0;
    for (std::size_t t = T; t-- > 0;) {
        const double delta = rewards[t] + gamma * (terminal[t] ? 0.0 : next_values[t]) - values[t];
        next_adv = delta + gamma * lambda * (ends[t] ? 0.0 : next_adv);
        r.advantages[t] = next_adv;
        r.returns[t] = next_adv + values[t];
    }
    return r;
}

/// Common form: `values` holds T + 1 entries (the last is the bootstrap); done_t ends the episode without bootstrap.
inline AdvantageResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const std::uint8_t> dones, double gamma, double lambda) {
    const std::size_t T = rewards.size();
    if (values.size() != T + 1 || dones.size() != T)
        throw ContractError("gae: values need T + 1 entries and dones T entries");
    return gae_advantages(rewards, values.first(T), values.subspan(1), dones, dones, gamma, lambda);
}

inline void normalize_advantages(std::vector<double>& a) {
    if (a.empty()) return;
    const double n = static_cast<double>(a.size());
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
}

// ---------------------------------------------------------------------------
// Rollout buffer and loss

struct RolloutBuffer {
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::vector<double> obs;        // normalised observations, row-major
    std::vector<double> pre_squash; // row-major
    std::vector<double> log_prob;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> next_values;
    std::vector<std::uint8_t> terminal;
    std::vector<std::uint8_t> ends;
    std::vector<double> advantages;
    std::vector<double> returns;

    void reset(std::size_t od, std::size_t ad) {
        *this = RolloutBuffer{};
        obs_dim = od;
        act_dim = ad;
    }
    [[nodiscard]] std::size_t size() const noexcept { return rewards.size(); }

    void add(std::span<const double> x, std::span<const double> u, double lp, double r, double v) {
        obs.insert(obs.end(), x.begin(), x.end());
        pre_squash.insert(pre_squash.end(), u.begin(), u.end());
        log_prob.push_back(lp);
        rewards.push_back(r);
        values.push_back(v);
        next_values.push_back(0.0);
        terminal.push_back(0);
        ends.push_back(0);
    }

    /// Fills advantages / returns and normalises the advantages.
    void finish(double gamma, double lambda, bool normalize = true) {
        auto r = gae_advantages(rewards, values, next_values, terminal, ends, gamma, lambda);
        advantages = std::move(r.advantages);
        returns = std::move(r.returns);
        if (normalize) normalize_advantages(advantages);
    }
};

inline double clipped_surrogate(double ratio, double adv, double eps) noexcept {
    return std::min(ratio * adv, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

struct LossResult {
    double loss = 0.0;
    double pi_loss = 0.0;
    double v_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    std::vector<double> grad; // aligned with flatten(ac)
};

inline LossResult ppo_loss(const ActorCritic& ac, const RolloutBuffer& buf, std::span<const std::size_t> idx,
                           const PpoConfig& cfg) {
    if (idx.empty()) throw ContractError("ppo_loss: empty minibatch");
    if (buf.advantages.size() != buf.size()) throw ContractError("ppo_loss: advantages not computed");
    const std::size_t B = idx.size(), od = buf.obs_dim, ad = buf.act_dim;
    if (od != ac.obs_dim() || ad != ac.act_dim()) throw ContractError("ppo_loss: buffer layout mismatch");

    std::vector<double> x(B * od);
    for (std::size_t s = 0; s < B; ++s)
        std::copy_n(buf.obs.begin() + static_cast<std::ptrdiff_t>(idx[s] * od), od, x.begin() + static_cast<std::ptrdiff_t>(s * od));

    nn::MlpCache pc, vc;
    nn::forward(ac.actor, x, B, pc);
    nn::forward(ac.critic, x, B, vc);
    const auto mu = pc.output();
    const auto val = vc.output();

    LossResult r;
    r.grad.assign(ac.size(), 0.0);
    std::vector<double> g_mu(B * ad, 0.0);
    std::vector<double> g_v(B, 0.0);
    double* g_logstd = r.grad.data() + ac.actor.params.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const double eps = cfg.clip_ratio;
    std::vector<double> inv_var(ad);
    for (std::size_t j = 0; j < ad; ++j) inv_var[j] = std::exp(-2.0 * ac.log_std[j]);

    double clipped = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
        const std::size_t t = idx[s];
        const double* u = buf.pre_squash.data() + t * ad;
        const std::span<const double> us(u, ad);
        const double lp = squashed_log_prob(us, mu.subspan(s * ad, ad), ac.log_std);
        const double ratio = std::exp(lp - buf.log_prob[t]);
        const double A = buf.advantages[t];
        r.pi_loss -= clipped_surrogate(ratio, A, eps) * inv_b;
        r.approx_kl += (buf.log_prob[t] - lp) * inv_b;
        const bool clip_active = (A >= 0.0 && ratio > 1.0 + eps) || (A < 0.0 && ratio < 1.0 - eps);
        if (std::abs(ratio - 1.0) > eps) clipped += 1.0;
        if (!clip_active) {
            const double d_lp = -A * ratio * inv_b; // dLoss / dlog_prob
            for (std::size_t j = 0; j < ad; ++j) {
                const double diff = u[j] - mu[s * ad + j];
                g_mu[s * ad + j] += d_lp * diff * inv_var[j];
                g_logstd[j] += d_lp * (diff * diff * inv_var[j] - 1.0);
            }
        }
        const double err = val[s] - buf.returns[t];
        r.v_loss += err * err * inv_b;
        g_v[s] = 2.0 * cfg.vf_coef * err * inv_b;
    }
    r.entropy = gaussian_entropy(ac.log_std);
    for (std::size_t j = 0; j < ad; ++j) g_logstd[j] -= cfg.entropy_coef;
    r.clip_fraction = clipped * inv_b;
    r.loss = r.pi_loss + cfg.vf_coef * r.v_loss - cfg.entropy_coef * r.entropy;

    if (!std::isfinite(r.loss)) {
        std::ostringstream msg;
        msg << "ppo_loss: non-finite loss (pi " << r.pi_loss << ", v " << r.v_loss << ", kl " << r.approx_kl
            << ", minibatch " << B << ")";
        throw NumericError(msg.str());
    }

    nn::backward(ac.actor, pc, g_mu, std::span<double>(r.grad.data(), ac.actor.params.size()));
    nn::backward(ac.critic, vc, g_v, std::span<double>(r.grad.data() + ac.policy_size(), ac.critic.params.size()));
    return r;
}

// ---------------------------------------------------------------------------
// Environment contract and training loop

struct EnvStep {
    std::vector<double> observation;
    double reward = 0.0;
    bool terminal = false;  // absorbing end, no bootstrap
    bool truncated = false; // time limit, bootstrap from the returned observation
    bool hard_violation = false;
};

class Environment {
public:
    virtual ~Environment() = default;
    [[nodiscard]] virtual std::size_t observation_size() const = 0;
    [[nodiscard]] virtual std::size_t action_size() const = 0;
    virtual std::vector<double> reset(std::uint64_t episode_seed) = 0;
    virtual EnvStep step(std::span<const double> action) = 0;
};

struct CurveRow {
    std::size_t batch = 0;
    std::size_t steps = 0; // cumulative environment steps after this batch
    std::size_t episodes = 0;
    double mean_return = 0.0; // mean undiscounted return per episode segment
    double mean_reward = 0.0;
    double hard_violation_fraction = 0.0;
    double pi_loss = 0.0;
    double v_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    int policy_epochs = 0;
};

struct TrainState {
    ActorCritic ac;
    nn::AdamState pi_opt;
    nn::AdamState vf_opt;
    std::mt19937_64 rng;
    std::size_t batch = 0;
    std::size_t steps = 0;
    std::vector<CurveRow> curve;
};

inline TrainState init_train_state(std::size_t obs_dim, std::size_t act_dim, const PpoConfig& cfg) {
    validate(cfg);
    TrainState s;
    s.rng.seed(cfg.seed);
    s.ac = make_actor_critic(obs_dim, act_dim, cfg, s.rng);
    return s;
}

// Checkpoint (structured text) --------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json arch_to_json(const nn::MlpArch& a) {
    return {{"input", a.input}, {"hidden", a.hidden}, {"output", a.output}, {"activation", nn::to_string(a.activation)}};
}

inline nn::MlpArch arch_from_json(const nlohmann::json& j) {
    nn::MlpArch a;
    a.input = j.at("input").get<std::size_t>();
    a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    a.output = j.at("output").get<std::size_t>();
    a.activation = nn::activation_from_string(j.at("activation").get<std::string>());
    nn::validate(a);
    return a;
}

inline nlohmann::json to_json(const TrainState& s) {
    auto adam = [](const nn::AdamState& a) { return nlohmann::json{{"m", a.m}, {"v", a.v}, {"t", a.t}}; };
    std::ostringstream rng;
    rng << s.rng;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& c : s.curve)
        curve.push_back({{"batch", c.batch}, {"steps", c.steps}, {"episodes", c.episodes},
                         {"mean_return", c.mean_return}, {"mean_reward", c.mean_reward},
                         {"hard_violation_fraction", c.hard_violation_fraction}, {"pi_loss", c.pi_loss},
                         {"v_loss", c.v_loss}, {"entropy", c.entropy}, {"approx_kl", c.approx_kl},
                         {"clip_fraction", c.clip_fraction}, {"policy_epochs", c.policy_epochs}});
    const auto& n = s.ac.normalizer;
    return {{"format", "chillerbench-ppo"},
            {"version", kCheckpointVersion},
            {"actor", {{"arch", arch_to_json(s.ac.actor.arch)}, {"params", s.ac.actor.params}}},
            {"log_std", s.ac.log_std},
            {"critic", {{"arch", arch_to_json(s.ac.critic.arch)}, {"params", s.ac.critic.params}}},
            {"normalizer", {{"enabled", n.enabled}, {"clip", n.clip}, {"count", n.count}, {"mean", n.mean}, {"m2", n.m2}}},
            {"pi_opt", adam(s.pi_opt)},
            {"vf_opt", adam(s.vf_opt)},
            {"rng", rng.str()},
            {"batch", s.batch},
            {"steps", s.steps},
            {"curve", curve}};
}

inline TrainState train_state_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "chillerbench-ppo") throw ConfigError("checkpoint: unknown format");
        if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
        TrainState s;
        s.ac.actor.arch = arch_from_json(j.at("actor").at("arch"));
        s.ac.actor.params = j.at("actor").at("params").get<std::vector<double>>();
        s.ac.log_std = j.at("log_std").get<std::vector<double>>();
        s.ac.critic.arch = arch_from_json(j.at("critic").at("arch"));
        s.ac.critic.params = j.at("critic").at("params").get<std::vector<double>>();
        if (s.ac.actor.params.size() != s.ac.actor.arch.param_count() ||
            s.ac.critic.params.size() != s.ac.critic.arch.param_count() ||
            s.ac.log_std.size() != s.ac.actor.arch.output || s.ac.critic.arch.input != s.ac.actor.arch.input)
            throw ConfigError("checkpoint: parameter arrays do not match the architecture");
        const auto& n = j.at("normalizer");
        s.ac.normalizer.enabled = n.at("enabled").get<bool>();
        s.ac.normalizer.clip = n.at("clip").get<double>();
        s.ac.normalizer.count = n.at("count").get<double>();
        s.ac.normalizer.mean = n.at("mean").get<std::vector<double>>();
        s.ac.normalizer.m2 = n.at("m2").get<std::vector<double>>();
        if (s.ac.normalizer.mean.size() != s.ac.obs_dim() || s.ac.normalizer.m2.size() != s.ac.obs_dim())
            throw ConfigError("checkpoint: normalizer size mismatch");
        auto adam = [](const nlohmann::json& a) {
            nn::AdamState st;
            st.m = a.at("m").get<std::vector<double>>();
            st.v = a.at("v").get<std::vector<double>>();
            st.t = a.at("t").get<std::uint64_t>();
            return st;
        };
        s.pi_opt = adam(j.at("pi_opt"));
        s.vf_opt = adam(j.at("vf_opt"));
        std::istringstream rng(j.at("rng").get<std::string>());
        rng >> s.rng;
        if (!rng) throw ConfigError("checkpoint: corrupt RNG state");
        s.batch = j.at("batch").get<std::size_t>();
        s.steps = j.at("steps").get<std::size_t>();
        for (const auto& c : j.at("curve")) {
            CurveRow r;
            r.batch = c.at("batch");
            r.steps = c.at("steps");
            r.episodes = c.at("episodes");
            r.mean_return = c.at("mean_return");
            r.mean_reward = c.at("mean_reward");
            r.hard_violation_fraction = c.at("hard_violation_fraction");
            r.pi_loss = c.at("pi_loss");
            r.v_loss = c.at("v_loss");
            r.entropy = c.at("entropy");
            r.approx_kl = c.at("approx_kl");
            r.clip_fraction = c.at("clip_fraction");
            r.policy_epochs = c.at("policy_epochs");
            s.curve.push_back(r);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, const TrainState& s) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
        out << to_json(s).dump() << '\n';
        if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
    }
    std::rename(tmp.c_str(), path.c_str());
}

inline TrainState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
    return train_state_from_json(j);
}

inline void write_curve_csv(std::ostream& out, std::span<const CurveRow> curve) {
    out << "batch,steps,episodes,mean_return,mean_reward,hard_violation_fraction,pi_loss,v_loss,entropy,approx_kl,"
           "clip_fraction,policy_epochs\n";
    auto f = [](double v) {
        std::ostringstream s;
        s.precision(10);
        s << v;
        return s.str();
    };
    for (const auto& c : curve)
        out << c.batch << ',' << c.steps << ',' << c.episodes << ',' << f(c.mean_return) << ',' << f(c.mean_reward)
            << ',' << f(c.hard_violation_fraction) << ',' << f(c.pi_loss) << ',' << f(c.v_loss) << ','
            << f(c.entropy) << ',' << f(c.approx_kl) << ',' << f(c.clip_fraction) << ',' << c.policy_epochs << '\n';
}

// Training ----------------------------------------------------------------

struct TrainOptions {
    std::size_t total_steps = 0;
    std::string checkpoint_path; // empty: no checkpoints
    std::function<void(const CurveRow&)> on_batch;
};

/// Collects one batch into `buf` and returns its curve statistics (losses left at zero).
inline CurveRow collect_batch(TrainState& s, Environment& env, const PpoConfig& cfg, std::size_t steps,
                              RolloutBuffer& buf) {
    auto& ac = s.ac;
    buf.reset(ac.obs_dim(), ac.act_dim());
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> obs = env.reset(s.rng());
    std::vector<double> x(ac.obs_dim());
    CurveRow row;
    double ep_return = 0.0, total_reward = 0.0;
    std::size_t violations = 0, segments = 0;
    double returns_sum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (obs.size() != ac.obs_dim()) throw ContractError("train: environment observation size mismatch");
        ac.normalizer.update(obs);
        ac.normalizer.apply(obs, x);
        const auto out = policy_forward_normalized(ac, x, &s.rng, &n01);
        const double v = value_normalized(ac, x);
        EnvStep st = env.step(out.action);
        buf.add(x, out.pre_squash, out.log_prob, st.reward, v);
        ep_return += st.reward;
        total_reward += st.reward;
        violations += st.hard_violation;
        const bool last = t + 1 == steps;
        if (st.terminal || st.truncated || last) {
            buf.ends.back() = 1;
            buf.terminal.back() = st.terminal ? 1 : 0;
            if (!st.terminal) buf.next_values.back() = value_normalized(ac, ac.normalizer.apply(st.observation));
            returns_sum += ep_return;
            ++segments;
            ep_return = 0.0;
            if (!last) obs = env.reset(s.rng());
        } else {
            obs = std::move(st.observation);
        }
    }
    // Within an episode the next value is the value of the following stored step.
    for (std::size_t t = 0; t + 1 < buf.size(); ++t)
        if (!buf.ends[t]) buf.next_values[t] = buf.values[t + 1];
    buf.finish(cfg.gamma, cfg.gae_lambda);
    row.episodes = segments;
    row.mean_return = segments ? returns_sum / static_cast<double>(segments) : 0.0;
    row.mean_reward = total_reward / static_cast<double>(steps);
    row.hard_violation_fraction = static_cast<double>(violations) / static_cast<double>(steps);
    return row;
}

/// Multi-epoch minibatch update on a finished buffer; fills the loss diagnostics of `row`.
inline void update_from_buffer(TrainState& s, const RolloutBuffer& buf, const PpoConfig& cfg, CurveRow& row) {
    auto& ac = s.ac;
    const std::size_t n = buf.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    bool policy_active = true;
    int policy_epochs = 0;
    double pi = 0.0, vl = 0.0, kl = 0.0, cf = 0.0;
    std::size_t updates = 0;
    const nn::AdamConfig pi_adam{cfg.pi_lr};
    const nn::AdamConfig vf_adam{cfg.vf_lr};
    for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), s.rng);
        bool stepped = false;
        for (std::size_t start = 0; start < n; start += cfg.minibatch_size) {
            const std::size_t stop = std::min(n, start + cfg.minibatch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            auto loss = ppo_loss(ac, buf, idx, cfg);
            pi += loss.pi_loss;
            vl += loss.v_loss;
            kl += loss.approx_kl;
            cf += loss.clip_fraction;
            ++updates;
            if (policy_active && cfg.target_kl > 0.0 && loss.approx_kl > 1.5 * cfg.target_kl) policy_active = false;
            if (policy_active) {
                std::span<double> gp(loss.grad.data(), ac.policy_size());
                nn::clip_grad_norm(gp, cfg.max_grad_norm);
                std::vector<double> params(ac.policy_size());
                std::copy(ac.actor.params.begin(), ac.actor.params.end(), params.begin());
                std::copy(ac.log_std.begin(), ac.log_std.end(), params.begin() + static_cast<std::ptrdiff_t>(ac.actor.params.size()));
                nn::adam_step(params, gp, s.pi_opt, pi_adam);
                std::copy_n(params.begin(), ac.actor.params.size(), ac.actor.params.begin());
                std::copy(params.begin() + static_cast<std::ptrdiff_t>(ac.actor.params.size()), params.end(), ac.log_std.begin());
                stepped = true;
            }
            std::span<double> gv(loss.grad.data() + ac.policy_size(), ac.critic.params.size());
            nn::clip_grad_norm(gv, cfg.max_grad_norm);
            nn::adam_step(ac.critic.params, gv, s.vf_opt, vf_adam);
        }
        policy_epochs += stepped;
    }
    const double u = updates ? static_cast<double>(updates) : 1.0;
    row.pi_loss = pi / u;
    row.v_loss = vl / u;
    row.approx_kl = kl / u;
    row.clip_fraction = cf / u;
    row.entropy = gaussian_entropy(ac.log_std);
    row.policy_epochs = policy_epochs;
}

/// Trains until `opts.total_steps` cumulative environment steps. Resumable: pass a state from load_checkpoint.
inline void train(TrainState& s, Environment& env, const PpoConfig& cfg, const TrainOptions& opts) {
    validate(cfg);
    if (env.observation_size() != s.ac.obs_dim() || env.action_size() != s.ac.act_dim())
        throw ContractError("train: environment does not match the network layout");
    RolloutBuffer buf;
    while (s.steps < opts.total_steps) {
        const std::size_t steps = std::min(cfg.steps_per_batch, opts.total_steps - s.steps);
        CurveRow row = collect_batch(s, env, cfg, steps, buf);
        try {
            update_from_buffer(s, buf, cfg, row);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at batch " + std::to_string(s.batch) +
                               (opts.checkpoint_path.empty() ? std::string()
                                                             : "; last good checkpoint: " + opts.checkpoint_path));
        }
        s.steps += steps;
        row.batch = s.batch++;
        row.steps = s.steps;
        s.curve.push_back(row);
        if (!opts.checkpoint_path.empty()) save_checkpoint(opts.checkpoint_path, s);
        if (opts.on_batch) opts.on_batch(row);
    }
}

inline TrainState train(Environment& env, const PpoConfig& cfg, std::size_t total_steps) {
    TrainState s = init_train_state(env.observation_size(), env.action_size(), cfg);
    train(s, env, cfg, TrainOptions{total_steps, {}, {}});
    return s;
}

} // namespace chiller::ppo
