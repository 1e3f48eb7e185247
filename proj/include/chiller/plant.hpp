#pragma once

// Steady-state physics of a heterogeneous chilled-water bank.
//
// Every quantity is per control step: a chiller bank receives a building
// load, a set of chilled-water mass flows, and resolves return temperature,
// per-chiller cooling, part-load ratio, electrical power and COP. Pipework is
// lossless and the supply temperature is fixed, so the return temperature is
// shared by every running chiller.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chiller/errors.hpp"

namespace chiller {

struct ChillerSpec {
    int id = 0;
    double rated_capacity = 0.0; // kW of cooling
    double flow_min = 0.0;       // kg/s
    double flow_max = 0.0;       // kg/s
    double cop_max = 0.0;
    // alpha, beta, gamma, psi: electrical kW as a cubic in PLR.
    std::array<double, 4> power_coeffs{};
    // Goodness of fit of power_coeffs, absent when the curve came from a datasheet.
    std::optional<double> r_squared;
};

struct PlantConfig {
    std::vector<ChillerSpec> chillers;
    double t_supply = 6.0;   // degC
    double c_w = 4.186;      // kJ/(kg K)
    double plr_min = 0.2;
    double plr_max = 10.0;
    double t_return_min = 6.56; // degC
    double t_return_max = 14.0; // degC
    double dt_hours = 0.5;
    // A requested flow below off_fraction * flow_min switches the chiller off.
    double off_fraction = 0.5;

    [[nodiscard]] std::size_t size() const noexcept { return chillers.size(); }

    [[nodiscard]] double total_capacity() const noexcept {
        double sum = 0.0;
        for (const auto& c : chillers) sum += c.rated_capacity;
        return sum;
    }

    [[nodiscard]] double total_flow_max() const noexcept {
        double sum = 0.0;
        for (const auto& c : chillers) sum += c.flow_max;
        return sum;
    }
};

struct ChillerAction {
    std::vector<double> flows; // kg/s, zero for OFF chillers
    std::vector<bool> on;

    [[nodiscard]] double total_flow() const noexcept {
        return std::accumulate(flows.begin(), flows.end(), 0.0);
    }
    [[nodiscard]] std::size_t on_count() const noexcept {
        return static_cast<std::size_t>(std::count(on.begin(), on.end(), true));
    }
};

struct PlantTelemetry {
    double building_load = 0.0; // kW
    double t_return = 0.0;      // degC
    double total_power = 0.0;   // kW
    double unmet_load = 0.0;    // kW, building_load - sum(cooling)
    std::vector<bool> on;
    std::vector<bool> capped;
    std::vector<double> flow;
    std::vector<double> cooling;
    std::vector<double> plr;
    std::vector<double> power;
    std::vector<double> cop;

    [[nodiscard]] bool any_on() const noexcept {
        return std::find(on.begin(), on.end(), true) != on.end();
    }
    [[nodiscard]] double total_cooling() const noexcept {
        return std::accumulate(cooling.begin(), cooling.end(), 0.0);
    }
};

enum class ConstraintId { EnergyBalance, ReturnTemperature, PlrRange, MinFlow, CopCap };

inline constexpr std::array<ConstraintId, 5> kAllConstraints{
    ConstraintId::EnergyBalance, ConstraintId::ReturnTemperature, ConstraintId::PlrRange,
    ConstraintId::MinFlow, ConstraintId::CopCap};

inline constexpr std::string_view to_string(ConstraintId id) noexcept {
    switch (id) {
    case ConstraintId::EnergyBalance: return "energy_balance";
    case ConstraintId::ReturnTemperature: return "t_return_range";
    case ConstraintId::PlrRange: return "plr_range";
    case ConstraintId::MinFlow: return "min_flow";
    case ConstraintId::CopCap: return "cop_cap";
    }
    return "unknown";
}

inline ConstraintId constraint_from_string(std::string_view name) {
    for (auto id : kAllConstraints)
        if (to_string(id) == name) return id;
    throw ConfigError("unknown constraint id '" + std::string(name) + "'");
}

struct ConstraintTolerances {
    double energy_balance = 1.0; // kW
    double temperature = 0.01;   // degC
    double plr = 1e-6;
    double flow = 1e-6; // kg/s
    double cop = 1e-6;

    [[nodiscard]] double of(ConstraintId id) const noexcept {
        switch (id) {
        case ConstraintId::EnergyBalance: return energy_balance;
        case ConstraintId::ReturnTemperature: return temperature;
        case ConstraintId::PlrRange: return plr;
        case ConstraintId::MinFlow: return flow;
        case ConstraintId::CopCap: return cop;
        }
        return 0.0;
    }
};

struct ConstraintEntry {
    ConstraintId id = ConstraintId::EnergyBalance;
    bool satisfied = true;
    double violation = 0.0;
    // Per-chiller excess for PLR, flow and COP; empty for plant-level constraints.
    std::vector<double> per_chiller;
};

struct ConstraintReport {
    std::array<ConstraintEntry, kAllConstraints.size()> entries;

    [[nodiscard]] const ConstraintEntry& at(ConstraintId id) const noexcept {
        return entries[static_cast<std::size_t>(id)];
    }
    [[nodiscard]] ConstraintEntry& at(ConstraintId id) noexcept {
        return entries[static_cast<std::size_t>(id)];
    }
    [[nodiscard]] bool all_satisfied() const noexcept {
        return std::all_of(entries.begin(), entries.end(),
                           [](const ConstraintEntry& e) { return e.satisfied; });
    }
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const ChillerSpec& spec, double plr_min = 0.2) {
    const auto where = "chiller " + std::to_string(spec.id) + ": ";
    if (!(spec.rated_capacity > 0.0)) throw ConfigError(where + "rated_capacity must be > 0");
    if (!(spec.cop_max > 0.0)) throw ConfigError(where + "cop_max must be > 0");
    if (!(spec.flow_min > 0.0 && spec.flow_min < spec.flow_max))
        throw ConfigError(where + "require 0 < flow_min < flow_max");
    for (double c : spec.power_coeffs)
        if (!std::isfinite(c)) throw ConfigError(where + "power coefficients must be finite");
    // Power must stay positive over the operating range; checked on a fine grid.
    for (int k = 0; k <= 1000; ++k) {
        const double plr = plr_min + (1.0 - plr_min) * k / 1000.0;
        const auto& a = spec.power_coeffs;
        const double p = a[0] + plr * (a[1] + plr * (a[2] + plr * a[3]));
        if (!(p > 0.0)) throw ConfigError(where + "power curve is not positive on [plr_min, 1]");
    }
}

inline void validate(const PlantConfig& cfg) {
    if (cfg.chillers.empty()) throw ConfigError("plant needs at least one chiller");
    if (!(cfg.t_supply < cfg.t_return_min && cfg.t_return_min < cfg.t_return_max))
        throw ConfigError("require t_supply < t_return_min < t_return_max");
    if (!(cfg.plr_min > 0.0 && cfg.plr_min < cfg.plr_max))
        throw ConfigError("require 0 < plr_min < plr_max");
    if (!(cfg.c_w > 0.0)) throw ConfigError("c_w must be > 0");
    if (!(cfg.dt_hours > 0.0)) throw ConfigError("dt_hours must be > 0");
    if (!(cfg.off_fraction > 0.0 && cfg.off_fraction <= 1.0))
        throw ConfigError("off_fraction must lie in (0, 1]");
    for (const auto& c : cfg.chillers) validate(c, cfg.plr_min);
}

// ---------------------------------------------------------------------------
// Canonical plant: three 1700 kW machines and one 710 kW machine.

inline PlantConfig canonical_plant() {
    PlantConfig cfg;
    cfg.chillers = {
        ChillerSpec{1, 1700.0, 14.5, 50.8, 10.0, {33.3469, -7.3826, 384.8817, -211.3766}, 0.9332},
        ChillerSpec{2, 1700.0, 14.5, 50.8, 10.0, {78.6233, -147.0632, 454.0039, -158.7085}, 0.8699},
        ChillerSpec{3, 1700.0, 14.5, 50.8, 10.0, {39.5435, 103.8645, -53.5269, 120.3910}, 0.9120},
        ChillerSpec{4, 710.0, 14.5, 21.2, 5.814, {27.0384, -115.1061, 261.4245, -84.0566},
                    std::nullopt},
    };
    return cfg;
}

// ---------------------------------------------------------------------------
// Scalar relations

inline double power_from_plr(const ChillerSpec& spec, double plr) {
    if (!(plr >= 0.0)) throw DomainError("power_from_plr: plr must be >= 0");
    const auto& a = spec.power_coeffs;
    return a[0] + plr * (a[1] + plr * (a[2] + plr * a[3]));
}

/// d(power)/d(plr) of the cubic curve.
inline double power_slope(const ChillerSpec& spec, double plr) noexcept {
    const auto& a = spec.power_coeffs;
    return a[1] + plr * (2.0 * a[2] + plr * 3.0 * a[3]);
}

inline double part_load_ratio(double cooling, double rated) {
    if (!(rated > 0.0)) throw DomainError("part_load_ratio: rated capacity must be > 0");
    if (!(cooling >= 0.0)) throw DomainError("part_load_ratio: cooling must be >= 0");
    return cooling / rated;
}

inline double return_temperature(double building_load, double total_on_flow,
                                 const PlantConfig& cfg) {
    if (!(total_on_flow > 0.0)) {
        if (building_load > 0.0) throw DomainError("return_temperature: no flow under load");
        return cfg.t_supply;
    }
    return building_load / (total_on_flow * cfg.c_w) + cfg.t_supply;
}

// ---------------------------------------------------------------------------
// Action decoding

/// Applies the OFF threshold and per-chiller flow limits to requested flows.
inline ChillerAction decode_flows(const PlantConfig& cfg, std::span<const double> requested) {
    if (requested.size() != cfg.size())
        throw ContractError("decode_flows: expected " + std::to_string(cfg.size()) + " flows");
    ChillerAction action;
    action.flows.resize(cfg.size(), 0.0);
    action.on.resize(cfg.size(), false);
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        const double f = requested[i];
        if (!(f >= 0.0)) throw InputError("decode_flows: flows must be finite and >= 0");
        const auto& c = cfg.chillers[i];
        if (f < cfg.off_fraction * c.flow_min) continue;
        action.on[i] = true;
        action.flows[i] = std::clamp(f, c.flow_min, c.flow_max);
    }
    return action;
}

// ---------------------------------------------------------------------------
// Dispatch

inline PlantTelemetry steady_state_dispatch(const PlantConfig& cfg, const ChillerAction& action,
                                            double building_load) {
    if (!std::isfinite(building_load) || building_load < 0.0)
        throw InputError("steady_state_dispatch: building load must be finite and >= 0");
    const std::size_t n = cfg.size();
    if (action.flows.size() != n || action.on.size() != n)
        throw ContractError("steady_state_dispatch: action size does not match plant");

    PlantTelemetry t;
    t.building_load = building_load;
    t.on = action.on;
    t.capped.assign(n, false);
    t.flow.assign(n, 0.0);
    t.cooling.assign(n, 0.0);
    t.plr.assign(n, 0.0);
    t.power.assign(n, 0.0);
    t.cop.assign(n, 0.0);

    double total_flow = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!action.on[i]) continue;
        if (!(action.flows[i] > 0.0))
            throw ContractError("steady_state_dispatch: ON chiller with non-positive flow");
        t.flow[i] = action.flows[i];
        total_flow += action.flows[i];
    }

    if (total_flow <= 0.0) {
        t.unmet_load = building_load;
        t.t_return = building_load > 0.0 ? cfg.t_return_max : cfg.t_supply;
        return t;
    }

    // Pass 1: shared return temperature, proportional split of the load.
    t.t_return = return_temperature(building_load, total_flow, cfg);
    double supplied = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!action.on[i]) continue;
        const auto& c = cfg.chillers[i];
        double q = building_load * (t.flow[i] / total_flow);
        // Pass 2: a chiller cannot exceed plr_max of its rating.
        const double q_cap = cfg.plr_max * c.rated_capacity;
        if (q > q_cap) {
            q = q_cap;
            t.capped[i] = true;
        }
        t.cooling[i] = q;
        t.plr[i] = q / c.rated_capacity;
        t.power[i] = power_from_plr(c, t.plr[i]);
        if (t.power[i] > 0.0)
            t.cop[i] = q / t.power[i];
        else
            t.cop[i] = q > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        supplied += q;
    }
    t.unmet_load = building_load - supplied;
    t.total_power = 0.0;
    for (double p : t.power) t.total_power += p;
    return t;
}

// ---------------------------------------------------------------------------
// Constraint evaluation

inline ConstraintReport check_constraints(const PlantConfig& cfg, const PlantTelemetry& t,
                                          const ChillerAction& action,
                                          const ConstraintTolerances& tol = {}) {
    const std::size_t n = cfg.size();
    ConstraintReport report;
    for (auto id : kAllConstraints) report.at(id).id = id;

    report.at(ConstraintId::EnergyBalance).violation = std::abs(t.unmet_load);

    auto& temp = report.at(ConstraintId::ReturnTemperature);
    if (t.any_on()) {
        if (t.t_return > cfg.t_return_max)
            temp.violation = t.t_return - cfg.t_return_max;
        else if (t.t_return < cfg.t_return_min)
            temp.violation = cfg.t_return_min - t.t_return;
    }

    auto& plr = report.at(ConstraintId::PlrRange);
    auto& flow = report.at(ConstraintId::MinFlow);
    auto& cop = report.at(ConstraintId::CopCap);
    plr.per_chiller.assign(n, 0.0);
    flow.per_chiller.assign(n, 0.0);
    cop.per_chiller.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!t.on[i]) continue;
        const auto& c = cfg.chillers[i];
        const double p = t.plr[i];
        plr.per_chiller[i] = std::max({0.0, cfg.plr_min - p, p - cfg.plr_max});
        const double f = i < action.flows.size() ? action.flows[i] : t.flow[i];
        flow.per_chiller[i] = std::max(0.0, c.flow_min - f);
        cop.per_chiller[i] = std::max(0.0, t.cop[i] - c.cop_max);
    }
    for (auto* e : {&plr, &flow, &cop})
        e->violation = e->per_chiller.empty()
                           ? 0.0
                           : *std::max_element(e->per_chiller.begin(), e->per_chiller.end());

    for (auto& e : report.entries) e.satisfied = e.violation <= tol.of(e.id);
    return report;
}

inline bool hard_constraints_hold(const ConstraintReport& r) noexcept {
    return r.at(ConstraintId::EnergyBalance).satisfied &&
           r.at(ConstraintId::ReturnTemperature).satisfied;
}

} // namespace chiller
