#pragma once

// Exhaustive per-step dispatch minimiser.
//
// With the load fixed, the proportional split makes power a function of the
// flow fractions alone; total flow only moves the return temperature. The
// search therefore enumerates ON/OFF subsets, a simplex grid of flow
// fractions per subset, and for each fraction the smallest total flow on the
// flow grid that keeps every constraint of interest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "chiller/errors.hpp"
#include "chiller/plant.hpp"

namespace chiller {

enum class TieBreak { MinimalTotalFlow };

struct OracleConfig {
    int split_grid = 51;  // fraction points per ON chiller
    int flow_grid = 101;  // total-flow points across the feasible band
    TieBreak tie_break = TieBreak::MinimalTotalFlow;
    // Continuous pattern-search refinement of the best grid split of each subset.
    bool polish = true;
    // When false only the hard constraints (energy balance, return temperature)
    // gate feasibility; soft violations are still reported.
    bool enforce_soft = false;
    ConstraintTolerances tolerances{};
};

inline void validate(const OracleConfig& cfg) {
    if (cfg.split_grid < 2 || cfg.flow_grid < 2)
        throw ConfigError("oracle grids must have at least 2 points");
}

struct DispatchSolution {
    ChillerAction action;
    PlantTelemetry telemetry;
    ConstraintReport report;
    bool feasible = false;
    double total_power = 0.0; // kW
    double total_flow = 0.0;  // kg/s
    // Hard-violation score of the returned candidate (0 when feasible).
    double best_violation = 0.0;
};

namespace detail {

struct SubsetGeometry {
    std::vector<std::size_t> members;
    double t_flow_lo = 0.0; // smallest total flow keeping t_return <= max
    double t_flow_hi = 0.0; // largest total flow keeping t_return >= min
    double band_lo = 0.0;   // grid band, including the summed flow limits
    double band_hi = 0.0;
};

struct Candidate {
    std::vector<double> fractions; // aligned with SubsetGeometry::members
    double power = std::numeric_limits<double>::infinity();
    double flow = std::numeric_limits<double>::infinity();
    std::size_t on = 0;
    bool feasible = false;
    double violation = std::numeric_limits<double>::infinity();
};

inline bool better(const Candidate& a, const Candidate& b) noexcept {
    if (a.feasible != b.feasible) return a.feasible;
    if (!a.feasible) return a.violation < b.violation;
    const double tie = 1e-12 * std::max(1.0, std::abs(b.power));
    if (a.power < b.power - tie) return true;
    if (a.power > b.power + tie) return false;
    if (a.flow < b.flow - 1e-12) return true;
    if (a.flow > b.flow + 1e-12) return false;
    return a.on < b.on;
}

class SplitEvaluator {
public:
    SplitEvaluator(const PlantConfig& plant, const OracleConfig& cfg, double load)
        : plant_(plant), cfg_(cfg), load_(load) {}

    [[nodiscard]] SubsetGeometry geometry(std::uint32_t mask) const {
        SubsetGeometry g;
        double fmin = 0.0, fmax = 0.0;
        for (std::size_t i = 0; i < plant_.size(); ++i) {
            if (!(mask & (1u << i))) continue;
            g.members.push_back(i);
            fmin += plant_.chillers[i].flow_min;
            fmax += plant_.chillers[i].flow_max;
        }
        // Search the same set the constraint check accepts, tolerance included.
        const double slack = cfg_.tolerances.temperature * (1.0 - 1e-6);
        const double span_hi = plant_.t_return_max + slack - plant_.t_supply;
        const double span_lo = plant_.t_return_min - slack - plant_.t_supply;
        g.t_flow_lo = load_ / (plant_.c_w * span_hi);
        g.t_flow_hi = load_ / (plant_.c_w * span_lo);
        g.band_lo = std::max(fmin, g.t_flow_lo);
        g.band_hi = std::min(fmax, g.t_flow_hi);
        return g;
    }

    /// Scores a split; `grid_flow` selects grid (true) or exact minimal (false) flow.
    void evaluate(const SubsetGeometry& g, Candidate& c, bool grid_flow) const {
        const auto& tol = cfg_.tolerances;
        double power = 0.0, unmet = 0.0, soft = 0.0;
        double need_lo = g.t_flow_lo, need_hi = g.t_flow_hi;
        for (std::size_t k = 0; k < g.members.size(); ++k) {
            const auto& spec = plant_.chillers[g.members[k]];
            const double f = c.fractions[k];
            double q = load_ * f;
            if (q > plant_.plr_max * spec.rated_capacity) {
                unmet += q - plant_.plr_max * spec.rated_capacity;
                q = plant_.plr_max * spec.rated_capacity;
            }
            const double plr = q / spec.rated_capacity;
            const double p = power_from_plr(spec, plr);
            power += p;
            need_lo = std::max(need_lo, spec.flow_min / f);
            need_hi = std::min(need_hi, spec.flow_max / f);
            if (cfg_.enforce_soft) {
                const double plr_ex = std::max({0.0, plant_.plr_min - plr, plr - plant_.plr_max});
                const double cop = p > 0.0 ? q / p : std::numeric_limits<double>::infinity();
                const double cop_ex = std::max(0.0, cop - spec.cop_max);
                if (plr_ex > tol.plr) soft += plr_ex;
                if (cop_ex > tol.cop) soft += cop_ex;
            }
        }
        c.power = power;
        c.on = g.members.size();

        double flow = std::numeric_limits<double>::infinity();
        if (need_lo <= need_hi) {
            if (!grid_flow) {
                flow = need_lo;
            } else if (g.band_lo <= g.band_hi) {
                const int pts = cfg_.flow_grid;
                const double width = g.band_hi - g.band_lo;
                for (int j = 0; j < pts; ++j) {
                    const double m = g.band_lo + width * j / (pts - 1);
                    if (m >= need_lo * (1.0 - 1e-12) && m <= need_hi * (1.0 + 1e-12)) {
                        flow = m;
                        break;
                    }
                    if (m > need_hi) break;
                }
            }
        }
        double violation = unmet > tol.energy_balance ? unmet / 1000.0 : 0.0;
        if (!std::isfinite(flow)) {
            // Nearest achievable return-temperature excess for diagnostics.
            const double m = std::clamp(need_hi, 1e-9, std::numeric_limits<double>::max());
            const double t = load_ / (m * plant_.c_w) + plant_.t_supply;
            violation += std::max(0.0, t - plant_.t_return_max) +
                         std::max(0.0, plant_.t_return_min - t) + 1e-3;
        }
        violation += soft;
        c.flow = flow;
        c.violation = violation;
        c.feasible = std::isfinite(flow) && violation == 0.0;
    }

private:
    const PlantConfig& plant_;
    const OracleConfig& cfg_;
    double load_;
};

template <typename Fn>
void compose(int remaining, std::size_t pos, std::vector<int>& parts, Fn& fn) {
    const std::size_t k = parts.size();
    if (pos + 1 == k) {
        parts[pos] = remaining;
        fn(parts);
        return;
    }
    const int slots_after = static_cast<int>(k - pos - 1);
    for (int v = 1; v <= remaining - slots_after; ++v) {
        parts[pos] = v;
        compose(remaining - v, pos + 1, parts, fn);
    }
}

/// Calls fn(parts) for every composition of `total` into `k` positive integer parts.
template <typename Fn>
void for_each_composition(int total, std::size_t k, Fn&& fn) {
    if (k == 0 || static_cast<int>(k) > total) return;
    std::vector<int> parts(k, 1);
    compose(total, 0, parts, fn);
}

inline void polish(const SplitEvaluator& eval, const SubsetGeometry& g, Candidate& best,
                   double start_step) {
    const std::size_t k = g.members.size();
    Candidate trial = best;
    double step = start_step;
    while (step > 1e-11) {
        bool improved = false;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j || best.fractions[j] - step <= 0.0) continue;
                trial.fractions = best.fractions;
                trial.fractions[i] += step;
                trial.fractions[j] -= step;
                eval.evaluate(g, trial, false);
                if (trial.feasible && trial.power < best.power - 1e-13 * std::abs(best.power)) {
                    best = trial;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
}

/// Same search in flow space, where the limits are a box plus bounds on the total flow.
/// Catches optima the split moves miss when several flow limits bind at once.
inline void polish_flows(const SplitEvaluator& eval, const SubsetGeometry& g, const PlantConfig& plant,
                         Candidate& best) {
    const std::size_t k = g.members.size();
    if (k < 2 || !best.feasible) return;
    std::vector<double> x(k), lo(k), hi(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& spec = plant.chillers[g.members[j]];
        lo[j] = spec.flow_min;
        hi[j] = spec.flow_max;
        x[j] = std::clamp(best.fractions[j] * best.flow, lo[j], hi[j]);
    }
    Candidate trial = best;
    auto score = [&](const std::vector<double>& y) {
        const double sum = std::accumulate(y.begin(), y.end(), 0.0);
        for (std::size_t j = 0; j < k; ++j) trial.fractions[j] = y[j] / sum;
        eval.evaluate(g, trial, false);
        return trial.feasible && trial.power < best.power - 1e-13 * std::abs(best.power);
    };
    double step = 0.05 * (hi[0] - lo[0]);
    std::vector<double> y;
    while (step > 1e-9) {
        bool improved = false;
        for (std::size_t i = 0; i < k; ++i) {
            for (double d : {step, -step}) {
                y = x;
                y[i] = std::clamp(y[i] + d, lo[i], hi[i]);
                if (y[i] != x[i] && score(y)) {
                    best = trial;
                    x = y;
                    improved = true;
                }
                for (std::size_t j = 0; j < k; ++j) {
                    if (j == i) continue;
                    y = x;
                    y[i] = std::clamp(y[i] + d, lo[i], hi[i]);
                    y[j] = std::clamp(y[j] - d, lo[j], hi[j]);
                    if (y != x && score(y)) {
                        best = trial;
                        x = y;
                        improved = true;
                    }
                }
            }
        }
        if (!improved) step *= 0.5;
    }
}

} // namespace detail

inline DispatchSolution optimal_dispatch(const PlantConfig& plant, const OracleConfig& cfg,
                                         double building_load) {
    validate(cfg);
    if (!std::isfinite(building_load) || building_load < 0.0)
        throw InputError("optimal_dispatch: building load must be finite and >= 0");
    const std::size_t n = plant.size();
    if (n == 0 || n > 16) throw ConfigError("optimal_dispatch: plant must have 1..16 chillers");

    detail::SplitEvaluator eval(plant, cfg, building_load);

    // All-OFF candidate: zero power, feasible only if the load is within tolerance.
    detail::Candidate best;
    std::uint32_t best_mask = 0;
    {
        best.power = 0.0;
        best.flow = 0.0;
        best.on = 0;
        best.violation = building_load > cfg.tolerances.energy_balance ? building_load / 1000.0 : 0.0;
        best.feasible = best.violation == 0.0;
    }

    const int units = cfg.split_grid - 1;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        const auto geom = eval.geometry(mask);
        const std::size_t k = geom.members.size();
        detail::Candidate subset_best;
        detail::Candidate c;
        c.fractions.resize(k);
        detail::for_each_composition(units, k, [&](const std::vector<int>& parts) {
            for (std::size_t m = 0; m < k; ++m)
                c.fractions[m] = static_cast<double>(parts[m]) / units;
            eval.evaluate(geom, c, true);
            if (detail::better(c, subset_best)) subset_best = c;
        });
        if (subset_best.fractions.empty()) continue;
        // Near the hydraulic limits the feasible splits can fall between grid points;
        // the split interpolating each member's flow range at the minimum band flow always fits.
        if (geom.band_lo <= geom.band_hi) {
            double fmin = 0.0, fmax = 0.0;
            for (auto i : geom.members) {
                fmin += plant.chillers[i].flow_min;
                fmax += plant.chillers[i].flow_max;
            }
            const double m = geom.band_lo;
            const double theta = fmax > fmin ? (m - fmin) / (fmax - fmin) : 0.0;
            detail::Candidate seed;
            seed.fractions.resize(k);
            for (std::size_t j = 0; j < k; ++j) {
                const auto& spec = plant.chillers[geom.members[j]];
                seed.fractions[j] = (spec.flow_min + theta * (spec.flow_max - spec.flow_min)) / m;
            }
            eval.evaluate(geom, seed, false);
            if (detail::better(seed, subset_best)) subset_best = seed;
        }
        if (cfg.polish && subset_best.feasible) {
            detail::Candidate exact = subset_best;
            eval.evaluate(geom, exact, false);
            if (k > 1) detail::polish(eval, geom, exact, 1.0 / units);
            detail::polish_flows(eval, geom, plant, exact);
            subset_best = exact;
        }
        if (detail::better(subset_best, best)) {
            best = subset_best;
            best_mask = mask;
        }
    }

    DispatchSolution sol;
    sol.action.flows.assign(n, 0.0);
    sol.action.on.assign(n, false);
    if (best_mask != 0) {
        const auto geom = eval.geometry(best_mask);
        double flow = best.flow;
        if (!std::isfinite(flow)) flow = std::max(geom.band_lo, 1e-9);
        for (std::size_t m = 0; m < geom.members.size(); ++m) {
            const std::size_t i = geom.members[m];
            const auto& spec = plant.chillers[i];
            sol.action.on[i] = true;
            sol.action.flows[i] = std::clamp(best.fractions[m] * flow, spec.flow_min, spec.flow_max);
        }
    }
    sol.telemetry = steady_state_dispatch(plant, sol.action, building_load);
    sol.report = check_constraints(plant, sol.telemetry, sol.action, cfg.tolerances);
    sol.total_power = sol.telemetry.total_power;
    sol.total_flow = sol.action.total_flow();
    sol.feasible = cfg.enforce_soft ? sol.report.all_satisfied() : hard_constraints_hold(sol.report);
    sol.best_violation = sol.feasible ? 0.0 : best.violation;
    return sol;
}

inline std::vector<DispatchSolution> lower_bound_trajectory(const PlantConfig& plant,
                                                            const OracleConfig& cfg,
                                                            std::span<const double> loads) {
    std::vector<DispatchSolution> out;
    out.reserve(loads.size());
    for (double load : loads) out.push_back(optimal_dispatch(plant, cfg, load));
    return out;
}

inline double trajectory_energy(std::span<const DispatchSolution> traj, double dt_hours) noexcept {
    double e = 0.0;
    for (const auto& s : traj) e += s.total_power * dt_hours;
    return e;
}

} // namespace chiller
