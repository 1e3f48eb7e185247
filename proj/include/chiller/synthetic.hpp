#pragma once

// Deterministic synthetic campus cooling load with coupled weather.
//
// Deterministic part: diurnal temperature and irradiance cycles, a diurnal
// load sinusoid and a ramped working-hours occupancy block (weekdays full,
// weekends reduced). Stochastic part: AR(1) anomalies on temperature,
// humidity, cloud, wind and load, all scaled by `noise`. With noise = 0 the
// series repeats exactly every seven days.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

#include "chiller/timeseries.hpp"

namespace chiller {

struct SyntheticParams {
    std::int64_t start_time = days_from_civil(2024, 1, 1) * 86400; // a Monday
    double noise = 1.0;

    // weather
    double temp_mean = 26.0;      // degC
    double temp_diurnal = 4.5;    // degC amplitude, peak at 15:00
    double temp_anomaly_sd = 2.0; // stationary sd of the synoptic anomaly
    double rh_mean = 65.0;
    double rh_per_degree = -2.5;
    double ghi_clear_peak = 1000.0; // W/m2
    double cloud_mean = 0.25;

    // load
    double base_load = 900.0;        // kW
    double diurnal_load = 500.0;     // kW, daylight sinusoid
    double occupancy_load = 1800.0;  // kW, weekday working hours
    double weekend_occupancy = 0.25; // fraction of the weekday block
    double work_start_hour = 7.0;
    double work_end_hour = 19.0;
    double ramp_hours = 2.0;
    double temp_coeff = 110.0; // kW per degC above temp_ref
    double temp_ref = 24.0;
    double ghi_coeff = 0.6;    // kW per W/m2
    double load_noise_sd = 60.0;
    double min_load = 300.0;
    double max_load = 5810.0;
};

struct SyntheticTrace {
    LoadSeries load;
    ExogSeries exog;
};

namespace detail {

/// AR(1) with stationary standard deviation `sd`.
class Ar1 {
public:
    Ar1(double phi, double sd) : phi_(phi), innov_(sd * std::sqrt(1.0 - phi * phi)) {}
    double next(std::mt19937_64& rng, std::normal_distribution<double>& n01) {
        state_ = phi_ * state_ + innov_ * n01(rng);
        return state_;
    }

private:
    double phi_;
    double innov_;
    double state_ = 0.0;
};

inline double occupancy(double hod, int dow, const SyntheticParams& p) {
    const double half = 0.5 * p.ramp_hours;
    auto rise = [&](double x) { return std::clamp((x + half) / p.ramp_hours, 0.0, 1.0); };
    const double occ = rise(hod - p.work_start_hour) * rise(p.work_end_hour - hod);
    return dow < 5 ? occ : p.weekend_occupancy * occ;
}

} // namespace detail

inline SyntheticTrace synthetic_campus_load(std::size_t days, std::uint64_t seed,
                                            const SyntheticParams& p = {}) {
    if (days == 0) throw InputError("synthetic_campus_load: days must be >= 1");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const std::size_t n = days * 48;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    detail::Ar1 temp_anom(0.995, p.temp_anomaly_sd);
    detail::Ar1 rh_anom(0.97, 6.0);
    detail::Ar1 cloud_anom(0.95, 0.2);
    detail::Ar1 wind_anom(0.9, 1.0);
    detail::Ar1 dir_anom(0.95, 40.0);
    detail::Ar1 load_anom(0.9, p.load_noise_sd);

    SyntheticTrace tr;
    tr.load.step_seconds = kHalfHourSeconds;
    tr.load.timestamps.resize(n);
    tr.load.load.resize(n);
    tr.exog.samples.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const std::int64_t t = p.start_time + static_cast<std::int64_t>(k) * kHalfHourSeconds;
        const double hod = hour_of_day(t);
        const int dow = day_of_week(t);

        // Draw every anomaly each step so the random stream does not depend on noise.
        const double a_temp = temp_anom.next(rng, n01);
        const double a_rh = rh_anom.next(rng, n01);
        const double a_cloud = cloud_anom.next(rng, n01);
        const double a_wind = wind_anom.next(rng, n01);
        const double a_dir = dir_anom.next(rng, n01);
        const double a_load = load_anom.next(rng, n01);

        WeatherSample w;
        w.temp_c = p.temp_mean + p.temp_diurnal * std::cos(two_pi * (hod - 15.0) / 24.0) + p.noise * a_temp;
        w.rh_pct = std::clamp(p.rh_mean + p.rh_per_degree * (w.temp_c - p.temp_mean) + p.noise * a_rh, 5.0, 100.0);
        const double sun = std::max(0.0, std::sin(std::numbers::pi * (hod - 6.0) / 13.0));
        const double cloud = std::clamp(p.cloud_mean + p.noise * a_cloud, 0.0, 1.0);
        w.ghi_wm2 = p.ghi_clear_peak * sun * (1.0 - 0.7 * cloud);
        w.wind_mps = std::max(0.0, 3.0 + 1.5 * std::sin(two_pi * (hod - 9.0) / 24.0) + p.noise * a_wind);
        double dir = 120.0 + 40.0 * std::sin(two_pi * hod / 24.0) + p.noise * a_dir;
        dir = std::fmod(dir, 360.0);
        w.wind_deg = dir < 0.0 ? dir + 360.0 : dir;

        const double daylight = std::max(0.0, std::sin(std::numbers::pi * (hod - 7.0) / 14.0));
        double load = p.base_load + p.diurnal_load * daylight +
                      p.occupancy_load * detail::occupancy(hod, dow, p) +
                      p.temp_coeff * (w.temp_c - p.temp_ref) + p.ghi_coeff * w.ghi_wm2 + p.noise * a_load;
        load = std::clamp(load, p.min_load, p.max_load);

        tr.load.timestamps[k] = t;
        tr.load.load[k] = load;
        tr.exog.samples[k] = w;
    }
    return tr;
}

} // namespace chiller
