#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "chiller/errors.hpp"

namespace chiller {

inline constexpr int kHalfHourSeconds = 1800;

struct WeatherSample {
    double wind_mps = 0.0;
    double wind_deg = 0.0;
    double temp_c = 0.0;
    double rh_pct = 0.0;
    double ghi_wm2 = 0.0;
};

inline constexpr std::size_t kExogChannels = 5;

inline std::array<double, kExogChannels> channels(const WeatherSample& w) noexcept {
    return {w.wind_mps, w.wind_deg, w.temp_c, w.rh_pct, w.ghi_wm2};
}

/// Building cooling load on a uniform grid of epoch seconds (naive local time).
struct LoadSeries {
    std::vector<std::int64_t> timestamps;
    std::vector<double> load; // kW
    int step_seconds = kHalfHourSeconds;

    [[nodiscard]] std::size_t size() const noexcept { return load.size(); }
};

struct ExogSeries {
    std::vector<WeatherSample> samples;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
};

inline void validate(const LoadSeries& s) {
    if (s.timestamps.size() != s.load.size())
        throw InputError("load series: timestamp and load columns differ in length");
    if (s.step_seconds <= 0) throw InputError("load series: step must be positive");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s.load[i]) || s.load[i] < 0.0)
            throw InputError("load series: loads must be finite and >= 0 (row " +
                             std::to_string(i) + ")");
        if (i > 0 && s.timestamps[i] - s.timestamps[i - 1] != s.step_seconds)
            throw InputError("load series: timestamps must be gap-free and strictly increasing (row " +
                             std::to_string(i) + ")");
    }
}

inline void validate(const ExogSeries& e, const LoadSeries& s) {
    if (e.size() != s.size()) throw InputError("exogenous series not aligned with load series");
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto& w = e.samples[i];
        if (!(w.rh_pct >= 0.0 && w.rh_pct <= 100.0))
            throw InputError("exogenous series: humidity outside [0, 100] (row " +
                             std::to_string(i) + ")");
        for (double v : channels(w))
            if (!std::isfinite(v)) throw InputError("exogenous series: non-finite value");
    }
}

// ---------------------------------------------------------------------------
// Calendar helpers (proleptic Gregorian, no time zones).

inline constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilTime {
    std::int64_t year;
    unsigned month, day, hour, minute, second;
};

inline constexpr CivilTime civil_from_epoch(std::int64_t t) noexcept {
    std::int64_t days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    std::int64_t secs = t - days * 86400;
    days += 719468;
    const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const auto doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
    return {y, m, d, static_cast<unsigned>(secs / 3600), static_cast<unsigned>(secs % 3600 / 60),
            static_cast<unsigned>(secs % 60)};
}

/// Hour of day in [0, 24) including the fractional part.
inline double hour_of_day(std::int64_t t) noexcept {
    std::int64_t s = t % 86400;
    if (s < 0) s += 86400;
    return static_cast<double>(s) / 3600.0;
}

/// 0 = Monday ... 6 = Sunday.
inline int day_of_week(std::int64_t t) noexcept {
    std::int64_t days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    // 1970-01-01 was a Thursday.
    return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

inline std::string format_iso8601(std::int64_t t) {
    const auto c = civil_from_epoch(t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02u:%02u:%02u",
                  static_cast<long long>(c.year), c.month, c.day, c.hour, c.minute, c.second);
    return buf;
}

inline std::int64_t parse_iso8601(const std::string& text) {
    long long y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    const int got = std::sscanf(text.c_str(), "%lld-%u-%u%c%u:%u:%u", &y, &mo, &d, &sep, &h, &mi, &s);
    if (got < 3 || (got > 3 && got < 6) || (got >= 4 && sep != 'T' && sep != ' ') || mo < 1 ||
        mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
        throw InputError("invalid ISO-8601 timestamp '" + text + "'");
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Delimited text: timestamp,load_kw,wind_mps,wind_deg,temp_c,rh_pct,ghi_wm2

inline constexpr const char* kLoadCsvHeader = "timestamp,load_kw,wind_mps,wind_deg,temp_c,rh_pct,ghi_wm2";

inline void write_load_csv(std::ostream& out, const LoadSeries& s, const ExogSeries* exog = nullptr) {
    out << kLoadCsvHeader << '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << format_iso8601(s.timestamps[i]) << ',' << fixed(s.load[i], 4);
        if (exog && i < exog->size()) {
            for (double v : channels(exog->samples[i])) out << ',' << fixed(v, 4);
        } else {
            out << ",,,,,";
        }
        out << '\n';
    }
}

inline void read_load_csv(std::istream& in, LoadSeries& s, ExogSeries& e) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("load csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kLoadCsvHeader) throw InputError("load csv: unexpected header '" + line + "'");
    s = LoadSeries{};
    e = ExogSeries{};
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (!line.empty() && line.back() == ',') cols.emplace_back();
        if (cols.size() != 7)
            throw InputError("load csv: row " + std::to_string(row) + " has " +
                             std::to_string(cols.size()) + " columns, expected 7");
        auto num = [&](const std::string& c) {
            try {
                std::size_t used = 0;
                const double v = std::stod(c, &used);
                if (used != c.size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                throw InputError("load csv: bad number '" + c + "' in row " + std::to_string(row));
            }
        };
        s.timestamps.push_back(parse_iso8601(cols[0]));
        s.load.push_back(num(cols[1]));
        WeatherSample w;
        if (!cols[2].empty()) {
            w.wind_mps = num(cols[2]);
            w.wind_deg = num(cols[3]);
            w.temp_c = num(cols[4]);
            w.rh_pct = num(cols[5]);
            w.ghi_wm2 = num(cols[6]);
        }
        e.samples.push_back(w);
    }
    // Traces are on the half-hour control grid.
    s.step_seconds = kHalfHourSeconds;
    validate(s);
    validate(e, s);
}

inline void read_load_csv(const std::string& path, LoadSeries& s, ExogSeries& e) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    read_load_csv(in, s, e);
}

} // namespace chiller
