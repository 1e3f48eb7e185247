#pragma once

// Building-load forecasters behind one contract: a history window of load and
// weather in, a non-negative load trajectory over the horizon out.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "chiller/errors.hpp"
#include "chiller/timeseries.hpp"

namespace chiller {

inline constexpr std::size_t kDefaultWindow = 336; // 7 days of half-hours
inline constexpr std::size_t kDefaultHorizon = 48; // 24 hours

struct ForecastRequest {
    std::span<const double> load_history;       // oldest first; back() is the latest observation
    std::span<const WeatherSample> exog_history; // aligned with load_history
    // Weather covariates for the horizon steps; may be empty.
    std::span<const WeatherSample> exog_future;
    std::int64_t issue_time = 0; // timestamp of the first predicted step
    int step_seconds = kHalfHourSeconds;
    std::size_t horizon = kDefaultHorizon;
};

struct Forecast {
    std::vector<double> load; // kW, one entry per horizon step
    std::string model_id;
    std::int64_t issue_time = 0;
};

/// Builds a request whose first predicted step is `issue_index` of the series.
inline ForecastRequest make_request(const LoadSeries& s, const ExogSeries& e, std::size_t issue_index,
                                    std::size_t window = kDefaultWindow,
                                    std::size_t horizon = kDefaultHorizon) {
    if (issue_index > s.size()) throw ContractError("make_request: issue index past series end");
    const std::size_t w = std::min(window, issue_index);
    ForecastRequest r;
    r.load_history = std::span<const double>(s.load).subspan(issue_index - w, w);
    if (e.size() == s.size()) {
        r.exog_history = std::span<const WeatherSample>(e.samples).subspan(issue_index - w, w);
        const std::size_t fut = std::min(horizon, e.size() - issue_index);
        r.exog_future = std::span<const WeatherSample>(e.samples).subspan(issue_index, fut);
    }
    r.issue_time = issue_index < s.size()
                       ? s.timestamps[issue_index]
                       : (s.timestamps.empty() ? 0 : s.timestamps.back() + s.step_seconds);
    r.step_seconds = s.step_seconds;
    r.horizon = horizon;
    return r;
}

class Forecaster {
public:
    virtual ~Forecaster() = default;
    [[nodiscard]] virtual std::string_view id() const noexcept = 0;
    /// Shortest history window the model can work from.
    [[nodiscard]] virtual std::size_t min_history() const noexcept = 0;
    [[nodiscard]] virtual Forecast forecast(const ForecastRequest& req) const = 0;
};

namespace detail {
inline void clamp_nonnegative(std::vector<double>& v) {
    for (auto& x : v) x = std::max(0.0, x);
}
} // namespace detail

inline Forecast persistence_forecast(const ForecastRequest& req) {
    if (req.load_history.empty()) throw InputError("persistence_forecast: empty history window");
    Forecast f;
    f.model_id = "persistence";
    f.issue_time = req.issue_time;
    f.load.assign(req.horizon, req.load_history.back());
    detail::clamp_nonnegative(f.load);
    return f;
}

inline Forecast seasonal_naive_forecast(const ForecastRequest& req, std::size_t period = 48) {
    if (period == 0) throw InputError("seasonal_naive_forecast: period must be positive");
    const auto& y = req.load_history;
    if (y.size() < period)
        throw InputError("seasonal_naive_forecast: window shorter than the seasonal period");
    Forecast f;
    f.model_id = "seasonal_naive";
    f.issue_time = req.issue_time;
    f.load.resize(req.horizon);
    const std::size_t n = y.size();
    for (std::size_t h = 0; h < req.horizon; ++h) f.load[h] = y[n - period + (h % period)];
    detail::clamp_nonnegative(f.load);
    return f;
}

// ---------------------------------------------------------------------------
// Direct multi-step ridge regression on lags, weather and hour of day.

struct LagFeatureLayout {
    std::vector<std::size_t> lags{1, 2, 48, 336};
    std::size_t exog_channels = kExogChannels;
    std::size_t hour_slots = 24;
    std::size_t window = kDefaultWindow;
    std::size_t horizon = kDefaultHorizon;

    [[nodiscard]] std::size_t continuous() const noexcept { return lags.size() + exog_channels; }
    // bias + continuous + one-hot
    [[nodiscard]] std::size_t width() const noexcept { return 1 + continuous() + hour_slots; }
    [[nodiscard]] std::size_t max_lag() const noexcept {
        return lags.empty() ? 1 : *std::max_element(lags.begin(), lags.end());
    }

    bool operator==(const LagFeatureLayout&) const = default;
};

struct LagRegressionModel {
    LagFeatureLayout layout;
    std::vector<double> feature_mean;  // continuous features only
    std::vector<double> feature_scale;
    std::vector<std::vector<double>> weights; // [horizon][width]
    double ridge = 1.0;
};

namespace detail {

/// Lags 1 and 2 look back from the issue time; seasonal lags align with the target step.
inline void lag_features(const LagFeatureLayout& layout, std::span<const double> y,
                         std::span<const WeatherSample> exog_hist, std::span<const WeatherSample> exog_fut,
                         std::int64_t issue_time, int step_seconds, std::size_t h, std::span<double> out) {
    const std::size_t n = y.size();
    std::size_t col = 0;
    out[col++] = 1.0;
    for (std::size_t lag : layout.lags) {
        double v;
        if (lag <= 2) {
            v = y[n - lag];
        } else {
            const std::size_t shift = h % lag;
            v = y[n - lag + shift];
        }
        out[col++] = v;
    }
    WeatherSample w{};
    if (h < exog_fut.size())
        w = exog_fut[h];
    else if (!exog_fut.empty())
        w = exog_fut.back();
    else if (!exog_hist.empty())
        w = exog_hist.back();
    const auto ch = channels(w);
    for (std::size_t k = 0; k < layout.exog_channels; ++k) out[col++] = ch[k];
    const std::int64_t t = issue_time + static_cast<std::int64_t>(h) * step_seconds;
    const auto slot = static_cast<std::size_t>(hour_of_day(t) * layout.hour_slots / 24.0);
    for (std::size_t k = 0; k < layout.hour_slots; ++k) out[col++] = k == slot ? 1.0 : 0.0;
}

} // namespace detail

struct LagRegressionOptions {
    LagFeatureLayout layout{};
    double ridge = 1.0;
};

inline LagRegressionModel fit_lag_regression(const LoadSeries& s, const ExogSeries& e,
                                             const LagRegressionOptions& opt = {}) {
    validate(s);
    validate(e, s);
    const auto& L = opt.layout;
    if (L.window < L.max_lag()) throw ConfigError("lag regression: window shorter than the largest lag");
    if (L.exog_channels > kExogChannels) throw ConfigError("lag regression: too many exogenous channels");
    if (s.size() < L.window + L.horizon + 1)
        throw InputError("lag regression: training series too short");

    const std::size_t width = L.width();
    const std::size_t ncont = L.continuous();
    const std::size_t first = L.window, last = s.size() - L.horizon; // issue indices [first, last]

    LagRegressionModel model;
    model.layout = L;
    model.ridge = opt.ridge;
    model.feature_mean.assign(ncont, 0.0);
    model.feature_scale.assign(ncont, 0.0);

    // Standardisation statistics over all (issue, horizon) rows.
    std::vector<double> row(width);
    double count = 0.0;
    for (std::size_t issue = first; issue <= last; ++issue) {
        const auto req = make_request(s, e, issue, L.window, L.horizon);
        for (std::size_t h = 0; h < L.horizon; ++h) {
            detail::lag_features(L, req.load_history, req.exog_history, req.exog_future, req.issue_time,
                                 req.step_seconds, h, row);
            for (std::size_t k = 0; k < ncont; ++k) {
                model.feature_mean[k] += row[1 + k];
                model.feature_scale[k] += row[1 + k] * row[1 + k];
            }
            count += 1.0;
        }
    }
    for (std::size_t k = 0; k < ncont; ++k) {
        const double mean = model.feature_mean[k] / count;
        const double var = std::max(0.0, model.feature_scale[k] / count - mean * mean);
        model.feature_mean[k] = mean;
        model.feature_scale[k] = var > 1e-18 ? std::sqrt(var) : 1.0;
    }

    const auto w = static_cast<Eigen::Index>(width);
    model.weights.resize(L.horizon);
    for (std::size_t h = 0; h < L.horizon; ++h) {
        Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(w, w);
        Eigen::VectorXd xty = Eigen::VectorXd::Zero(w);
        Eigen::VectorXd x(w);
        for (std::size_t issue = first; issue <= last; ++issue) {
            const auto req = make_request(s, e, issue, L.window, L.horizon);
            detail::lag_features(L, req.load_history, req.exog_history, req.exog_future, req.issue_time,
                                 req.step_seconds, h, row);
            for (std::size_t k = 0; k < ncont; ++k)
                row[1 + k] = (row[1 + k] - model.feature_mean[k]) / model.feature_scale[k];
            for (Eigen::Index k = 0; k < w; ++k) x(k) = row[static_cast<std::size_t>(k)];
            xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
            xty += x * s.load[issue + h];
        }
        Eigen::MatrixXd a = xtx.selfadjointView<Eigen::Lower>();
        for (Eigen::Index k = 1; k < w; ++k) a(k, k) += opt.ridge; // bias is not penalised
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() != Eigen::Success) throw NumericError("lag regression: normal equations failed");
        const Eigen::VectorXd beta = ldlt.solve(xty);
        model.weights[h].assign(beta.data(), beta.data() + w);
    }
    return model;
}

inline Forecast lag_regression_forecast(const ForecastRequest& req, const LagRegressionModel& model) {
    const auto& L = model.layout;
    if (model.weights.size() != L.horizon || model.feature_mean.size() != L.continuous() ||
        model.feature_scale.size() != L.continuous())
        throw ContractError("lag regression: model does not match its feature layout");
    for (const auto& wrow : model.weights)
        if (wrow.size() != L.width()) throw ContractError("lag regression: weight row has wrong width");
    if (req.load_history.size() < L.max_lag())
        throw ContractError("lag regression: history window shorter than the feature layout requires");
    if (req.horizon > L.horizon)
        throw ContractError("lag regression: requested horizon exceeds the fitted horizon");
    if (!req.exog_history.empty() && req.exog_history.size() != req.load_history.size())
        throw ContractError("lag regression: exogenous history not aligned with load history");

    Forecast f;
    f.model_id = "lag_regression";
    f.issue_time = req.issue_time;
    f.load.resize(req.horizon);
    std::vector<double> row(L.width());
    for (std::size_t h = 0; h < req.horizon; ++h) {
        detail::lag_features(L, req.load_history, req.exog_history, req.exog_future, req.issue_time,
                             req.step_seconds, h, row);
        double acc = 0.0;
        const auto& wrow = model.weights[h];
        for (std::size_t k = 0; k < row.size(); ++k) {
            double v = row[k];
            if (k >= 1 && k <= L.continuous())
                v = (v - model.feature_mean[k - 1]) / model.feature_scale[k - 1];
            acc += wrow[k] * v;
        }
        f.load[h] = acc;
    }
    detail::clamp_nonnegative(f.load);
    return f;
}

// ---------------------------------------------------------------------------
// Contract implementations

class PersistenceForecaster final : public Forecaster {
public:
    [[nodiscard]] std::string_view id() const noexcept override { return "persistence"; }
    [[nodiscard]] std::size_t min_history() const noexcept override { return 1; }
    [[nodiscard]] Forecast forecast(const ForecastRequest& req) const override {
        return persistence_forecast(req);
    }
};

class SeasonalNaiveForecaster final : public Forecaster {
public:
    explicit SeasonalNaiveForecaster(std::size_t period = 48) : period_(period) {}
    [[nodiscard]] std::string_view id() const noexcept override { return "seasonal_naive"; }
    [[nodiscard]] std::size_t min_history() const noexcept override { return period_; }
    [[nodiscard]] Forecast forecast(const ForecastRequest& req) const override {
        return seasonal_naive_forecast(req, period_);
    }

private:
    std::size_t period_;
};

class LagRegressionForecaster final : public Forecaster {
public:
    explicit LagRegressionForecaster(LagRegressionModel model) : model_(std::move(model)) {}
    [[nodiscard]] std::string_view id() const noexcept override { return "lag_regression"; }
    [[nodiscard]] std::size_t min_history() const noexcept override { return model_.layout.max_lag(); }
    [[nodiscard]] Forecast forecast(const ForecastRequest& req) const override {
        return lag_regression_forecast(req, model_);
    }
    [[nodiscard]] const LagRegressionModel& model() const noexcept { return model_; }

private:
    LagRegressionModel model_;
};

// ---------------------------------------------------------------------------

/// Mean absolute error normalised by the mean absolute actual value.
inline double nmae(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size() || actual.empty())
        throw InputError("nmae: inputs must have equal non-zero length");
    double err = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        err += std::abs(predicted[i] - actual[i]);
        mag += std::abs(actual[i]);
    }
    if (!(mag > 0.0)) throw InputError("nmae: mean absolute actual is zero; normalisation undefined");
    return err / mag;
}

/// NMAE of a forecaster over every issue time in [first, last) with a full horizon ahead.
inline double rolling_nmae(const Forecaster& model, const LoadSeries& s, const ExogSeries& e,
                           std::size_t first, std::size_t last, std::size_t stride = 1,
                           std::size_t window = kDefaultWindow, std::size_t horizon = kDefaultHorizon) {
    std::vector<double> pred, act;
    for (std::size_t issue = first; issue < last && issue + horizon <= s.size(); issue += stride) {
        const auto f = model.forecast(make_request(s, e, issue, window, horizon));
        pred.insert(pred.end(), f.load.begin(), f.load.end());
        act.insert(act.end(), s.load.begin() + static_cast<std::ptrdiff_t>(issue),
                   s.load.begin() + static_cast<std::ptrdiff_t>(issue + horizon));
    }
    return nmae(pred, act);
}

inline void write_forecast_csv(std::ostream& out, const Forecast& f, int step_seconds,
                               std::span<const WeatherSample> exog_future = {}) {
    out << kLoadCsvHeader << '\n';
    for (std::size_t h = 0; h < f.load.size(); ++h) {
        out << format_iso8601(f.issue_time + static_cast<std::int64_t>(h) * step_seconds) << ','
            << fixed(f.load[h], 4);
        if (h < exog_future.size())
            for (double v : channels(exog_future[h])) out << ',' << fixed(v, 4);
        else
            out << ",,,,,";
        out << '\n';
    }
}

} // namespace chiller
