#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chiller/errors.hpp"

namespace chiller {

struct CurveSample {
    double plr = 0.0;
    double power = 0.0; // kW
};

struct CurveFit {
    std::array<double, 4> coeffs{}; // alpha, beta, gamma, psi
    double r_squared = 0.0;
    std::size_t samples = 0;
    // At least 8 samples covering PLR 0.3..0.9; a fit outside that regime is still
    // returned but extrapolates poorly.
    bool well_sampled = false;
};

/// Least-squares cubic power curve. Needs four distinct PLR values.
inline CurveFit fit_power_curve(std::span<const CurveSample> samples) {
    if (samples.size() < 4)
        throw NumericError("fit_power_curve: need at least 4 samples, got " +
                           std::to_string(samples.size()));
    std::set<double> distinct;
    double lo = samples.front().plr, hi = lo;
    for (const auto& s : samples) {
        if (!std::isfinite(s.plr) || !std::isfinite(s.power) || s.plr < 0.0)
            throw InputError("fit_power_curve: samples must be finite with plr >= 0");
        distinct.insert(s.plr);
        lo = std::min(lo, s.plr);
        hi = std::max(hi, s.plr);
    }
    if (distinct.size() < 4)
        throw NumericError("fit_power_curve: rank-deficient design (fewer than 4 distinct PLR values)");

    const auto m = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd design(m, 4);
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const double p = samples[static_cast<std::size_t>(r)].plr;
        design(r, 0) = 1.0;
        design(r, 1) = p;
        design(r, 2) = p * p;
        design(r, 3) = p * p * p;
        y(r) = samples[static_cast<std::size_t>(r)].power;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 4) throw NumericError("fit_power_curve: rank-deficient design");
    const Eigen::VectorXd beta = qr.solve(y);

    CurveFit fit;
    for (int k = 0; k < 4; ++k) fit.coeffs[static_cast<std::size_t>(k)] = beta(k);
    fit.samples = samples.size();
    fit.well_sampled = samples.size() >= 8 && lo <= 0.3 && hi >= 0.9;

    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (y - design * beta).squaredNorm();
    // Residuals at round-off level count as an exact fit.
    const double scale = std::max(1.0, y.squaredNorm());
    if (ss_res <= 1e-20 * scale)
        fit.r_squared = 1.0;
    else if (ss_tot > 0.0)
        fit.r_squared = 1.0 - ss_res / ss_tot;
    else
        fit.r_squared = -std::numeric_limits<double>::infinity();
    return fit;
}

} // namespace chiller
