#include <gtest/gtest.h>

#include <random>

#include "chiller/curve_fit.hpp"
#include "chiller/plant.hpp"

using namespace chiller;

namespace {

std::vector<CurveSample> sample_curve(const ChillerSpec& c, std::size_t n, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<CurveSample> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = 0.2 + 0.8 * static_cast<double>(k) / static_cast<double>(n - 1);
        out.push_back({x, power_from_plr(c, x) + sigma * noise(rng)});
    }
    return out;
}

} // namespace

TEST(CurveFit, NoiselessRecoveryAllRows) {
    for (const auto& c : canonical_plant().chillers) {
        const auto fit = fit_power_curve(sample_curve(c, 20, 0.0, 1));
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(fit.coeffs[k], c.power_coeffs[k], 1e-6) << "chiller " << c.id;
        EXPECT_EQ(fit.r_squared, 1.0);
        EXPECT_TRUE(fit.well_sampled);
    }
}

TEST(CurveFit, NoisyRowOne) {
    const auto c = canonical_plant().chillers[0];
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto fit = fit_power_curve(sample_curve(c, 20, 10.0, 100 + seed));
        EXPECT_LE(fit.r_squared, 1.0);
        sum += fit.r_squared;
    }
    EXPECT_GE(sum / 20.0, 0.90);
}

TEST(CurveFit, FourPointsInterpolate) {
    const auto c = canonical_plant().chillers[2];
    std::vector<CurveSample> s;
    for (double x : {0.1, 0.4, 0.7, 1.0}) s.push_back({x, power_from_plr(c, x)});
    const auto fit = fit_power_curve(s);
    EXPECT_EQ(fit.r_squared, 1.0);
    EXPECT_FALSE(fit.well_sampled);
    for (double x : {0.1, 0.4, 0.7, 1.0}) {
        const auto& a = fit.coeffs;
        EXPECT_NEAR(a[0] + a[1] * x + a[2] * x * x + a[3] * x * x * x, power_from_plr(c, x), 1e-8);
    }
}

TEST(CurveFit, RankDeficient) {
    std::vector<CurveSample> same(10, CurveSample{0.5, 100.0});
    EXPECT_THROW(fit_power_curve(same), NumericError);
    std::vector<CurveSample> three{{0.1, 1}, {0.2, 2}, {0.3, 3}};
    EXPECT_THROW(fit_power_curve(three), NumericError);
}

TEST(CurveFit, BadSamples) {
    std::vector<CurveSample> s{{0.1, 1}, {0.2, 2}, {0.3, 3}, {-0.4, 4}};
    EXPECT_THROW(fit_power_curve(s), InputError);
}
