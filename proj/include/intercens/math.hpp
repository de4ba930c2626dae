#pragma once

// Scalar numerics shared by the estimators: stable normal tails, log-space
// arithmetic and sample quantiles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace intercens::math {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

/// log Phi(x), accurate far into the lower tail.
inline double normal_log_cdf(double x) {
    if (x > -30.0) {
        return std::log(normal_cdf(x));
    }
    // Asymptotic series of the Mills ratio.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return normal_log_pdf(x) - std::log(-x) + std::log(series);
}

/// log(1 - Phi(x)).
inline double normal_log_sf(double x) { return normal_log_cdf(-x); }

inline double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

/// log(exp(a) - exp(b)) for a >= b.
inline double log_diff_exp(double a, double b) {
    if (b == -kInf) return a;
    if (a < b) return kNaN;
    if (a == b) return -kInf;
    return a + std::log(-std::expm1(b - a));
}

inline double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -kInf;
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

/// x / expm1(x), continuous at 0.
inline double x_over_expm1(double x) {
    if (x == 0.0) return 1.0;
    if (x == kInf) return 0.0;
    return x / std::expm1(x);
}

/// x / (1 - exp(-x)), continuous at 0.
inline double x_over_neg_expm1_neg(double x) {
    if (x == 0.0) return 1.0;
    return x / -std::expm1(-x);
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) return kNaN;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? kNaN : s / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

/// Trapezoidal integral of samples `y` on the abscissae `x`.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return acc;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = a;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

/// Linear interpolation of (xs, ys) at x; clamps outside the range.
inline double interpolate(std::span<const double> xs, std::span<const double> ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const auto j = static_cast<std::size_t>(it - xs.begin());
    const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ys[j - 1] + w * (ys[j] - ys[j - 1]);
}

}  // namespace intercens::math
