#pragma once

// Curve-recovery and predictive metrics for simulation studies: ISE, Brier
// score and its time integral against known event times, the Kaplan-Meier
// benchmark on pseudo right-censored data, and band coverage.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "intercens/bayes.hpp"
#include "intercens/core.hpp"
#include "intercens/math.hpp"

namespace intercens {

inline constexpr std::size_t kDefaultGridPoints = 512;

struct IseValue {
    double raw = 0.0;
    double normalized = 0.0;  // raw / t_max
};

/// Trapezoidal integral of (est - truth)^2 over [0, t_max].
template <class Est, class Truth>
IseValue ise(Est&& est, Truth&& truth, double t_max, std::size_t grid_points = kDefaultGridPoints) {
    if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
    if (grid_points < 2) throw DomainError("need at least two grid points");
    const auto grid = math::linspace(0.0, t_max, grid_points);
    std::vector<double> sq(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double d = est(grid[g]) - truth(grid[g]);
        sq[g] = d * d;
    }
    const double raw = math::trapezoid(grid, sq);
    return {raw, raw / t_max};
}

/// mean_i (1{T_i > t} - pred_i)^2.
inline double brier_score(const std::vector<double>& pred, const std::vector<double>& truths, double t) {
    if (pred.size() != truths.size() || pred.empty()) throw DomainError("predictions and truths differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = (truths[i] > t ? 1.0 : 0.0) - pred[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

/// (1 / t_max) * integral of the Brier score over [0, t_max]; pred(i, t) is
/// subject i's predicted survival at t.
template <class Pred>
double ibs(Pred&& pred, const std::vector<double>& truths, double t_max, std::size_t grid_points = kDefaultGridPoints) {
    if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
    const auto grid = math::linspace(0.0, t_max, grid_points);
    std::vector<double> bs(grid.size()), p(truths.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t i = 0; i < truths.size(); ++i) p[i] = pred(i, grid[g]);
        bs[g] = brier_score(p, truths, grid[g]);
    }
    return math::trapezoid(grid, bs) / t_max;
}

/// Product-limit estimate from (time, event) pairs. Censored times tied with
/// event times stay in the risk set at that time.
inline StepSurvival kaplan_meier(std::vector<std::pair<double, bool>> pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && a.second && !b.second);
    });
    std::vector<double> knots, values;
    double s = 1.0;
    std::size_t at_risk = pairs.size();
    for (std::size_t i = 0; i < pairs.size();) {
        const double t = pairs[i].first;
        std::size_t deaths = 0, total = 0;
        while (i < pairs.size() && pairs[i].first == t) {
            deaths += pairs[i].second;
            ++total;
            ++i;
        }
        if (deaths > 0) {
            s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            knots.push_back(t);
            values.push_back(std::max(0.0, s));
        }
        at_risk -= total;
    }
    return StepSurvival(std::move(knots), std::move(values));
}

/// Kaplan-Meier after collapsing each observation to a right-censored pair:
/// interval and left-censored rows become events at R, right-censored rows
/// are censored at L, exact rows are events at t.
inline StepSurvival km_pseudo_right(const Dataset& data) {
    std::vector<std::pair<double, bool>> pairs;
    pairs.reserve(data.size());
    for (const auto& o : data.observations) {
        switch (o.kind) {
            case CensorKind::Interval:
            case CensorKind::LeftCensored: pairs.emplace_back(o.right, true); break;
            case CensorKind::RightCensored: pairs.emplace_back(o.left, false); break;
            case CensorKind::Exact: pairs.emplace_back(o.left, true); break;
        }
    }
    return kaplan_meier(std::move(pairs));
}

struct CoverageValue {
    double pointwise = 0.0;
    double simultaneous = 0.0;
};

/// Fraction of (replicate, grid point) pairs whose band holds the truth, and
/// the fraction of replicates whose band holds it at every grid point.
template <class Truth>
CoverageValue empirical_coverage(const std::vector<SurvivalBand>& bands, Truth&& truth) {
    if (bands.size() < 50) throw DomainError("coverage needs at least 50 replicates");
    double hits = 0.0, points = 0.0, whole = 0.0;
    for (const auto& b : bands) {
        bool all = true;
        for (std::size_t g = 0; g < b.grid.size(); ++g) {
            const double s = truth(b.grid[g]);
            const bool in = b.lower[g] <= s && s <= b.upper[g];
            hits += in;
            points += 1.0;
            all = all && in;
        }
        whole += all;
    }
    return {points > 0.0 ? hits / points : 0.0, whole / static_cast<double>(bands.size())};
}

struct MetricReport {
    std::string scenario;
    std::string estimator;
    std::optional<double> ise;
    std::optional<double> ibs;
    std::optional<double> coverage_pointwise;
    std::optional<double> coverage_simultaneous;
    std::size_t replicates = 0;
};

}  // namespace intercens
