#pragma once

// Turnbull NPMLE of the survival function by EM self-consistency, with
// percentile bootstrap bands.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "intercens/core.hpp"
#include "intercens/math.hpp"
#include "intercens/parallel.hpp"
#include "intercens/random.hpp"

namespace intercens {

/// Half-width given to exact observations so they occupy an interval.
inline constexpr double kExactEpsilon = 1e-8;

/// Interval (lo, hi] that carries an observation's mass in the NPMLE.
inline std::pair<double, double> em_interval(const Observation& o) {
    switch (o.kind) {
        case CensorKind::Exact: return {std::max(0.0, o.left - kExactEpsilon), o.left};
        case CensorKind::LeftCensored: return {0.0, o.right};
        default: return {o.left, o.right};
    }
}

struct TurnbullSupport {
    /// Disjoint (lo, hi] intervals in ascending order.
    std::vector<std::pair<double, double>> intervals;
    /// Observation i owns intervals [first[i], last[i]). Containment in a
    /// sorted disjoint family is always a contiguous index range.
    std::vector<std::size_t> first;
    std::vector<std::size_t> last;

    std::size_t size() const { return intervals.size(); }
    std::size_t observations() const { return first.size(); }

    std::vector<std::size_t> membership(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t j = first[i]; j < last[i]; ++j) out.push_back(j);
        return out;
    }
};

/// Maximal-intersection intervals: (l, r] with l a left endpoint, r a right
/// endpoint and no endpoint strictly between them. Left endpoints are open
/// and right endpoints closed, so (s, t] and (t, u] never overlap.
inline TurnbullSupport turnbull_support(const std::vector<std::pair<double, double>>& bounds) {
    std::set<double> lefts, rights, ends;
    for (const auto& [l, r] : bounds) {
        lefts.insert(l);
        rights.insert(r);
        ends.insert(l);
        ends.insert(r);
    }
    TurnbullSupport s;
    for (double l : lefts) {
        const auto next = ends.upper_bound(l);
        if (next != ends.end() && rights.contains(*next)) s.intervals.emplace_back(l, *next);
    }
    if (s.intervals.empty()) throw InconsistentData("Turnbull support is empty");

    s.first.resize(bounds.size());
    s.last.resize(bounds.size());
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        const auto [li, ri] = bounds[i];
        const auto lo = std::lower_bound(s.intervals.begin(), s.intervals.end(), li,
                                         [](const auto& iv, double v) { return iv.first < v; });
        const auto hi = std::upper_bound(s.intervals.begin(), s.intervals.end(), ri,
                                         [](double v, const auto& iv) { return v < iv.second; });
        s.first[i] = static_cast<std::size_t>(lo - s.intervals.begin());
        s.last[i] = static_cast<std::size_t>(hi - s.intervals.begin());
        if (s.first[i] >= s.last[i]) {
            throw InconsistentData("observation " + std::to_string(i + 1) + " contains no support interval");
        }
    }
    return s;
}

inline TurnbullSupport turnbull_support(const Dataset& data) {
    std::vector<std::pair<double, double>> bounds;
    bounds.reserve(data.size());
    for (const auto& o : data.observations) bounds.push_back(em_interval(o));
    return turnbull_support(bounds);
}

using MassVector = std::vector<double>;

/// Log-likelihood sum_i log sum_{j in J_i} p_j.
inline double em_loglik(const MassVector& p, const TurnbullSupport& s) {
    double ll = 0.0;
    for (std::size_t i = 0; i < s.observations(); ++i) {
        double d = 0.0;
        for (std::size_t j = s.first[i]; j < s.last[i]; ++j) d += p[j];
        ll += std::log(d);
    }
    return ll;
}

/// One self-consistency update: w_ij = p_j / sum_{r in J_i} p_r, then
/// p'_j = mean_i w_ij.
inline MassVector em_step(const MassVector& p, const TurnbullSupport& s) {
    if (p.size() != s.size()) throw DomainError("mass vector length does not match the support");
    const std::size_t m = p.size();
    const std::size_t n = s.observations();
    // Accumulate 1/denominator over each observation's index range with a
    // difference array.
    std::vector<double> diff(m + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = s.first[i]; j < s.last[i]; ++j) d += p[j];
        if (!(d > 0.0)) throw DegenerateWeights("observation " + std::to_string(i + 1) + " has zero total mass");
        diff[s.first[i]] += 1.0 / d;
        diff[s.last[i]] -= 1.0 / d;
    }
    MassVector out(m);
    double run = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        run += diff[j];
        out[j] = p[j] * run / static_cast<double>(n);
    }
    return out;
}

struct EmOptions {
    double tol = 1e-8;
    std::size_t max_iter = 10000;
    /// Masses below this are set to zero after convergence.
    double truncate_below = 1e-12;
};

struct EmFit {
    TurnbullSupport support;
    MassVector masses;
    StepSurvival curve;
    std::vector<double> loglik_trace;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Step curve that places each interval's whole drop at its right endpoint.
inline StepSurvival npmle_curve(const TurnbullSupport& s, const MassVector& p) {
    std::vector<double> knots, values;
    double tail = 0.0;
    // Walk from the right so each value is a suffix sum.
    std::vector<std::pair<double, double>> rev;
    for (std::size_t j = s.size(); j-- > 0;) {
        const double hi = s.intervals[j].second;
        if (p[j] > 0.0 && std::isfinite(hi)) rev.emplace_back(hi, std::clamp(tail, 0.0, 1.0));
        tail += p[j];
    }
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
        knots.push_back(it->first);
        values.push_back(it->second);
    }
    return StepSurvival(std::move(knots), std::move(values));
}

inline EmFit fit_npmle(const Dataset& data, const EmOptions& opts = {}) {
    if (!(opts.tol > 0.0)) throw DomainError("EM tolerance must be positive");
    EmFit fit;
    fit.support = turnbull_support(data);
    const std::size_t m = fit.support.size();
    MassVector p(m, 1.0 / static_cast<double>(m));
    fit.loglik_trace.push_back(em_loglik(p, fit.support));
    for (std::size_t k = 0; k < opts.max_iter; ++k) {
        MassVector next = em_step(p, fit.support);
        double change = 0.0;
        for (std::size_t j = 0; j < m; ++j) change = std::max(change, std::abs(next[j] - p[j]));
        p = std::move(next);
        fit.iterations = k + 1;
        fit.loglik_trace.push_back(em_loglik(p, fit.support));
        if (change < opts.tol) {
            fit.converged = true;
            break;
        }
    }
    double total = 0.0;
    for (auto& v : p) {
        if (v < opts.truncate_below) v = 0.0;
        total += v;
    }
    for (auto& v : p) v /= total;
    fit.masses = std::move(p);
    fit.curve = npmle_curve(fit.support, fit.masses);
    return fit;
}

struct EmBand {
    std::vector<double> grid;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    double level = 0.95;
    std::size_t redraws = 0;
};

/// Largest finite endpoint in the data; the default right end of EM grids.
inline double max_finite_endpoint(const Dataset& data) {
    double t = 0.0;
    for (const auto& o : data.observations) {
        t = std::max(t, o.left);
        if (std::isfinite(o.right)) t = std::max(t, o.right);
    }
    return t;
}

/// Pointwise percentile bands from B nonparametric bootstrap refits. Each
/// replicate draws from its own stream derived from (seed, replicate).
inline EmBand bootstrap_bands(const Dataset& data, std::size_t B, double level, std::uint64_t seed,
                              std::vector<double> grid = {}, unsigned workers = 1, const EmOptions& opts = {}) {
    if (B < 100) throw DomainError("bootstrap needs at least 100 replicates");
    if (!(level > 0.0 && level < 1.0)) throw DomainError("band level must lie in (0, 1)");
    if (grid.empty()) grid = math::linspace(0.0, max_finite_endpoint(data), 200);

    constexpr int kMaxRedraws = 10;
    const std::size_t n = data.size();
    std::vector<std::vector<double>> curves(B);
    std::vector<std::size_t> redraws(B, 0);
    parallel_for(B, workers, [&](std::size_t b) {
        Rng rng = make_rng(seed, {b});
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (int attempt = 0;; ++attempt) {
            Dataset boot;
            boot.covariate_names = data.covariate_names;
            boot.observations.reserve(n);
            for (std::size_t i = 0; i < n; ++i) boot.observations.push_back(data.observations[pick(rng)]);
            try {
                const auto fit = fit_npmle(boot, opts);
                curves[b].resize(grid.size());
                for (std::size_t g = 0; g < grid.size(); ++g) curves[b][g] = fit.curve(grid[g]);
                return;
            } catch (const InconsistentData&) {
                if (attempt + 1 >= kMaxRedraws) throw;
                ++redraws[b];
            }
        }
    });

    EmBand band;
    band.grid = grid;
    band.level = level;
    const auto point = fit_npmle(data, opts);
    const double alpha = 1.0 - level;
    std::vector<double> column(B);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t b = 0; b < B; ++b) column[b] = curves[b][g];
        std::sort(column.begin(), column.end());
        band.estimate.push_back(point.curve(grid[g]));
        band.lower.push_back(math::quantile_sorted(column, alpha / 2));
        band.upper.push_back(math::quantile_sorted(column, 1 - alpha / 2));
    }
    for (auto r : redraws) band.redraws += r;
    return band;
}

}  // namespace intercens
