#pragma once

// Split R-hat and bulk/tail effective sample size on rank-normalized draws.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "intercens/errors.hpp"
#include "intercens/math.hpp"

namespace intercens {

/// chains[c][t] draws of one scalar.
using ChainMatrix = std::vector<std::vector<double>>;

struct ParameterDiagnostics {
    double rhat = 1.0;
    double ess_bulk = 0.0;
    double ess_tail = 0.0;
    /// Set when a statistic was undefined (zero variance) and a sentinel was reported.
    bool degenerate = false;
};

namespace detail {

inline ChainMatrix split_chains(const ChainMatrix& chains) {
    ChainMatrix out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

/// Normal scores of pooled average ranks, (r - 3/8) / (S + 1/4).
inline ChainMatrix rank_normalize(const ChainMatrix& chains) {
    std::vector<std::pair<double, std::size_t>> all;
    for (const auto& c : chains) {
        for (double v : c) all.emplace_back(v, all.size());
    }
    std::sort(all.begin(), all.end());
    const double s = static_cast<double>(all.size());
    std::vector<double> z(all.size());
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) z[all[k].second] = math::normal_quantile((rank - 0.375) / (s + 0.25));
        i = j;
    }
    ChainMatrix out;
    std::size_t idx = 0;
    for (const auto& c : chains) {
        out.emplace_back(z.begin() + static_cast<std::ptrdiff_t>(idx), z.begin() + static_cast<std::ptrdiff_t>(idx + c.size()));
        idx += c.size();
    }
    return out;
}

inline double rhat_plain(const ChainMatrix& chains) {
    const double n = static_cast<double>(chains.front().size());
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        means.push_back(math::mean(c));
        vars.push_back(math::variance(c));
    }
    const double b = n * math::variance(means);
    const double w = math::mean(vars);
    if (!(w > 0.0)) return b > 0.0 ? math::kInf : math::kNaN;
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

/// Geyer initial monotone sequence estimator over the multi-chain
/// autocorrelation.
inline double ess_plain(const ChainMatrix& chains) {
    const std::size_t m = chains.size();
    const std::size_t n = chains.front().size();
    std::vector<double> means(m), vars(m);
    std::vector<std::vector<double>> acov(m, std::vector<double>(n, 0.0));
    for (std::size_t c = 0; c < m; ++c) {
        means[c] = math::mean(chains[c]);
        std::vector<double> d(n);
        for (std::size_t t = 0; t < n; ++t) d[t] = chains[c][t] - means[c];
        for (std::size_t lag = 0; lag < n; ++lag) {
            double s = 0.0;
            for (std::size_t t = 0; t + lag < n; ++t) s += d[t] * d[t + lag];
            acov[c][lag] = s / static_cast<double>(n);
        }
        vars[c] = acov[c][0] * static_cast<double>(n) / (static_cast<double>(n) - 1.0);
    }
    const double w = math::mean(vars);
    const double b_over_n = m > 1 ? math::variance(means) : 0.0;
    const double var_plus = w * (static_cast<double>(n) - 1.0) / static_cast<double>(n) + b_over_n;
    if (!(var_plus > 0.0)) return math::kNaN;

    auto rho = [&](std::size_t lag) {
        double a = 0.0;
        for (std::size_t c = 0; c < m; ++c) a += acov[c][lag];
        a /= static_cast<double>(m);
        return 1.0 - (w - a) / var_plus;
    };
    std::vector<double> r(n, 0.0);
    r[0] = 1.0;
    if (n > 1) r[1] = rho(1);
    std::size_t t = 1;
    while (t + 2 < n) {
        r[t + 1] = rho(t + 1);
        r[t + 2] = rho(t + 2);
        if (r[t + 1] + r[t + 2] < 0.0) break;
        t += 2;
    }
    const std::size_t max_t = t;
    // Initial positive then monotone sequence of paired sums.
    for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
        const double prev = r[k - 1] + r[k];
        if (r[k + 1] + r[k + 2] > prev) {
            r[k + 1] = prev / 2.0;
            r[k + 2] = prev / 2.0;
        }
    }
    double tau = -1.0;
    for (std::size_t k = 0; k <= max_t && k < n; ++k) tau += 2.0 * r[k];
    if (max_t + 1 < n) tau += r[max_t + 1];
    const double total = static_cast<double>(m * n);
    tau = std::max(tau, 1.0 / std::log10(total));
    return total / tau;
}

inline ChainMatrix fold(const ChainMatrix& chains) {
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    const double med = math::quantile(pooled, 0.5);
    ChainMatrix out = chains;
    for (auto& c : out) {
        for (auto& v : c) v = std::abs(v - med);
    }
    return out;
}

inline ChainMatrix indicator(const ChainMatrix& chains, double cut, bool below) {
    ChainMatrix out = chains;
    for (auto& c : out) {
        for (auto& v : c) v = (below ? v <= cut : v > cut) ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace detail

/// Split R-hat (max of bulk and folded), bulk ESS, and tail ESS (min over the
/// 5% and 95% quantile indicators). Needs at least 2 chains of length 4.
inline ParameterDiagnostics chain_diagnostics(const ChainMatrix& chains) {
    if (chains.size() < 2) throw DomainError("diagnostics need at least two chains");
    const std::size_t n = chains.front().size();
    for (const auto& c : chains) {
        if (c.size() != n) throw DomainError("chains differ in length");
    }
    if (n < 4) throw DomainError("chains are too short for diagnostics");
    const double total = static_cast<double>(chains.size() * n);

    ParameterDiagnostics d;
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
    if (*lo == *hi) {
        d.rhat = 1.0;
        d.ess_bulk = 1.0;
        d.ess_tail = 1.0;
        d.degenerate = true;
        return d;
    }

    const auto split = detail::split_chains(chains);
    bool constant_within = true;
    for (const auto& c : split) {
        if (math::variance(c) > 0.0) constant_within = false;
    }
    if (constant_within) {
        // Chains stuck at distinct constants.
        d.rhat = math::kInf;
        d.ess_bulk = 1.0;
        d.ess_tail = 1.0;
        d.degenerate = true;
        return d;
    }

    const auto z = detail::rank_normalize(split);
    const auto zf = detail::rank_normalize(detail::fold(split));
    d.rhat = std::max(detail::rhat_plain(z), detail::rhat_plain(zf));
    d.ess_bulk = detail::ess_plain(z);

    const double q05 = math::quantile(pooled, 0.05);
    const double q95 = math::quantile(pooled, 0.95);
    const double e1 = detail::ess_plain(detail::indicator(split, q05, true));
    const double e2 = detail::ess_plain(detail::indicator(split, q95, false));
    d.ess_tail = std::min(e1, e2);
    for (double* e : {&d.ess_bulk, &d.ess_tail}) {
        if (!std::isfinite(*e)) {
            *e = 1.0;
            d.degenerate = true;
        }
        *e = std::clamp(*e, 1.0, total);
    }
    if (!std::isfinite(d.rhat)) {
        if (std::isnan(d.rhat)) d.rhat = 1.0;
        d.degenerate = true;
    }
    return d;
}

}  // namespace intercens
