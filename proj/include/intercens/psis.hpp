#pragma once

// Pareto-smoothed importance sampling leave-one-out cross-validation.
// Tail size, the generalized Pareto fit and truncation follow the loo
// package conventions with relative efficiency 1.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "intercens/aft.hpp"
#include "intercens/bayes.hpp"
#include "intercens/errors.hpp"
#include "intercens/math.hpp"
#include "intercens/parallel.hpp"

namespace intercens {

/// Pareto k above which importance-sampling estimates are unreliable.
inline constexpr double kParetoKThreshold = 0.7;

struct GpdFit {
    double k = 0.0;
    double sigma = 1.0;
    /// Fewer than five distinct values; the estimate is weakly determined.
    bool low_confidence = false;
    /// All values equal; k is reported as -infinity.
    bool degenerate = false;
};

/// Zhang-Stephens empirical Bayes estimate of the generalized Pareto
/// parameters (threshold 0) with the weakly informative shrinkage of k
/// toward 0.5.
inline GpdFit fit_generalized_pareto(std::vector<double> x) {
    if (x.size() < 5) throw DomainError("generalized Pareto fit needs at least 5 tail samples");
    std::sort(x.begin(), x.end());
    GpdFit fit;
    if (x.front() == x.back()) {
        fit.k = -kInfinity;
        fit.sigma = 0.0;
        fit.degenerate = true;
        fit.low_confidence = true;
        return fit;
    }
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < x.size(); ++i) distinct += x[i] != x[i - 1];
    fit.low_confidence = distinct < 5;

    const auto n = x.size();
    const double nd = static_cast<double>(n);
    constexpr double prior = 3.0;
    const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(nd)));
    const double xstar = x[static_cast<std::size_t>(std::floor(nd / 4.0 + 0.5)) - 1];
    std::vector<double> theta(m), ltheta(m);
    for (std::size_t j = 0; j < m; ++j) {
        theta[j] = 1.0 / x[n - 1] + (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) / prior / xstar;
        double kk = 0.0;
        for (double v : x) kk += std::log1p(-theta[j] * v);
        kk /= nd;
        ltheta[j] = nd * (std::log(-theta[j] / kk) - kk - 1.0);
    }
    const double lse = math::log_sum_exp(ltheta);
    double theta_hat = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double w = std::exp(ltheta[j] - lse);
        if (std::isfinite(w)) theta_hat += theta[j] * w;
    }
    double k = 0.0;
    for (double v : x) k += std::log1p(-theta_hat * v);
    k /= nd;
    fit.sigma = -k / theta_hat;
    fit.k = k * nd / (nd + 10.0) + 10.0 * 0.5 / (nd + 10.0);
    if (std::isnan(fit.k)) fit.k = kInfinity;
    return fit;
}

/// Quantile function of the generalized Pareto distribution with threshold 0.
inline double gpd_quantile(double p, double k, double sigma) {
    if (k == 0.0) return -sigma * std::log1p(-p);
    return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

struct PsisResult {
    std::vector<double> log_weights;  // normalized: log-sum-exp = 0
    double k = 0.0;
    bool unreliable = false;
};

inline PsisResult psis_smooth(const std::vector<double>& log_ratios) {
    const std::size_t s = log_ratios.size();
    if (s < 100) throw DomainError("PSIS needs at least 100 draws");
    const double mx = *std::max_element(log_ratios.begin(), log_ratios.end());
    std::vector<double> lw(s);
    for (std::size_t i = 0; i < s; ++i) lw[i] = log_ratios[i] - mx;

    const double sd = static_cast<double>(s);
    const auto tail_len = static_cast<std::size_t>(std::ceil(std::min(0.2 * sd, 3.0 * std::sqrt(sd))));
    std::vector<std::size_t> order(s);
    for (std::size_t i = 0; i < s; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
    const double cutoff = lw[order[s - tail_len - 1]];

    PsisResult r;
    std::vector<double> tail;
    for (std::size_t k = s - tail_len; k < s; ++k) tail.push_back(std::exp(lw[order[k]]) - std::exp(cutoff));
    if (tail.back() <= 0.0) {
        r.k = -kInfinity;  // no tail above the cutoff
    } else {
        const auto fit = fit_generalized_pareto(tail);
        r.k = fit.k;
        if (std::isfinite(fit.k)) {
            for (std::size_t k = 0; k < tail_len; ++k) {
                const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(tail_len);
                lw[order[s - tail_len + k]] = std::log(gpd_quantile(p, fit.k, fit.sigma) + std::exp(cutoff));
            }
        }
    }
    // Truncate at the largest raw ratio, which is 0 after the shift.
    for (auto& v : lw) v = std::min(v, 0.0);
    const double lse = math::log_sum_exp(lw);
    for (auto& v : lw) v -= lse;
    r.log_weights = std::move(lw);
    r.unreliable = r.k > kParetoKThreshold;
    return r;
}

/// S draws x n observations of per-observation log-likelihood.
struct LogLikMatrix {
    Eigen::MatrixXd values;
    /// Observations with zero mass under every draw; left out of the ELPD.
    std::vector<std::size_t> excluded_observations;
    /// Draws with zero mass for some remaining observation; left out of the ELPD.
    std::vector<std::size_t> excluded_draws;
};

inline LogLikMatrix make_loglik_matrix(Eigen::MatrixXd values) {
    LogLikMatrix m;
    const auto s = values.rows();
    const auto n = values.cols();
    std::vector<bool> bad_col(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!values.col(i).array().isFinite().any()) {
            bad_col[static_cast<std::size_t>(i)] = true;
            m.excluded_observations.push_back(static_cast<std::size_t>(i));
        }
    }
    for (Eigen::Index r = 0; r < s; ++r) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!bad_col[static_cast<std::size_t>(i)] && !std::isfinite(values(r, i))) {
                m.excluded_draws.push_back(static_cast<std::size_t>(r));
                break;
            }
        }
    }
    m.values = std::move(values);
    return m;
}

inline LogLikMatrix pointwise_loglik(const PosteriorDraws& draws, const Dataset& data) {
    if (draws.dimension() != data.dimension() + 2) throw DomainError("draws and dataset covariates differ");
    const AftLikelihood lik(data, draws.family);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(draws.total()), static_cast<Eigen::Index>(data.size()));
    std::vector<double> pw;
    for (std::size_t k = 0; k < draws.total(); ++k) {
        lik.evaluate(draws.draw(k), nullptr, &pw);
        for (std::size_t i = 0; i < pw.size(); ++i) v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = pw[i];
    }
    return make_loglik_matrix(std::move(v));
}

struct LooResult {
    double elpd = 0.0;
    double se = 0.0;
    std::vector<double> pointwise;
    std::vector<double> pareto_k;
    std::vector<std::size_t> high_k;  // observations with k above the threshold
    std::vector<std::size_t> excluded_observations;
};

inline double pointwise_se(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(static_cast<double>(v.size()) * math::variance(v));
}

/// elpd_i = log sum_s w_si exp(ll_si) with PSIS weights from -ll_i.
inline LooResult loo_elpd(const LogLikMatrix& ll, unsigned workers = 1) {
    std::vector<bool> drop_draw(static_cast<std::size_t>(ll.values.rows()), false);
    for (auto r : ll.excluded_draws) drop_draw[r] = true;
    std::vector<bool> drop_obs(static_cast<std::size_t>(ll.values.cols()), false);
    for (auto i : ll.excluded_observations) drop_obs[i] = true;
    std::vector<Eigen::Index> keep_draws;
    for (Eigen::Index r = 0; r < ll.values.rows(); ++r) {
        if (!drop_draw[static_cast<std::size_t>(r)]) keep_draws.push_back(r);
    }
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < ll.values.cols(); ++i) {
        if (!drop_obs[static_cast<std::size_t>(i)]) cols.push_back(i);
    }

    std::vector<double> elpd(cols.size()), kk(cols.size());
    parallel_for(cols.size(), workers, [&](std::size_t c) {
        std::vector<double> l(keep_draws.size()), lr(keep_draws.size());
        for (std::size_t s = 0; s < keep_draws.size(); ++s) {
            l[s] = ll.values(keep_draws[s], cols[c]);
            lr[s] = -l[s];
        }
        const auto ps = psis_smooth(lr);
        for (std::size_t s = 0; s < l.size(); ++s) l[s] += ps.log_weights[s];
        elpd[c] = math::log_sum_exp(l);
        kk[c] = ps.k;
    });

    LooResult out;
    out.pointwise = elpd;
    out.pareto_k = kk;
    out.excluded_observations = ll.excluded_observations;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.elpd += elpd[c];
        if (kk[c] > kParetoKThreshold) out.high_k.push_back(static_cast<std::size_t>(cols[c]));
    }
    out.se = pointwise_se(elpd);
    return out;
}

struct LooComparison {
    double elpd_diff = 0.0;
    double se_diff = 0.0;
};

/// elpd_b - elpd_a with the paired standard error.
inline LooComparison compare_models(const LooResult& a, const LooResult& b) {
    if (a.pointwise.size() != b.pointwise.size()) throw DomainError("LOO results cover different observations");
    std::vector<double> d(a.pointwise.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = b.pointwise[i] - a.pointwise[i];
    return {b.elpd - a.elpd, pointwise_se(d)};
}

}  // namespace intercens
