#pragma once

// Bayesian AFT: interval likelihood times normal priors on (mu, beta) and a
// Gamma prior on the shape, sampled with the dense-metric HMC in hmc.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intercens/aft.hpp"
#include "intercens/diagnostics.hpp"
#include "intercens/hmc.hpp"
#include "intercens/math.hpp"
#include "intercens/random.hpp"
#include "intercens/turnbull.hpp"

namespace intercens {

/// mu ~ N(0, sigma_mu^2), beta_j ~ N(0, sigma_beta^2), shape ~ Gamma(a, rate b).
/// The shape is kappa for the Weibull family and sigma for the log-normal.
struct PriorSpec {
    double sigma_mu = 10.0;
    double sigma_beta = 5.0;
    double a_kappa = 2.0;
    double b_kappa = 1.0;

    void validate() const {
        if (!(sigma_mu > 0.0 && sigma_beta > 0.0 && a_kappa > 0.0 && b_kappa > 0.0)) {
            throw DomainError("prior hyperparameters must be positive");
        }
    }
};

/// Log prior density in (mu, beta, log_shape) coordinates, including the
/// log-Jacobian log_shape of the map log_shape -> shape.
inline double log_prior(const Eigen::VectorXd& theta, const PriorSpec& pr, Eigen::VectorXd* grad = nullptr) {
    const auto d = theta.size();
    const double s = theta[d - 1];
    const double shape = std::exp(s);
    auto normal = [](double x, double sd) { return -0.5 * (x / sd) * (x / sd) - std::log(sd) - math::kLogSqrt2Pi; };
    double lp = normal(theta[0], pr.sigma_mu);
    for (Eigen::Index j = 1; j + 1 < d; ++j) lp += normal(theta[j], pr.sigma_beta);
    lp += pr.a_kappa * std::log(pr.b_kappa) - std::lgamma(pr.a_kappa) + (pr.a_kappa - 1.0) * s - pr.b_kappa * shape;
    lp += s;
    if (grad) {
        grad->resize(d);
        (*grad)[0] = -theta[0] / (pr.sigma_mu * pr.sigma_mu);
        for (Eigen::Index j = 1; j + 1 < d; ++j) (*grad)[j] = -theta[j] / (pr.sigma_beta * pr.sigma_beta);
        (*grad)[d - 1] = pr.a_kappa - pr.b_kappa * shape;
    }
    return lp;
}

class PosteriorTarget {
public:
    PosteriorTarget(const Dataset& data, FamilyKind family, PriorSpec priors)
        : lik_(data, family), priors_(priors) {
        priors_.validate();
    }

    double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const {
        Eigen::VectorXd gl, gp;
        const double ll = lik_.evaluate(theta, grad ? &gl : nullptr);
        if (!std::isfinite(ll)) {
            if (grad) grad->setZero(theta.size());
            return -kInfinity;
        }
        const double lp = log_prior(theta, priors_, grad ? &gp : nullptr);
        if (grad) *grad = gl + gp;
        return ll + lp;
    }

    const AftLikelihood& likelihood() const { return lik_; }
    const PriorSpec& priors() const { return priors_; }

private:
    AftLikelihood lik_;
    PriorSpec priors_;
};

inline double log_posterior(const AftParams& params, const Dataset& data, const PriorSpec& priors, FamilyKind family) {
    return PosteriorTarget(data, family, priors).evaluate(to_eigen(params));
}

inline std::vector<double> log_posterior_grad(const AftParams& params, const Dataset& data, const PriorSpec& priors,
                                              FamilyKind family) {
    Eigen::VectorXd g;
    PosteriorTarget(data, family, priors).evaluate(to_eigen(params), &g);
    return {g.data(), g.data() + g.size()};
}

struct PosteriorDraws {
    FamilyKind family = FamilyKind::Weibull;
    std::vector<std::string> covariate_names;
    /// One (iters x (p+2)) matrix per chain in (mu, beta, log_shape) order.
    std::vector<Eigen::MatrixXd> chains;
    int warmup = 0;
    std::uint64_t seed = 0;
    std::vector<double> step_sizes;
    std::vector<double> mean_accept;
    int divergent = 0;
    bool divergence_warning = false;

    std::size_t num_chains() const { return chains.size(); }
    std::size_t iterations() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().rows()); }
    std::size_t dimension() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().cols()); }
    std::size_t total() const { return num_chains() * iterations(); }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> names{"mu"};
        for (const auto& c : covariate_names) names.push_back("beta[" + c + "]");
        names.push_back(family == FamilyKind::Weibull ? "log_kappa" : "log_sigma");
        return names;
    }

    /// Draw k in chain-major order.
    Eigen::VectorXd draw(std::size_t k) const {
        const auto n = iterations();
        return chains[k / n].row(static_cast<Eigen::Index>(k % n)).transpose();
    }

    AftParams params(std::size_t k) const { return AftParams::unflatten(draw(k)); }

    ChainMatrix parameter_chains(std::size_t j) const {
        ChainMatrix out;
        for (const auto& c : chains) {
            const Eigen::VectorXd col = c.col(static_cast<Eigen::Index>(j));
            out.emplace_back(col.data(), col.data() + col.size());
        }
        return out;
    }

    std::vector<double> pooled(std::size_t j) const {
        std::vector<double> v;
        for (const auto& c : parameter_chains(j)) v.insert(v.end(), c.begin(), c.end());
        return v;
    }
};

struct SampleOptions {
    std::size_t chains = 4;
    int warmup = 1000;
    int iters = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double target_accept = 0.8;
};

/// Posterior mode and the inverse negative Hessian there.
struct LaplaceApproximation {
    Eigen::VectorXd mode;
    Eigen::MatrixXd covariance;
    bool covariance_ok = false;
};

inline LaplaceApproximation laplace_approximation(const PosteriorTarget& target, const Dataset& data) {
    optim::ValueGrad f = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) { return target.evaluate(th, &g); };
    const auto r = maximize_standardized(f, target.likelihood().design(), to_eigen(default_init(data)), 1e-6, 500);
    LaplaceApproximation la;
    la.mode = r.x;
    const Eigen::MatrixXd info = -optim::numeric_hessian(f, r.x);
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (info.allFinite() && llt.info() == Eigen::Success) {
        la.covariance = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
        la.covariance = 0.5 * (la.covariance + la.covariance.transpose());
        la.covariance_ok = true;
    } else {
        la.covariance = 0.01 * Eigen::MatrixXd::Identity(info.rows(), info.cols());
    }
    return la;
}

/// Runs `chains` HMC chains started at mode + L z with z ~ N(0, I), where
/// L L' is the Laplace covariance; chain c uses streams derived from
/// (seed, c), so output does not depend on the worker count.
inline PosteriorDraws sample_posterior(const Dataset& data, const PriorSpec& priors, FamilyKind family,
                                       const SampleOptions& opts = {}) {
    if (opts.chains < 2) throw DomainError("need at least two chains");
    if (opts.warmup < 200) throw DomainError("warmup must be at least 200 iterations");
    if (opts.iters < 1) throw DomainError("need at least one kept iteration");
    const PosteriorTarget target(data, family, priors);
    const auto la = laplace_approximation(target, data);
    if (!std::isfinite(target.evaluate(la.mode))) {
        throw DomainError("log posterior is -infinity at its mode");
    }
    const Eigen::MatrixXd chol = la.covariance.llt().matrixL();

    std::vector<Eigen::VectorXd> inits;
    for (std::size_t c = 0; c < opts.chains; ++c) {
        Rng rng = make_rng(opts.seed, {static_cast<std::uint64_t>(c), 0x1417});
        for (int attempt = 0;; ++attempt) {
            Eigen::VectorXd z(la.mode.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
            Eigen::VectorXd th = la.mode + chol * z;
            if (std::isfinite(target.evaluate(th)) || attempt >= 20) {
                inits.push_back(std::isfinite(target.evaluate(th)) ? th : la.mode);
                break;
            }
        }
    }

    hmc::Options ho;
    ho.warmup = opts.warmup;
    ho.iters = opts.iters;
    ho.target_accept = opts.target_accept;
    hmc::LogDensity lp = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) { return target.evaluate(th, &g); };
    const auto run = hmc::sample(lp, la.covariance, inits, ho, opts.seed, opts.workers);

    PosteriorDraws d;
    d.family = family;
    d.covariate_names = data.covariate_names;
    d.warmup = opts.warmup;
    d.seed = opts.seed;
    for (const auto& c : run.chains) {
        d.chains.push_back(c.draws);
        d.step_sizes.push_back(c.step_size);
        d.mean_accept.push_back(c.mean_accept);
    }
    d.divergent = run.divergent;
    d.divergence_warning = run.divergence_warning;
    return d;
}

inline std::vector<ParameterDiagnostics> chain_diagnostics(const PosteriorDraws& draws) {
    if (draws.num_chains() < 2) throw DomainError("diagnostics need at least two chains");
    std::vector<ParameterDiagnostics> out;
    for (std::size_t j = 0; j < draws.dimension(); ++j) out.push_back(chain_diagnostics(draws.parameter_chains(j)));
    return out;
}

/// One row of the posterior summary table.
struct PosteriorSummaryRow {
    std::string term;
    double median = 0.0;
    double est_error = 0.0;  // posterior standard deviation
    double q025 = 0.0;
    double q975 = 0.0;
    ParameterDiagnostics diag;
};

inline std::vector<PosteriorSummaryRow> posterior_summary(const PosteriorDraws& draws) {
    const auto names = draws.parameter_names();
    const auto diags = chain_diagnostics(draws);
    std::vector<PosteriorSummaryRow> rows;
    for (std::size_t j = 0; j < draws.dimension(); ++j) {
        auto v = draws.pooled(j);
        std::sort(v.begin(), v.end());
        PosteriorSummaryRow r;
        r.term = names[j];
        r.median = math::quantile_sorted(v, 0.5);
        r.est_error = std::sqrt(math::variance(v));
        r.q025 = math::quantile_sorted(v, 0.025);
        r.q975 = math::quantile_sorted(v, 0.975);
        r.diag = diags[j];
        rows.push_back(r);
    }
    return rows;
}

struct SurvivalBand {
    std::vector<double> grid;
    std::vector<double> median;
    std::vector<double> lower;
    std::vector<double> upper;
    double level = 0.95;
};

namespace detail {

inline SurvivalBand band_from_curves(const std::vector<std::vector<double>>& curves, const std::vector<double>& grid,
                                     double level) {
    if (!(level > 0.0 && level <= 1.0)) throw DomainError("band level must lie in (0, 1]");
    SurvivalBand band;
    band.grid = grid;
    band.level = level;
    std::vector<double> col(curves.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t s = 0; s < curves.size(); ++s) col[s] = curves[s][g];
        std::sort(col.begin(), col.end());
        band.median.push_back(math::quantile_sorted(col, 0.5));
        band.lower.push_back(math::quantile_sorted(col, (1.0 - level) / 2.0));
        band.upper.push_back(math::quantile_sorted(col, 1.0 - (1.0 - level) / 2.0));
    }
    return band;
}

inline void check_grid(const std::vector<double>& grid) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] < 0.0 || (g > 0 && grid[g] < grid[g - 1])) throw DomainError("grid must be ascending and non-negative");
    }
}

}  // namespace detail

/// Pointwise posterior quantiles of S(t | x) for one covariate profile.
inline SurvivalBand posterior_survival_band(const PosteriorDraws& draws, const std::vector<double>& covariates,
                                            const std::vector<double>& grid, double level = 0.95) {
    detail::check_grid(grid);
    std::vector<std::vector<double>> curves;
    curves.reserve(draws.total());
    for (std::size_t k = 0; k < draws.total(); ++k) {
        curves.push_back(predict_survival(draws.family, draws.params(k), covariates, grid));
    }
    return detail::band_from_curves(curves, grid, level);
}

/// Pointwise posterior quantiles of the population-averaged curve
/// (1/n) sum_i S(t | x_i), the covariate-marginal analogue of the NPMLE.
inline SurvivalBand marginal_survival_band(const PosteriorDraws& draws, const Dataset& data,
                                           const std::vector<double>& grid, double level = 0.95) {
    detail::check_grid(grid);
    std::vector<std::vector<double>> curves;
    curves.reserve(draws.total());
    const double n = static_cast<double>(data.size());
    for (std::size_t k = 0; k < draws.total(); ++k) {
        const auto p = draws.params(k);
        std::vector<double> avg(grid.size(), 0.0);
        for (const auto& o : data.observations) {
            const double eta = p.linear_predictor(o.covariates);
            for (std::size_t g = 0; g < grid.size(); ++g) avg[g] += family_survival(draws.family, grid[g], eta, p.log_shape) / n;
        }
        curves.push_back(std::move(avg));
    }
    return detail::band_from_curves(curves, grid, level);
}

/// Fraction of NPMLE step heights (the value just after each knot) that lie
/// inside the band linearly interpolated to the knot.
inline double band_coverage_vs_em(const SurvivalBand& band, const StepSurvival& em) {
    const auto& knots = em.knots();
    if (knots.empty()) return 1.0;
    if (band.grid.empty() || band.grid.front() > knots.front() || band.grid.back() < knots.back()) {
        throw DomainError("band grid does not span the EM knots");
    }
    std::size_t inside = 0;
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const double h = em.values()[k];
        const double lo = math::interpolate(band.grid, band.lower, knots[k]);
        const double hi = math::interpolate(band.grid, band.upper, knots[k]);
        if (lo <= h && h <= hi) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(knots.size());
}

inline double band_coverage_vs_em(const SurvivalBand& band, const EmFit& em) { return band_coverage_vs_em(band, em.curve); }

/// Draws one event time from the AFT family with log scale eta.
inline double draw_event_time(FamilyKind family, double eta, double log_shape, Rng& rng) {
    if (family == FamilyKind::Weibull) {
        const double e = -std::log(uniform_open(rng));
        return std::exp(eta + std::log(e) / std::exp(log_shape));
    }
    return std::exp(eta + std::exp(log_shape) * standard_normal(rng));
}

struct PpcSummary {
    std::vector<double> capture;     // per observation: fraction of replicates inside (L, R]
    std::vector<double> model_prob;  // per observation: S(L) - S(R) at the posterior mean
    double mean_capture = 0.0;
    double mean_model_prob = 0.0;
    double mc_se = 0.0;
    bool flagged = false;
    std::size_t n_rep = 0;
};

/// Each replicate picks a posterior draw and simulates a fresh event time for
/// every subject. The reference probability uses the posterior-mean
/// parameters; a flag is raised when the mean capture rate and the mean
/// reference probability differ by more than 3 Monte Carlo standard errors.
inline PpcSummary posterior_predictive_check(const PosteriorDraws& draws, const Dataset& data, std::size_t n_rep,
                                             std::uint64_t seed) {
    if (n_rep < 100) throw DomainError("posterior predictive check needs at least 100 replicates");
    const std::size_t n = data.size();
    const std::size_t total = draws.total();
    if (total == 0) throw DomainError("no posterior draws");
    PpcSummary out;
    out.n_rep = n_rep;
    out.capture.assign(n, 0.0);
    Rng rng = make_rng(seed, {0x99c});
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t r = 0; r < n_rep; ++r) {
        const auto p = draws.params(pick(rng));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& o = data.observations[i];
            const double t = draw_event_time(draws.family, p.linear_predictor(o.covariates), p.log_shape, rng);
            if (t > o.effective_left() && t <= o.right) out.capture[i] += 1.0;
        }
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(draws.dimension()));
    for (std::size_t k = 0; k < total; ++k) mean += draws.draw(k);
    mean /= static_cast<double>(total);
    const auto pm = AftParams::unflatten(mean);
    double var_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = data.observations[i];
        out.capture[i] /= static_cast<double>(n_rep);
        const double eta = pm.linear_predictor(o.covariates);
        const double pr = o.kind == CensorKind::Exact
                              ? 0.0
                              : family_survival(draws.family, o.effective_left(), eta, pm.log_shape) -
                                    family_survival(draws.family, o.right, eta, pm.log_shape);
        out.model_prob.push_back(std::clamp(pr, 0.0, 1.0));
        var_sum += out.model_prob.back() * (1.0 - out.model_prob.back());
    }
    out.mean_capture = math::mean(out.capture);
    out.mean_model_prob = math::mean(out.model_prob);
    out.mc_se = std::sqrt(var_sum / static_cast<double>(n)) / std::sqrt(static_cast<double>(n * n_rep));
    out.flagged = std::abs(out.mean_capture - out.mean_model_prob) > 3.0 * out.mc_se;
    return out;
}

}  // namespace intercens
