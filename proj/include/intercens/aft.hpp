#pragma once

// Weibull and log-normal accelerated failure time models fitted by maximum
// interval likelihood. Subject i has log-scale eta_i = mu + x_i' beta.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intercens/core.hpp"
#include "intercens/math.hpp"
#include "intercens/optim.hpp"

namespace intercens {

/// Log-likelihood of one observation and its derivatives with respect to the
/// linear predictor and the log-shape coordinate.
struct ObsTerm {
    double value = 0.0;
    double d_eta = 0.0;
    double d_log_shape = 0.0;
};

namespace detail {

inline ObsTerm weibull_upper(double log_t, double eta, double k) {
    const double u = k * (log_t - eta);
    const double z = std::exp(u);
    return {-z, k * z, -u * z};
}

inline ObsTerm weibull_lower(double log_t, double eta, double k) {
    const double u = k * (log_t - eta);
    const double z = std::exp(u);
    const double value = z < 1e-10 ? u - 0.5 * z : std::log(-std::expm1(-z));
    const double h = math::x_over_expm1(z);
    return {value, -k * h, u * h};
}

inline ObsTerm lognormal_upper(double log_t, double eta, double sigma) {
    const double w = (log_t - eta) / sigma;
    const double value = math::normal_log_sf(w);
    const double r = std::exp(math::normal_log_pdf(w) - value);
    return {value, r / sigma, r * w};
}

inline ObsTerm lognormal_lower(double log_t, double eta, double sigma) {
    const double w = (log_t - eta) / sigma;
    const double value = math::normal_log_cdf(w);
    const double r = std::exp(math::normal_log_pdf(w) - value);
    return {value, -r / sigma, -r * w};
}

}  // namespace detail

/// Weibull contribution with S(t) = exp(-(t / e^eta)^kappa), kappa = e^s.
/// The interval case is written in terms of delta = z_R - z_L = z_L expm1(u_R - u_L)
/// so narrow intervals do not cancel.
inline ObsTerm weibull_term(CensorKind kind, double left, double right, double eta, double log_shape) {
    const double k = std::exp(log_shape);
    if (kind == CensorKind::Interval && left <= 0.0) kind = CensorKind::LeftCensored;
    switch (kind) {
        case CensorKind::RightCensored:
            if (left <= 0.0) return {};
            return detail::weibull_upper(std::log(left), eta, k);
        case CensorKind::LeftCensored: return detail::weibull_lower(std::log(right), eta, k);
        case CensorKind::Exact: {
            const double u = k * (std::log(left) - eta);
            const double z = std::exp(u);
            return {log_shape - std::log(left) + u - z, k * (z - 1.0), 1.0 + u * (1.0 - z)};
        }
        case CensorKind::Interval: {
            const double ul = k * (std::log(left) - eta);
            const double ur = k * (std::log(right) - eta);
            const double zl = std::exp(ul);
            const double e1 = std::expm1(ur - ul);
            const double delta = zl * e1;
            if (!std::isfinite(e1) || !std::isfinite(delta)) return detail::weibull_upper(std::log(left), eta, k);
            const double log_d = delta < 1e-10 ? ul + std::log(e1) - 0.5 * delta : std::log(-std::expm1(-delta));
            const double h = math::x_over_expm1(delta);
            const double g = math::x_over_neg_expm1_neg(delta);
            return {-zl + log_d, k * (zl - h), (ur - ul) * g / e1 - zl * ur + ur * h};
        }
    }
    return {};
}

/// Log-normal contribution with S(t) = 1 - Phi((log t - eta) / sigma), sigma = e^s.
inline ObsTerm lognormal_term(CensorKind kind, double left, double right, double eta, double log_shape) {
    const double sigma = std::exp(log_shape);
    if (kind == CensorKind::Interval && left <= 0.0) kind = CensorKind::LeftCensored;
    switch (kind) {
        case CensorKind::RightCensored:
            if (left <= 0.0) return {};
            return detail::lognormal_upper(std::log(left), eta, sigma);
        case CensorKind::LeftCensored: return detail::lognormal_lower(std::log(right), eta, sigma);
        case CensorKind::Exact: {
            const double w = (std::log(left) - eta) / sigma;
            return {-std::log(left) - log_shape + math::normal_log_pdf(w), w / sigma, w * w - 1.0};
        }
        case CensorKind::Interval: {
            const double wl = (std::log(left) - eta) / sigma;
            const double wr = (std::log(right) - eta) / sigma;
            const double value = wl > 0.0 ? math::log_diff_exp(math::normal_log_sf(wl), math::normal_log_sf(wr))
                                          : math::log_diff_exp(math::normal_log_cdf(wr), math::normal_log_cdf(wl));
            const double rl = std::exp(math::normal_log_pdf(wl) - value);
            const double rr = std::exp(math::normal_log_pdf(wr) - value);
            return {value, (rl - rr) / sigma, rl * wl - rr * wr};
        }
    }
    return {};
}

inline ObsTerm family_term(FamilyKind family, const Observation& o, double eta, double log_shape) {
    return family == FamilyKind::Weibull ? weibull_term(o.kind, o.left, o.right, eta, log_shape)
                                         : lognormal_term(o.kind, o.left, o.right, eta, log_shape);
}

/// Dataset prepared for repeated likelihood evaluation.
class AftLikelihood {
public:
    AftLikelihood(const Dataset& data, FamilyKind family) : family_(family), obs_(data.observations) {
        data.validate();
        const auto n = static_cast<Eigen::Index>(data.size());
        const auto p = static_cast<Eigen::Index>(data.dimension());
        x_.resize(n, p);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) x_(i, j) = obs_[static_cast<std::size_t>(i)].covariates[static_cast<std::size_t>(j)];
        }
    }

    FamilyKind family() const { return family_; }
    std::size_t size() const { return obs_.size(); }
    std::size_t dimension() const { return static_cast<std::size_t>(x_.cols()); }
    std::size_t parameters() const { return dimension() + 2; }
    const Eigen::MatrixXd& design() const { return x_; }

    /// Total log-likelihood at theta = (mu, beta, log_shape); writes the
    /// gradient when `grad` is non-null and per-observation terms when
    /// `pointwise` is non-null.
    double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr,
                    std::vector<double>* pointwise = nullptr) const {
        const auto p = x_.cols();
        if (theta.size() != p + 2) throw DomainError("parameter vector has the wrong length");
        const double log_shape = theta[p + 1];
        const Eigen::VectorXd eta = (x_ * theta.segment(1, p)).array() + theta[0];
        if (grad) grad->setZero(p + 2);
        if (pointwise) pointwise->resize(obs_.size());
        double total = 0.0;
        Eigen::VectorXd d_eta(obs_.size());
        double d_shape = 0.0;
        for (std::size_t i = 0; i < obs_.size(); ++i) {
            const auto t = family_term(family_, obs_[i], eta[static_cast<Eigen::Index>(i)], log_shape);
            total += t.value;
            if (pointwise) (*pointwise)[i] = t.value;
            d_eta[static_cast<Eigen::Index>(i)] = t.d_eta;
            d_shape += t.d_log_shape;
        }
        if (grad) {
            (*grad)[0] = d_eta.sum();
            grad->segment(1, p) = x_.transpose() * d_eta;
            (*grad)[p + 1] = d_shape;
        }
        return std::isnan(total) ? -kInfinity : total;
    }

    std::vector<std::size_t> zero_mass_observations(const Eigen::VectorXd& theta) const {
        std::vector<double> pw;
        evaluate(theta, nullptr, &pw);
        std::vector<std::size_t> bad;
        for (std::size_t i = 0; i < pw.size(); ++i) {
            if (!std::isfinite(pw[i])) bad.push_back(i);
        }
        return bad;
    }

private:
    FamilyKind family_;
    std::vector<Observation> obs_;
    Eigen::MatrixXd x_;
};

inline Eigen::VectorXd to_eigen(const AftParams& p) {
    const auto v = p.flatten();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline double aft_interval_loglik(const AftParams& params, const Dataset& data, FamilyKind family) {
    return AftLikelihood(data, family).evaluate(to_eigen(params));
}

inline std::vector<double> aft_loglik_grad(const AftParams& params, const Dataset& data, FamilyKind family) {
    Eigen::VectorXd g;
    AftLikelihood(data, family).evaluate(to_eigen(params), &g);
    return {g.data(), g.data() + g.size()};
}

/// Indices of observations with zero likelihood mass at params.
inline std::vector<std::size_t> zero_mass_observations(const AftParams& params, const Dataset& data,
                                                       FamilyKind family) {
    return AftLikelihood(data, family).zero_mass_observations(to_eigen(params));
}

struct AftOptions {
    /// Holds log_shape fixed (log 1 = 0 gives the exponential model for Weibull).
    std::optional<double> fixed_log_shape;
    double grad_tol = 1e-6;
    int max_iter = 500;
};

struct AftFit {
    AftParams params;
    FamilyKind family = FamilyKind::Weibull;
    double loglik = -kInfinity;
    /// Inverse observed information in (mu, beta, log_shape) order.
    Eigen::MatrixXd covariance;
    bool covariance_available = false;
    bool converged = false;
    int n_iter = 0;
    std::vector<std::string> covariate_names;

    double standard_error(std::size_t j) const {
        return covariance_available ? std::sqrt(std::max(0.0, covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)))) : math::kNaN;
    }
};

/// Median of per-observation interval midpoints; the default starting scale.
inline double midpoint_median(const Dataset& data) {
    std::vector<double> mids;
    for (const auto& o : data.observations) {
        switch (o.kind) {
            case CensorKind::Interval: mids.push_back(0.5 * (o.left + o.right)); break;
            case CensorKind::LeftCensored: mids.push_back(0.5 * o.right); break;
            case CensorKind::RightCensored:
                if (o.left > 0.0) mids.push_back(o.left);
                break;
            case CensorKind::Exact: mids.push_back(o.left); break;
        }
    }
    if (mids.empty()) return 1.0;
    return math::quantile(mids, 0.5);
}

inline AftParams default_init(const Dataset& data) {
    AftParams p;
    p.mu = std::log(midpoint_median(data));
    p.beta.assign(data.dimension(), 0.0);
    p.log_shape = 0.0;
    return p;
}

/// Rejects designs whose columns, together with the intercept, are collinear.
inline void check_design_rank(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd full(x.rows(), x.cols() + 1);
    full.col(0).setOnes();
    full.rightCols(x.cols()) = x;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(full);
    qr.setThreshold(1e-10);
    if (qr.rank() < full.cols()) throw DomainError("design matrix is rank deficient (collinear covariates)");
}

/// Affine map between standardized-covariate coordinates and the model
/// coordinates: theta = a * theta_std. Optimizing in standardized
/// coordinates keeps the problem well conditioned when covariates are
/// far from zero.
inline Eigen::MatrixXd standardizing_map(const Eigen::MatrixXd& x) {
    const auto p = x.cols();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p + 2, p + 2);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double m = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - m).square().sum() / std::max<double>(1.0, static_cast<double>(x.rows()) - 1.0));
        const double s = sd > 0.0 ? sd : 1.0;
        a(j + 1, j + 1) = 1.0 / s;
        a(0, j + 1) = -m / s;
    }
    return a;
}

/// Maximizes `objective` (value + gradient in model coordinates) in
/// standardized coordinates, then polishes with Newton steps if needed.
/// Optional `fixed` coordinates are held at their starting values.
inline optim::AscentResult maximize_standardized(const optim::ValueGrad& objective, const Eigen::MatrixXd& design,
                                                  const Eigen::VectorXd& start, double grad_tol, int max_iter,
                                                  const std::vector<bool>& fixed = {}) {
    const auto n = start.size();
    const Eigen::MatrixXd a = standardizing_map(design);
    const Eigen::VectorXd start_std = a.fullPivLu().solve(start);
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (fixed.empty() || !fixed[static_cast<std::size_t>(j)]) free_idx.push_back(j);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    auto expand = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd s = start_std;
        for (Eigen::Index k = 0; k < nf; ++k) s[free_idx[static_cast<std::size_t>(k)]] = z[k];
        return Eigen::VectorXd(a * s);
    };
    auto free_grad = [&](const Eigen::VectorXd& g_model) {
        const Eigen::VectorXd gs = a.transpose() * g_model;
        Eigen::VectorXd out(nf);
        for (Eigen::Index k = 0; k < nf; ++k) out[k] = gs[free_idx[static_cast<std::size_t>(k)]];
        return out;
    };
    auto model_grad_small = [&](const Eigen::VectorXd& g_model) {
        double m = 0.0;
        for (auto j : free_idx) m = std::max(m, std::abs(g_model[j]));
        return m < grad_tol;
    };

    Eigen::VectorXd g_model(n);
    optim::ValueGrad f_std = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        const double v = objective(expand(z), g_model);
        g = free_grad(g_model);
        return v;
    };
    optim::AscentOptions opts;
    opts.max_iter = max_iter;
    opts.stop = [&](const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        objective(expand(z), g_model);
        return model_grad_small(g_model);
    };
    Eigen::VectorXd z0(nf);
    for (Eigen::Index k = 0; k < nf; ++k) z0[k] = start_std[free_idx[static_cast<std::size_t>(k)]];
    auto r = optim::maximize(f_std, z0, opts);

    // Newton polish in standardized coordinates.
    for (int it = 0; it < 20 && std::isfinite(r.value) && !r.converged; ++it) {
        const Eigen::MatrixXd h = optim::numeric_hessian(f_std, r.x);
        Eigen::LLT<Eigen::MatrixXd> llt(-h);
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd step = llt.solve(r.grad);
        Eigen::VectorXd g(nf);
        bool improved = false;
        // Near the optimum value changes drown in roundoff; a shrinking
        // gradient at a flat value is then the better acceptance test.
        const double noise = 1e-12 * std::max(1.0, std::abs(r.value));
        const double gnorm = r.grad.cwiseAbs().maxCoeff();
        for (double t = 1.0; t > 1e-6; t *= 0.5) {
            const Eigen::VectorXd trial = r.x + t * step;
            const double v = f_std(trial, g);
            if (std::isfinite(v) && (v > r.value || (v >= r.value - noise && g.cwiseAbs().maxCoeff() < gnorm))) {
                r.x = trial;
                r.value = v;
                r.grad = g;
                improved = true;
                break;
            }
        }
        if (!improved) break;
        r.converged = opts.stop(r.x, r.grad);
    }

    optim::AscentResult out;
    out.x = expand(r.x);
    out.value = objective(out.x, g_model);
    out.grad = g_model;
    out.iterations = r.iterations;
    out.converged = model_grad_small(g_model);
    return out;
}

inline AftFit fit_aft_mle(const Dataset& data, FamilyKind family, const std::optional<AftParams>& init = std::nullopt,
                          const AftOptions& options = {}) {
    const std::size_t p = data.dimension();
    const std::size_t n_free = p + (options.fixed_log_shape ? 1 : 2);
    if (data.size() <= n_free) throw DomainError("need more observations than parameters");
    const AftLikelihood lik(data, family);
    if (p > 0) check_design_rank(lik.design());

    AftParams start = init ? *init : default_init(data);
    if (start.beta.size() != p) throw DomainError("initial beta has the wrong length");
    if (options.fixed_log_shape) start.log_shape = *options.fixed_log_shape;
    const Eigen::VectorXd theta0 = to_eigen(start);
    if (!std::isfinite(lik.evaluate(theta0))) {
        std::string which;
        for (auto i : lik.zero_mass_observations(theta0)) which += (which.empty() ? "" : ", ") + std::to_string(i + 1);
        throw DomainError("log-likelihood is -infinity at the starting values; zero-mass observations: " + which);
    }

    std::vector<bool> fixed(p + 2, false);
    if (options.fixed_log_shape) fixed[p + 1] = true;
    optim::ValueGrad objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) { return lik.evaluate(th, &g); };
    const auto r = maximize_standardized(objective, lik.design(), theta0, options.grad_tol, options.max_iter, fixed);

    AftFit fit;
    fit.family = family;
    fit.params = AftParams::unflatten(r.x);
    fit.loglik = r.value;
    fit.converged = r.converged;
    fit.n_iter = r.iterations;
    fit.covariate_names = data.covariate_names;

    // Observed information over the free coordinates.
    std::vector<Eigen::Index> free_idx;
    for (std::size_t j = 0; j < p + 2; ++j) {
        if (!fixed[j]) free_idx.push_back(static_cast<Eigen::Index>(j));
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    optim::ValueGrad sub = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        Eigen::VectorXd th = r.x;
        for (Eigen::Index k = 0; k < nf; ++k) th[free_idx[static_cast<std::size_t>(k)]] = z[k];
        Eigen::VectorXd full;
        const double v = lik.evaluate(th, &full);
        g.resize(nf);
        for (Eigen::Index k = 0; k < nf; ++k) g[k] = full[free_idx[static_cast<std::size_t>(k)]];
        return v;
    };
    Eigen::VectorXd z(nf);
    for (Eigen::Index k = 0; k < nf; ++k) z[k] = r.x[free_idx[static_cast<std::size_t>(k)]];
    const Eigen::MatrixXd info = -optim::numeric_hessian(sub, z, 1e-5);
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    fit.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p + 2), static_cast<Eigen::Index>(p + 2));
    if (info.allFinite() && llt.info() == Eigen::Success) {
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
        for (Eigen::Index a = 0; a < nf; ++a) {
            for (Eigen::Index b = 0; b < nf; ++b) fit.covariance(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]) = 0.5 * (inv(a, b) + inv(b, a));
        }
        fit.covariance_available = true;
    }
    return fit;
}

struct TimeRatio {
    std::string term;
    double estimate = 0.0;  // beta_j
    double se = 0.0;
    double ratio = 1.0;  // exp(beta_j)
    double lower = 0.0;
    double upper = 0.0;
};

using TimeRatioTable = std::vector<TimeRatio>;

/// exp(beta_j) with Wald limits exp(beta_j -/+ z se_j) computed on the log scale.
inline TimeRatioTable time_ratios(const AftFit& fit, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("level must lie in (0, 1)");
    if (!fit.covariance_available) throw DomainError("covariance is unavailable for this fit");
    const double z = math::normal_quantile(1.0 - (1.0 - level) / 2.0);
    TimeRatioTable table;
    for (std::size_t j = 0; j < fit.params.beta.size(); ++j) {
        TimeRatio tr;
        tr.term = j < fit.covariate_names.size() ? fit.covariate_names[j] : "x" + std::to_string(j + 1);
        tr.estimate = fit.params.beta[j];
        tr.se = fit.standard_error(j + 1);
        tr.ratio = std::exp(tr.estimate);
        tr.lower = std::exp(tr.estimate - z * tr.se);
        tr.upper = std::exp(tr.estimate + z * tr.se);
        table.push_back(tr);
    }
    return table;
}

inline std::vector<double> predict_survival(FamilyKind family, const AftParams& params,
                                            const std::vector<double>& covariates, const std::vector<double>& grid) {
    if (covariates.size() != params.beta.size()) throw DomainError("covariate vector has the wrong length");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] < 0.0 || (g > 0 && grid[g] < grid[g - 1])) throw DomainError("grid must be ascending and non-negative");
    }
    const double eta = params.linear_predictor(covariates);
    std::vector<double> out(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) out[g] = family_survival(family, grid[g], eta, params.log_shape);
    return out;
}

inline std::vector<double> predict_survival(const AftFit& fit, const std::vector<double>& covariates,
                                            const std::vector<double>& grid) {
    return predict_survival(fit.family, fit.params, covariates, grid);
}

}  // namespace intercens
