#pragma once

// Data model for interval-censored observations and the four-case likelihood
// contribution, plus the parametric survival primitives shared by every
// estimator. Time is measured in months throughout.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "intercens/errors.hpp"
#include "intercens/math.hpp"

namespace intercens {

inline constexpr double kInfinity = math::kInf;

/// Days per month used when converting follow-up recorded in days.
inline constexpr double kDaysPerMonth = 30.4375;

enum class CensorKind { Interval, LeftCensored, RightCensored, Exact };

inline std::string_view to_string(CensorKind kind) {
    switch (kind) {
        case CensorKind::Interval: return "interval";
        case CensorKind::LeftCensored: return "left";
        case CensorKind::RightCensored: return "right";
        case CensorKind::Exact: return "exact";
    }
    return "?";
}

inline std::optional<CensorKind> parse_censor_kind(std::string_view s) {
    if (s == "interval") return CensorKind::Interval;
    if (s == "left") return CensorKind::LeftCensored;
    if (s == "right") return CensorKind::RightCensored;
    if (s == "exact") return CensorKind::Exact;
    return std::nullopt;
}

/// Kind implied by the endpoints of (left, right].
inline CensorKind classify_observation(double left, double right) {
    if (std::isnan(left) || std::isnan(right) || !std::isfinite(left) || left < 0.0) {
        throw InvalidInterval("left endpoint must be finite and non-negative");
    }
    if (left > right) throw InvalidInterval("left endpoint exceeds right endpoint");
    if (left == 0.0 && right == 0.0) throw InvalidInterval("(0, 0] carries no probability mass");
    if (right == kInfinity) return CensorKind::RightCensored;
    if (left == right) return CensorKind::Exact;
    if (left == 0.0) return CensorKind::LeftCensored;
    return CensorKind::Interval;
}

/// One subject: the event time lies in (left, right].
struct Observation {
    double left = 0.0;
    double right = kInfinity;
    std::vector<double> covariates;
    CensorKind kind = CensorKind::RightCensored;

    /// Kind derived from the endpoints.
    static Observation make(double left, double right, std::vector<double> covariates = {}) {
        const auto kind = classify_observation(left, right);
        return Observation{left, right, std::move(covariates), kind};
    }

    /// Kind given explicitly, as in a file with a cens column. An explicit
    /// LeftCensored row may carry left > 0; it is still read as (0, right].
    static Observation make(double left, double right, std::vector<double> covariates, CensorKind kind) {
        classify_observation(left, right);
        const bool ok = [&] {
            switch (kind) {
                case CensorKind::Exact: return left == right;
                case CensorKind::RightCensored: return right == kInfinity;
                case CensorKind::LeftCensored: return std::isfinite(right) && right > 0.0;
                case CensorKind::Interval: return std::isfinite(right) && left < right;
            }
            return false;
        }();
        if (!ok) {
            throw InvalidInterval("censoring kind '" + std::string(to_string(kind)) + "' does not match (" +
                                  std::to_string(left) + ", " + std::to_string(right) + "]");
        }
        return Observation{left, right, std::move(covariates), kind};
    }

    /// Lower endpoint used by the likelihood: zero for left-censored rows.
    double effective_left() const { return kind == CensorKind::LeftCensored ? 0.0 : left; }
};

struct Dataset {
    std::vector<Observation> observations;
    std::vector<std::string> covariate_names;

    Dataset() = default;
    Dataset(std::vector<Observation> obs, std::vector<std::string> names)
        : observations(std::move(obs)), covariate_names(std::move(names)) {
        validate();
    }

    std::size_t size() const { return observations.size(); }
    std::size_t dimension() const { return covariate_names.size(); }

    void validate() const {
        if (observations.empty()) throw InconsistentData("dataset has no observations");
        for (std::size_t i = 0; i < observations.size(); ++i) {
            if (observations[i].covariates.size() != covariate_names.size()) {
                throw InconsistentData("observation " + std::to_string(i + 1) + " has " +
                                       std::to_string(observations[i].covariates.size()) +
                                       " covariates, expected " + std::to_string(covariate_names.size()));
            }
        }
    }

    /// Same observations without covariates.
    Dataset without_covariates() const {
        Dataset out;
        out.observations = observations;
        for (auto& o : out.observations) o.covariates.clear();
        return out;
    }
};

/// Right-continuous, non-increasing step function: S(t) = 1 below the first
/// knot and values[k] on [knots[k], knots[k+1]).
class StepSurvival {
public:
    StepSurvival() = default;
    StepSurvival(std::vector<double> knots, std::vector<double> values)
        : knots_(std::move(knots)), values_(std::move(values)) {
        if (knots_.size() != values_.size()) throw DomainError("knots and values differ in length");
        for (std::size_t k = 0; k < knots_.size(); ++k) {
            if (k > 0 && !(knots_[k] > knots_[k - 1])) throw DomainError("knots must be strictly increasing");
            if (!(values_[k] >= 0.0 && values_[k] <= 1.0)) throw DomainError("survival values must lie in [0, 1]");
            if (values_[k] > (k == 0 ? 1.0 : values_[k - 1]) + 1e-12) {
                throw DomainError("survival values must be non-increasing");
            }
        }
    }

    double operator()(double t) const {
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        if (it == knots_.begin()) return 1.0;
        return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
    }

    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> knots_;
    std::vector<double> values_;
};

inline double step_survival_eval(const StepSurvival& curve, double t) { return curve(t); }

enum class FamilyKind { Weibull, LogNormal };

inline std::string_view to_string(FamilyKind f) { return f == FamilyKind::Weibull ? "weibull" : "lognormal"; }

inline std::optional<FamilyKind> parse_family(std::string_view s) {
    if (s == "weibull") return FamilyKind::Weibull;
    if (s == "lognormal") return FamilyKind::LogNormal;
    return std::nullopt;
}

/// AFT parameters on the unconstrained scale. log_shape is log(kappa) for the
/// Weibull family (kappa = 1/sigma) and log(sigma) for the log-normal family.
struct AftParams {
    double mu = 0.0;
    std::vector<double> beta;
    double log_shape = 0.0;

    double shape() const { return std::exp(log_shape); }
    std::size_t size() const { return beta.size() + 2; }

    /// Log scale of the event time for covariates x.
    double linear_predictor(const std::vector<double>& x) const {
        double eta = mu;
        for (std::size_t j = 0; j < beta.size(); ++j) eta += beta[j] * x[j];
        return eta;
    }

    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(size());
        v.push_back(mu);
        v.insert(v.end(), beta.begin(), beta.end());
        v.push_back(log_shape);
        return v;
    }

    template <class Vec>
    static AftParams unflatten(const Vec& v) {
        const auto n = static_cast<std::size_t>(v.size());
        if (n < 2) throw DomainError("parameter vector needs at least mu and log_shape");
        AftParams p;
        p.mu = v[0];
        p.beta.resize(n - 2);
        for (std::size_t j = 0; j + 2 < n; ++j) p.beta[j] = v[j + 1];
        p.log_shape = v[n - 1];
        return p;
    }
};

inline double weibull_survival(double t, double scale, double shape) {
    if (!std::isfinite(t) || !std::isfinite(scale) || !std::isfinite(shape)) {
        throw DomainError("weibull_survival: non-finite input");
    }
    if (t < 0.0 || scale <= 0.0 || shape <= 0.0) throw DomainError("weibull_survival: argument out of range");
    if (t == 0.0) return 1.0;
    return std::exp(-std::pow(t / scale, shape));
}

inline double weibull_density(double t, double scale, double shape) {
    if (t <= 0.0) return 0.0;
    const double z = std::pow(t / scale, shape);
    return shape / t * z * std::exp(-z);
}

inline double lognormal_survival(double t, double location, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("lognormal_survival: scale must be positive");
    if (std::isnan(t) || t < 0.0) throw DomainError("lognormal_survival: t must be non-negative");
    if (t == 0.0) return 1.0;
    if (t == kInfinity) return 0.0;
    return math::normal_cdf(-(std::log(t) - location) / scale);
}

inline double lognormal_density(double t, double location, double scale) {
    if (t <= 0.0) return 0.0;
    const double w = (std::log(t) - location) / scale;
    return std::exp(math::normal_log_pdf(w)) / (t * scale);
}

/// Survival and density of one subject under an AFT family with the given
/// linear predictor (log scale) and log-shape.
inline double family_survival(FamilyKind family, double t, double eta, double log_shape) {
    if (t == kInfinity) return 0.0;
    if (family == FamilyKind::Weibull) return weibull_survival(t, std::exp(eta), std::exp(log_shape));
    return lognormal_survival(t, eta, std::exp(log_shape));
}

inline double family_density(FamilyKind family, double t, double eta, double log_shape) {
    if (family == FamilyKind::Weibull) return weibull_density(t, std::exp(eta), std::exp(log_shape));
    return lognormal_density(t, eta, std::exp(log_shape));
}

/// Tolerance for S(L) < S(R) before a survival function is declared non-monotone.
inline constexpr double kMonotonicityTolerance = 1e-12;

/// Log of the likelihood contribution of one observation under a survival
/// function `surv` with density `dens`. Zero mass gives -infinity rather than
/// an exception so that optimizers can backtrack.
template <class Surv, class Dens>
double log_lik_contribution(const Observation& obs, Surv&& surv, Dens&& dens) {
    switch (obs.kind) {
        case CensorKind::Interval: {
            const double sl = surv(obs.left);
            const double sr = surv(obs.right);
            if (sl < sr - kMonotonicityTolerance) {
                throw MonotonicityViolation("survival function increases on (" + std::to_string(obs.left) + ", " +
                                            std::to_string(obs.right) + "]");
            }
            const double mass = sl - sr;
            return mass > 0.0 ? std::log(mass) : -kInfinity;
        }
        case CensorKind::LeftCensored: {
            const double mass = 1.0 - surv(obs.right);
            return mass > 0.0 ? std::log(mass) : -kInfinity;
        }
        case CensorKind::RightCensored: {
            const double s = surv(obs.left);
            return s > 0.0 ? std::log(s) : -kInfinity;
        }
        case CensorKind::Exact: {
            const double f = dens(obs.left);
            return f > 0.0 ? std::log(f) : -kInfinity;
        }
    }
    return -kInfinity;
}

}  // namespace intercens
