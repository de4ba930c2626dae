#pragma once

// Simulated interval-censored data: log T = mu + b1 x1 + b2 x2 + sigma eps,
// observed only through fixed or Poisson visit schedules on (0, tau].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intercens/core.hpp"
#include "intercens/errors.hpp"
#include "intercens/random.hpp"

namespace intercens {

enum class ScheduleKind { Fixed, Poisson };

struct Schedule {
    ScheduleKind kind = ScheduleKind::Fixed;
    double width = 3.0;  // Fixed
    double rate = 0.8;   // Poisson, visits per month

    static Schedule fixed(double width) { return {ScheduleKind::Fixed, width, 0.0}; }
    static Schedule poisson(double rate) { return {ScheduleKind::Poisson, 0.0, rate}; }

    std::string label() const;
};

struct ScenarioConfig {
    std::string id;
    std::size_t n = 100;
    FamilyKind family = FamilyKind::Weibull;
    /// kappa for Weibull truth, sigma for log-normal truth (the exp(log_shape) of AftParams).
    double shape = 1.5;
    double mu = std::log(8.0);
    std::vector<double> beta{0.5, -0.3};
    /// Scale of the error on the log-time axis: 1/kappa (Weibull) or sigma (log-normal).
    double sigma = 1.0 / 1.5;
    Schedule schedule = Schedule::fixed(3.0);
    double tau = 15.0;
    std::uint64_t seed = 1;

    AftParams true_params() const { return {mu, beta, std::log(shape)}; }

    void validate() const {
        if (n == 0) throw DomainError("scenario needs n >= 1");
        if (!(tau > 0.0)) throw DomainError("tau must be positive");
        if (!(sigma > 0.0) || !(shape > 0.0)) throw DomainError("scale parameters must be positive");
        if (beta.size() != 2) throw DomainError("scenario needs two coefficients");
        if (schedule.kind == ScheduleKind::Fixed && !(schedule.width > 0.0 && schedule.width <= tau)) {
            throw DomainError("fixed window width must lie in (0, tau]");
        }
        if (schedule.kind == ScheduleKind::Poisson && !(schedule.rate > 0.0)) throw DomainError("visit rate must be positive");
    }
};

inline std::string Schedule::label() const {
    auto trim = [](double v) {
        std::string s = std::to_string(v);
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    return kind == ScheduleKind::Fixed ? "fixed" + trim(width) : "poisson" + trim(rate);
}

/// Scenario with the documented defaults: Weibull truth (kappa, sigma = 1/kappa)
/// or log-normal truth (sigma).
inline ScenarioConfig make_scenario(std::size_t n, FamilyKind family, double shape, Schedule schedule,
                                    std::uint64_t seed = 1) {
    ScenarioConfig c;
    c.n = n;
    c.family = family;
    c.shape = shape;
    c.sigma = family == FamilyKind::Weibull ? 1.0 / shape : shape;
    c.schedule = schedule;
    c.seed = seed;
    auto num = [](double v) {
        std::string s = std::to_string(v);
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    c.id = "n" + std::to_string(n) + "-" + std::string(to_string(family)) + "-" +
           (family == FamilyKind::Weibull ? "k" : "s") + num(shape) + "-" + schedule.label();
    return c;
}

struct EventDraws {
    std::vector<double> times;
    Eigen::MatrixXd x;  // n x 2
};

/// x1 ~ Bernoulli(0.5), x2 ~ N(0, 1), eps standard minimum extreme-value
/// (Weibull) or standard normal (log-normal).
inline EventDraws draw_event_times(const ScenarioConfig& c, Rng& rng) {
    EventDraws d;
    d.times.resize(c.n);
    d.x.resize(static_cast<Eigen::Index>(c.n), 2);
    for (std::size_t i = 0; i < c.n; ++i) {
        const double x1 = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
        const double x2 = standard_normal(rng);
        const double eps = c.family == FamilyKind::Weibull ? std::log(-std::log(uniform_open(rng))) : standard_normal(rng);
        const auto r = static_cast<Eigen::Index>(i);
        d.x(r, 0) = x1;
        d.x(r, 1) = x2;
        d.times[i] = std::exp(c.mu + c.beta[0] * x1 + c.beta[1] * x2 + c.sigma * eps);
    }
    return d;
}

/// width, 2 width, ... up to tau.
inline std::vector<double> fixed_schedule(double tau, double width) {
    if (!(width > 0.0 && width <= tau)) throw DomainError("window width must lie in (0, tau]");
    std::vector<double> v;
    for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) * width;
        if (t > tau * (1.0 + 1e-12)) break;
        v.push_back(std::min(t, tau));
    }
    return v;
}

/// Arrival times of a homogeneous Poisson process on (0, tau].
inline std::vector<double> poisson_schedule(double rate, double tau, Rng& rng) {
    if (!(rate > 0.0)) throw DomainError("visit rate must be positive");
    std::vector<double> v;
    double t = 0.0;
    while (true) {
        t += -std::log(uniform_open(rng)) / rate;
        if (t > tau) break;
        v.push_back(t);
    }
    return v;
}

/// Window of the visit schedule that contains T. An empty schedule gives the
/// uninformative (0, inf).
inline Observation intervalize_event(double t, const std::vector<double>& visits, std::vector<double> covariates = {}) {
    if (visits.empty() || t > visits.back()) {
        const double l = visits.empty() ? 0.0 : visits.back();
        return Observation{l, kInfinity, std::move(covariates), CensorKind::RightCensored};
    }
    const auto it = std::lower_bound(visits.begin(), visits.end(), t);  // first visit >= t
    if (it == visits.begin()) return Observation{0.0, *it, std::move(covariates), CensorKind::LeftCensored};
    return Observation{*(it - 1), *it, std::move(covariates), CensorKind::Interval};
}

struct CensoringSummary {
    double interval = 0.0;
    double left = 0.0;
    double right = 0.0;
    /// Right-censored at 0, i.e. (0, inf); counted inside `right` as well.
    double uninformative = 0.0;
};

struct SimulatedDataset {
    ScenarioConfig config;
    Dataset dataset;
    std::vector<double> true_times;
    CensoringSummary censoring;

    double true_survival(std::size_t i, double t) const {
        const auto p = config.true_params();
        return family_survival(config.family, t, p.linear_predictor(dataset.observations[i].covariates), p.log_shape);
    }
};

inline SimulatedDataset generate_dataset(const ScenarioConfig& c) {
    c.validate();
    Rng event_rng = make_rng(c.seed, {0});
    Rng visit_rng = make_rng(c.seed, {1});
    const auto draws = draw_event_times(c, event_rng);
    const auto shared = c.schedule.kind == ScheduleKind::Fixed ? fixed_schedule(c.tau, c.schedule.width) : std::vector<double>{};

    SimulatedDataset s;
    s.config = c;
    s.true_times = draws.times;
    std::vector<Observation> obs;
    obs.reserve(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::vector<double> x{draws.x(r, 0), draws.x(r, 1)};
        if (c.schedule.kind == ScheduleKind::Fixed) {
            obs.push_back(intervalize_event(draws.times[i], shared, std::move(x)));
        } else {
            obs.push_back(intervalize_event(draws.times[i], poisson_schedule(c.schedule.rate, c.tau, visit_rng), std::move(x)));
        }
        const auto& o = obs.back();
        switch (o.kind) {
            case CensorKind::Interval: s.censoring.interval += 1.0; break;
            case CensorKind::LeftCensored: s.censoring.left += 1.0; break;
            default:
                s.censoring.right += 1.0;
                if (o.left == 0.0) s.censoring.uninformative += 1.0;
        }
    }
    const double n = static_cast<double>(c.n);
    s.censoring.interval /= n;
    s.censoring.left /= n;
    s.censoring.right /= n;
    s.censoring.uninformative /= n;
    s.dataset = Dataset(std::move(obs), {"x1", "x2"});
    return s;
}

/// Nodes and weights of the n-point Gauss-Hermite rule for E f(Z), Z ~ N(0, 1)
/// (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> normal_quadrature(int n) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    std::vector<double> nodes(static_cast<std::size_t>(n)), weights(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
        weights[static_cast<std::size_t>(k)] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    }
    return {nodes, weights};
}

/// Population survival E_x S(t | x) over the scenario's covariate
/// distribution; the target of a covariate-free estimator.
inline double marginal_true_survival(const ScenarioConfig& c, double t) {
    static const auto quad = normal_quadrature(40);
    const auto p = c.true_params();
    double s = 0.0;
    for (double x1 : {0.0, 1.0}) {
        for (std::size_t k = 0; k < quad.first.size(); ++k) {
            const double eta = p.mu + p.beta[0] * x1 + p.beta[1] * quad.first[k];
            s += 0.5 * quad.second[k] * family_survival(c.family, t, eta, p.log_shape);
        }
    }
    return s;
}

/// 30 cells: n in {50, 100, 500} x (Weibull kappa in {1.2, 1.5, 2.0} or
/// log-normal sigma in {0.5, 0.8}) x schedule in {Fixed(3), Poisson(0.8)}.
inline std::vector<ScenarioConfig> scenario_grid(std::uint64_t base_seed = 2024) {
    std::vector<ScenarioConfig> grid;
    std::uint64_t cell = 0;
    for (std::size_t n : {50u, 100u, 500u}) {
        for (FamilyKind f : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
            const std::vector<double> shapes = f == FamilyKind::Weibull ? std::vector<double>{1.2, 1.5, 2.0}
                                                                        : std::vector<double>{0.5, 0.8};
            for (double sh : shapes) {
                for (const auto& sched : {Schedule::fixed(3.0), Schedule::poisson(0.8)}) {
                    grid.push_back(make_scenario(n, f, sh, sched, derive_seed(base_seed, {cell++})));
                }
            }
        }
    }
    return grid;
}

}  // namespace intercens
