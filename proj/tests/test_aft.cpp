#include <cmath>
#include <random>

#include <catch_amalgamated.hpp>

#include "intercens/aft.hpp"
#include "intercens/random.hpp"

using namespace intercens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

/// Weibull or log-normal AFT sample observed through windows of width w up to
/// tau, plus a few exact times.
Dataset simulate(FamilyKind fam, const AftParams& truth, std::size_t n, double w, double tau, Rng& rng,
                 bool with_exact = true) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x;
        for (std::size_t j = 0; j < truth.beta.size(); ++j) x.push_back(j == 0 ? (u(rng) < 0.5 ? 1.0 : 0.0) : z(rng));
        const double eps = fam == FamilyKind::Weibull ? std::log(-std::log(1.0 - u(rng))) : z(rng);
        const double t = std::exp(truth.linear_predictor(x) + std::exp(fam == FamilyKind::Weibull ? -truth.log_shape : truth.log_shape) * eps);
        if (with_exact && i % 10 == 0 && t < tau) {
            obs.push_back(Observation::make(t, t, x));
        } else if (t > tau) {
            obs.push_back(Observation::make(std::floor(tau / w) * w, kInfinity, x));
        } else {
            const double k = std::ceil(t / w);
            obs.push_back(Observation::make((k - 1) * w, k * w, x));
        }
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < truth.beta.size(); ++j) names.push_back("x" + std::to_string(j + 1));
    return Dataset(std::move(obs), names);
}

/// Per-observation log-likelihood straight from the survival and density functions.
double direct_loglik(FamilyKind fam, const AftParams& p, const Dataset& d) {
    double total = 0.0;
    for (const auto& o : d.observations) {
        const double eta = p.linear_predictor(o.covariates);
        auto s = [&](double t) { return family_survival(fam, t, eta, p.log_shape); };
        auto f = [&](double t) { return family_density(fam, t, eta, p.log_shape); };
        total += log_lik_contribution(o, s, f);
    }
    return total;
}

}  // namespace

TEST_CASE("likelihood matches the direct survival-difference formula", "[aft][oracle]") {
    Rng rng = make_rng(41);
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const AftParams truth{2.0, {0.4, -0.2}, std::log(1.4)};
        const auto d = simulate(fam, truth, 60, 3.0, 15.0, rng);
        for (const AftParams& p : {truth, AftParams{1.5, {0.1, 0.3}, -0.3}, AftParams{2.8, {-0.5, 0.0}, 0.6}}) {
            CHECK_THAT(aft_interval_loglik(p, d, fam), WithinRel(direct_loglik(fam, p, d), 1e-9));
        }
    }
}

TEST_CASE("analytic gradient matches central differences", "[aft][property]") {
    Rng rng = make_rng(43);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto d = simulate(fam, {2.0, {0.4, -0.2}, 0.2}, 80, 3.0, 15.0, rng);
        for (int rep = 0; rep < 10; ++rep) {
            const AftParams p{2.0 + 0.5 * u(rng), {0.4 + 0.5 * u(rng), -0.2 + 0.5 * u(rng)}, 0.2 + 0.5 * u(rng)};
            const auto g = aft_loglik_grad(p, d, fam);
            const auto theta = p.flatten();
            for (std::size_t j = 0; j < theta.size(); ++j) {
                const double h = 1e-6;
                auto up = theta, dn = theta;
                up[j] += h;
                dn[j] -= h;
                const double fd = (aft_interval_loglik(AftParams::unflatten(up), d, fam) -
                                   aft_interval_loglik(AftParams::unflatten(dn), d, fam)) /
                                  (2 * h);
                CHECK_THAT(g[j], WithinAbs(fd, 1e-5 * std::max(1.0, std::abs(fd))));
            }
        }
    }
}

TEST_CASE("extreme windows stay finite", "[aft]") {
    // Far tails where naive S(L) - S(R) cancels to zero.
    const Dataset d({Observation::make(1e-6, 2e-6), Observation::make(400, 500), Observation::make(900, kInfinity)}, {});
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        Eigen::VectorXd g;
        const double v = AftLikelihood(d, fam).evaluate(Eigen::Vector2d(2.0, 0.5), &g);
        CHECK(std::isfinite(v));
        CHECK(g.allFinite());
    }
}

TEST_CASE("2-D grid oracle for the intercept-only MLE", "[aft][oracle]") {
    Rng rng = make_rng(47);
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto d = simulate(fam, {2.2, {}, std::log(1.5)}, 150, 2.0, 20.0, rng);
        double best = -kInfinity, bm = 0.0, bs = 0.0;
        for (double mu = 1.0; mu <= 3.5; mu += 0.005) {
            for (double s = -1.0; s <= 1.0; s += 0.005) {
                const double v = aft_interval_loglik({mu, {}, s}, d, fam);
                if (v > best) {
                    best = v;
                    bm = mu;
                    bs = s;
                }
            }
        }
        const auto fit = fit_aft_mle(d, fam);
        CHECK(fit.converged);
        CHECK(fit.loglik >= best - 1e-9);
        CHECK_THAT(fit.params.mu, WithinAbs(bm, 0.01));
        CHECK_THAT(fit.params.log_shape, WithinAbs(bs, 0.01));
    }
}

TEST_CASE("exponential MLE is total time over events", "[aft][oracle]") {
    const std::vector<double> times{1.2, 0.4, 3.3, 2.0, 0.9, 5.1, 1.7};
    std::vector<Observation> obs;
    for (double t : times) obs.push_back(Observation::make(t, t));
    obs.push_back(Observation::make(4.0, kInfinity));
    const Dataset d(std::move(obs), {});
    AftOptions opts;
    opts.fixed_log_shape = 0.0;
    const auto fit = fit_aft_mle(d, FamilyKind::Weibull, std::nullopt, opts);
    double total = 4.0;
    for (double t : times) total += t;
    const double events = static_cast<double>(times.size());
    CHECK_THAT(fit.params.mu, WithinAbs(std::log(total / events), 1e-6));
    CHECK(fit.params.log_shape == 0.0);
    // Observed information for log-mean is the number of events.
    REQUIRE(fit.covariance_available);
    CHECK_THAT(fit.covariance(0, 0), WithinRel(1.0 / events, 1e-4));
    CHECK(fit.covariance(1, 1) == 0.0);
}

TEST_CASE("parameter recovery and standard errors", "[aft]") {
    Rng rng = make_rng(53);
    const AftParams truth{std::log(8.0), {0.5, -0.3}, std::log(1.5)};
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto d = simulate(fam, truth, 2000, 1.0, 30.0, rng, false);
        const auto fit = fit_aft_mle(d, fam);
        REQUIRE(fit.converged);
        REQUIRE(fit.covariance_available);
        const auto est = fit.params.flatten();
        const auto tru = truth.flatten();
        for (std::size_t j = 0; j < est.size(); ++j) CHECK(std::abs(est[j] - tru[j]) < 4.0 * fit.standard_error(j));
        const auto trs = time_ratios(fit);
        REQUIRE(trs.size() == 2);
        CHECK(trs[0].term == "x1");
        for (const auto& tr : trs) {
            CHECK_THAT(tr.ratio, WithinRel(std::exp(tr.estimate), 1e-12));
            CHECK(tr.lower < tr.ratio);
            CHECK(tr.ratio < tr.upper);
            CHECK_THAT(std::log(tr.upper) - tr.estimate, WithinRel(tr.estimate - std::log(tr.lower), 1e-9));
        }
    }
}

TEST_CASE("covariates far from zero do not slow the fit", "[aft]") {
    Rng rng = make_rng(59);
    auto d = simulate(FamilyKind::Weibull, {2.0, {0.3, 0.2}, 0.3}, 200, 2.0, 20.0, rng, false);
    for (auto& o : d.observations) o.covariates[1] = 60.0 + 10.0 * o.covariates[1];
    const auto fit = fit_aft_mle(d, FamilyKind::Weibull);
    CHECK(fit.converged);
    CHECK(fit.covariance_available);
}

TEST_CASE("fit input checks", "[aft]") {
    const Dataset tiny({Observation::make(1, 2), Observation::make(2, 3)}, {});
    CHECK_THROWS_AS(fit_aft_mle(tiny, FamilyKind::Weibull), DomainError);

    std::vector<Observation> obs;
    for (int i = 0; i < 10; ++i) obs.push_back(Observation::make(i, i + 1.0, {double(i % 3), 2.0 * (i % 3)}));
    CHECK_THROWS_AS(fit_aft_mle(Dataset(obs, {"a", "b"}), FamilyKind::Weibull), DomainError);

    std::vector<Observation> ok;
    for (int i = 0; i < 10; ++i) ok.push_back(Observation::make(i + 1.0, i + 2.0));
    try {
        fit_aft_mle(Dataset(ok, {}), FamilyKind::Weibull, AftParams{-700.0, {}, 3.0});
        FAIL("expected a zero-mass error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("zero-mass observations: 1, 2") != std::string::npos);
    }
    CHECK(zero_mass_observations(AftParams{-700.0, {}, 3.0}, Dataset(ok, {}), FamilyKind::Weibull).size() == 10);
}

TEST_CASE("predict_survival", "[aft]") {
    const AftParams p{2.0, {0.5}, std::log(1.5)};
    const std::vector<double> grid{0.0, 1.0, 5.0, 20.0};
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto s = predict_survival(fam, p, {1.0}, grid);
        CHECK(s[0] == 1.0);
        for (std::size_t g = 1; g < s.size(); ++g) CHECK(s[g] < s[g - 1]);
        CHECK_THAT(s[2], WithinRel(family_survival(fam, 5.0, 2.5, p.log_shape), 1e-12));
    }
    CHECK_THROWS_AS(predict_survival(FamilyKind::Weibull, p, {1.0, 2.0}, grid), DomainError);
    CHECK_THROWS_AS(predict_survival(FamilyKind::Weibull, p, {1.0}, {2.0, 1.0}), DomainError);
}

TEST_CASE("single-observation terms", "[aft][oracle]") {
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        CHECK(aft_interval_loglik({1.0, {}, 0.3}, Dataset({Observation::make(0, kInfinity)}, {}), fam) == 0.0);
    }
    // Right-censored at c with shape 1: log S(c) = -c / e^eta.
    const Dataset rc({Observation::make(2.5, kInfinity)}, {});
    CHECK_THAT(aft_interval_loglik({0.7, {}, 0.0}, rc, FamilyKind::Weibull), WithinRel(-2.5 / std::exp(0.7), 1e-14));

    // Five mixed rows against hand-written terms.
    const Dataset five({Observation::make(0, 2), Observation::make(1, 3), Observation::make(2, 2), Observation::make(4, kInfinity),
                        Observation::make(0.5, 0.75)},
                       {});
    const double mu = 1.1, s = 0.4, k = std::exp(s);
    auto sw = [&](double t) { return std::exp(-std::pow(t / std::exp(mu), k)); };
    const double fw = k / std::exp(mu) * std::pow(2.0 / std::exp(mu), k - 1) * sw(2.0);
    const double want = std::log(1 - sw(2)) + std::log(sw(1) - sw(3)) + std::log(fw) + std::log(sw(4)) + std::log(sw(0.5) - sw(0.75));
    CHECK_THAT(aft_interval_loglik({mu, {}, s}, five, FamilyKind::Weibull), WithinAbs(want, 1e-12));

    const double sig = std::exp(s);
    auto sl = [&](double t) { return 0.5 * std::erfc((std::log(t) - mu) / sig / std::sqrt(2.0)); };
    const double fl = std::exp(-0.5 * std::pow((std::log(2.0) - mu) / sig, 2)) / (2.0 * sig * std::sqrt(2 * M_PI));
    const double want_l = std::log(1 - sl(2)) + std::log(sl(1) - sl(3)) + std::log(fl) + std::log(sl(4)) + std::log(sl(0.5) - sl(0.75));
    CHECK_THAT(aft_interval_loglik({mu, {}, s}, five, FamilyKind::LogNormal), WithinAbs(want_l, 1e-12));
}

TEST_CASE("gradient accuracy on random configurations", "[aft][property]") {
    // Five-point stencil, step 1e-3 (1 + |theta|): truncation is far below the tolerance.
    Rng rng = make_rng(61);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        for (int rep = 0; rep < 100; ++rep) {
            const auto d = simulate(fam, {2.0, {0.4, -0.2}, 0.2}, 25, 1.0 + std::abs(u(rng)), 15.0, rng);
            const AftParams p{2.0 + u(rng), {0.4 + u(rng), -0.2 + u(rng)}, 0.5 * u(rng)};
            const auto g = aft_loglik_grad(p, d, fam);
            const auto th = p.flatten();
            for (std::size_t j = 0; j < th.size(); ++j) {
                const double h = 1e-3 * (1.0 + std::abs(th[j]));
                auto at = [&](double off) {
                    auto t = th;
                    t[j] += off;
                    return aft_interval_loglik(AftParams::unflatten(t), d, fam);
                };
                const double fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
                worst = std::max(worst, std::abs(g[j] - fd) / std::max(1.0, std::abs(fd)));
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("properties of the fitted model", "[aft][property]") {
    Rng rng = make_rng(67);
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        const auto d = simulate(fam, {2.0, {0.4, -0.2}, 0.3}, 150, 2.0, 15.0, rng);
        const auto fit = fit_aft_mle(d, fam);
        REQUIRE(fit.converged);
        for (double gj : aft_loglik_grad(fit.params, d, fam)) CHECK(std::abs(gj) < 1e-6);

        // Symmetric, positive definite covariance.
        CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.covariance).eigenvalues().minCoeff() > 0.0);

        // No perturbation of radius 0.1 beats the MLE.
        std::normal_distribution<double> z(0.0, 1.0);
        const auto th = fit.params.flatten();
        for (int k = 0; k < 50; ++k) {
            std::vector<double> dir(th.size());
            double norm = 0.0;
            for (auto& v : dir) norm += (v = z(rng)) * v;
            auto t = th;
            for (std::size_t j = 0; j < t.size(); ++j) t[j] += 0.1 * dir[j] / std::sqrt(norm);
            CHECK(aft_interval_loglik(AftParams::unflatten(t), d, fam) <= fit.loglik);
        }

        // Doubling a covariate halves its coefficient and leaves the likelihood alone.
        auto d2 = d;
        for (auto& o : d2.observations) o.covariates[1] *= 2.0;
        const auto fit2 = fit_aft_mle(d2, fam);
        CHECK_THAT(fit2.loglik, WithinAbs(fit.loglik, 1e-8));
        CHECK_THAT(fit2.params.beta[1], WithinAbs(fit.params.beta[1] / 2.0, 1e-5));

        // At x = 0 prediction uses the baseline scale exp(mu).
        const auto s0 = predict_survival(fit, {0.0, 0.0}, {3.0});
        CHECK_THAT(s0[0], WithinRel(family_survival(fam, 3.0, fit.params.mu, fit.params.log_shape), 1e-12));
    }
    CHECK_THAT(weibull_survival(3.0, std::exp(2.0), 1.5), WithinRel(family_survival(FamilyKind::Weibull, 3.0, 2.0, std::log(1.5)), 1e-14));
}

TEST_CASE("symmetric covariate gives a zero gradient", "[aft]") {
    std::vector<Observation> obs;
    for (double l : {1.0, 2.0, 4.0}) {
        for (double x : {-1.0, 1.0}) obs.push_back(Observation::make(l, l + 1.0, {x}));
    }
    const Dataset d(std::move(obs), {"x"});
    for (FamilyKind fam : {FamilyKind::Weibull, FamilyKind::LogNormal}) {
        CHECK_THAT(aft_loglik_grad({1.0, {0.0}, 0.2}, d, fam)[1], WithinAbs(0.0, 1e-14));
        const auto fit = fit_aft_mle(d, fam);
        CHECK_THAT(fit.params.beta[0], WithinAbs(0.0, 1e-6));
        const auto tr = time_ratios(fit);
        CHECK_THAT(tr[0].ratio, WithinAbs(1.0, 1e-6));
        CHECK_THAT(std::log(tr[0].upper), WithinAbs(-std::log(tr[0].lower), 1e-6));
    }
}

TEST_CASE("toy data against a fine grid", "[aft][oracle]") {
    const Dataset d({Observation::make(0, 2), Observation::make(1, 3), Observation::make(2, 5), Observation::make(3, 6),
                     Observation::make(4, kInfinity), Observation::make(2.5, 2.5)},
                    {});
    double best = -kInfinity, bm = 0, bs = 0;
    for (double mu = 0.5; mu <= 2.5; mu += 1e-3) {
        for (double s = -0.5; s <= 1.5; s += 1e-3) {
            const double v = aft_interval_loglik({mu, {}, s}, d, FamilyKind::Weibull);
            if (v > best) {
                best = v;
                bm = mu;
                bs = s;
            }
        }
    }
    const auto fit = fit_aft_mle(d, FamilyKind::Weibull);
    CHECK(fit.loglik >= best - 1e-12);
    CHECK_THAT(fit.params.mu, WithinAbs(bm, 1e-3));
    CHECK_THAT(fit.params.log_shape, WithinAbs(bs, 1e-3));
}

TEST_CASE("exponential truth recovers shape one", "[aft]") {
    Rng rng = make_rng(71);
    const auto d = simulate(FamilyKind::Weibull, {2.0, {0.3}, 0.0}, 500, 2.0, 20.0, rng);
    const auto fit = fit_aft_mle(d, FamilyKind::Weibull);
    CHECK(std::exp(fit.params.log_shape) >= 0.85);
    CHECK(std::exp(fit.params.log_shape) <= 1.15);
    AftOptions opts;
    opts.fixed_log_shape = 0.0;
    const auto expo = fit_aft_mle(d, FamilyKind::Weibull, std::nullopt, opts);
    CHECK(fit.loglik >= expo.loglik);
    CHECK(fit.loglik - expo.loglik < 2.0);
}
