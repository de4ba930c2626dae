#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <catch_amalgamated.hpp>

#include "intercens/diagnostics.hpp"
#include "intercens/hmc.hpp"
#include "intercens/math.hpp"

using namespace intercens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ChainMatrix column(const hmc::MultiChainOutput& out, Eigen::Index j) {
    ChainMatrix m;
    for (const auto& c : out.chains) {
        std::vector<double> v(static_cast<std::size_t>(c.draws.rows()));
        for (Eigen::Index t = 0; t < c.draws.rows(); ++t) v[static_cast<std::size_t>(t)] = c.draws(t, j);
        m.push_back(std::move(v));
    }
    return m;
}

std::vector<double> pooled(const ChainMatrix& m) {
    std::vector<double> out;
    for (const auto& c : m) out.insert(out.end(), c.begin(), c.end());
    return out;
}

/// Classic split R-hat on the raw draws, written out directly.
double classic_split_rhat(const ChainMatrix& chains) {
    ChainMatrix split;
    for (const auto& c : chains) {
        const auto h = c.size() / 2;
        split.emplace_back(c.begin(), c.begin() + static_cast<long>(h));
        split.emplace_back(c.end() - static_cast<long>(h), c.end());
    }
    const double n = static_cast<double>(split.front().size());
    std::vector<double> means, vars;
    for (const auto& c : split) {
        means.push_back(math::mean(c));
        vars.push_back(math::variance(c));
    }
    const double w = math::mean(vars);
    const double b = n * math::variance(means);
    return std::sqrt(((n - 1) / n * w + b / n) / w);
}

}  // namespace

TEST_CASE("conjugate exponential-gamma posterior", "[hmc][oracle]") {
    // t_i ~ Exp(rate lambda), lambda ~ Gamma(a, b); sample theta = -log lambda.
    const std::vector<double> t{0.8, 2.1, 0.3, 1.7, 4.0, 0.9, 1.1, 2.6, 0.5, 1.4};
    const double a = 2.0, b = 1.0;
    double s = 0.0;
    for (double v : t) s += v;
    const double shape = a + static_cast<double>(t.size()), rate = b + s;
    hmc::LogDensity target = [&](const hmc::Vector& th, hmc::Vector& g) {
        const double lam = std::exp(-th[0]);
        g.resize(1);
        g[0] = -shape + rate * lam;
        return -shape * th[0] - rate * lam;
    };
    hmc::Options opts;
    opts.warmup = 1000;
    opts.iters = 4000;
    std::vector<hmc::Vector> inits{hmc::Vector::Constant(1, -1.0), hmc::Vector::Constant(1, 1.0),
                                   hmc::Vector::Constant(1, 0.0), hmc::Vector::Constant(1, -0.5)};
    const auto out = hmc::sample(target, hmc::Matrix::Identity(1, 1), inits, opts, 2024, 2);
    const auto draws = column(out, 0);
    const auto all = pooled(draws);
    std::vector<double> lam(all.size());
    for (std::size_t k = 0; k < all.size(); ++k) lam[k] = std::exp(-all[k]);

    const auto diag = chain_diagnostics(draws);
    CHECK(diag.rhat < 1.01);
    CHECK(diag.ess_bulk > 1000);
    const double mc = 4.0 / std::sqrt(diag.ess_bulk);
    // E[lambda] = shape / rate, E[log lambda] = psi(shape) - log(rate).
    const double mean_lam = shape / rate;
    CHECK_THAT(math::mean(lam), WithinAbs(mean_lam, mc * std::sqrt(shape) / rate));
    CHECK_THAT(-math::mean(all), WithinAbs(boost::math::digamma(shape) - std::log(rate), mc * std::sqrt(boost::math::trigamma(shape))));
    CHECK(out.divergent == 0);
    for (const auto& c : out.chains) {
        CHECK(c.mean_accept > 0.6);
        CHECK(c.mean_accept < 0.98);
    }
}

TEST_CASE("correlated 2-D normal", "[hmc]") {
    Eigen::Matrix2d cov;
    cov << 4.0, 1.8, 1.8, 1.0;
    const Eigen::Matrix2d prec = cov.inverse();
    const Eigen::Vector2d m(1.0, -2.0);
    hmc::LogDensity target = [&](const hmc::Vector& th, hmc::Vector& g) {
        const Eigen::Vector2d d = th - m;
        g = -prec * d;
        return -0.5 * d.dot(prec * d);
    };
    hmc::Options opts;
    opts.warmup = 600;
    opts.iters = 1500;
    std::vector<hmc::Vector> inits(4, hmc::Vector::Zero(2));
    const auto one = hmc::sample(target, hmc::Matrix::Identity(2, 2), inits, opts, 9, 1);
    const auto many = hmc::sample(target, hmc::Matrix::Identity(2, 2), inits, opts, 9, 4);
    for (std::size_t c = 0; c < one.chains.size(); ++c) CHECK(one.chains[c].draws == many.chains[c].draws);

    for (Eigen::Index j = 0; j < 2; ++j) {
        const auto draws = column(one, j);
        const auto d = chain_diagnostics(draws);
        CHECK(d.rhat < 1.01);
        CHECK(d.ess_bulk > 1000);
        const double sd = std::sqrt(cov(j, j));
        CHECK_THAT(math::mean(pooled(draws)), WithinAbs(m[j], 4.0 * sd / std::sqrt(d.ess_bulk)));
        CHECK_THAT(std::sqrt(math::variance(pooled(draws))), WithinRel(sd, 0.1));
    }
    // Adapted metric approximates the target covariance.
    CHECK_THAT(one.chains[0].metric(0, 1) / std::sqrt(one.chains[0].metric(0, 0) * one.chains[0].metric(1, 1)),
               WithinAbs(0.9, 0.1));
}

TEST_CASE("divergences are counted and flagged", "[hmc]") {
    // A funnel-like wall: log density drops off a cliff near 0.
    hmc::LogDensity target = [](const hmc::Vector& th, hmc::Vector& g) {
        g.resize(1);
        if (th[0] > 0.0) {
            g[0] = -1e6 * 2 * th[0];
            return -1e6 * th[0] * th[0];
        }
        g[0] = -th[0];
        return -0.5 * th[0] * th[0];
    };
    hmc::Options opts;
    opts.warmup = 200;
    opts.iters = 300;
    const auto out = hmc::sample(target, hmc::Matrix::Identity(1, 1), {hmc::Vector::Constant(1, -1.0), hmc::Vector::Constant(1, -0.5)}, opts, 3);
    CHECK(out.total_draws == 600);
    CHECK(out.divergence_warning == (out.divergent > 60));
}

TEST_CASE("metric windows tile the slow phase", "[hmc]") {
    const auto ends = hmc::metric_window_ends(1000);
    REQUIRE_FALSE(ends.empty());
    CHECK(ends.back() == 900);
    CHECK(ends.front() == 175);
    for (std::size_t k = 1; k < ends.size(); ++k) CHECK(ends[k] > ends[k - 1]);
    CHECK(hmc::metric_window_ends(10).empty());
}

TEST_CASE("dual averaging settles at the target", "[hmc]") {
    hmc::DualAveraging da(1.0, 0.8);
    // Acceptance falls off linearly with log step size; 0.8 at step 0.5.
    double step = 1.0;
    for (int i = 0; i < 2000; ++i) step = da.update(std::clamp(0.8 - 0.5 * std::log(step / 0.5), 0.0, 1.0));
    CHECK_THAT(da.final_step(), WithinRel(0.5, 0.05));
}

TEST_CASE("diagnostics on independent draws", "[diagnostics][oracle]") {
    Rng rng = make_rng(77);
    std::normal_distribution<double> z(0.0, 1.0);
    ChainMatrix chains(4, std::vector<double>(2000));
    for (auto& c : chains) {
        for (auto& v : c) v = z(rng);
    }
    const auto d = chain_diagnostics(chains);
    CHECK_THAT(d.rhat, WithinAbs(1.0, 0.01));
    CHECK_THAT(d.rhat, WithinAbs(classic_split_rhat(chains), 0.005));
    CHECK_THAT(d.ess_bulk, WithinRel(8000.0, 0.15));
    CHECK_THAT(d.ess_tail, WithinRel(8000.0, 0.25));
    CHECK_FALSE(d.degenerate);
}

TEST_CASE("ESS of an AR(1) chain", "[diagnostics][oracle]") {
    Rng rng = make_rng(79);
    std::normal_distribution<double> z(0.0, 1.0);
    const double rho = 0.5;
    ChainMatrix chains(4, std::vector<double>(4000));
    for (auto& c : chains) {
        double x = z(rng) / std::sqrt(1 - rho * rho);
        for (auto& v : c) {
            x = rho * x + z(rng);
            v = x;
        }
    }
    // N (1 - rho) / (1 + rho)
    CHECK_THAT(chain_diagnostics(chains).ess_bulk, WithinRel(16000.0 / 3.0, 0.15));
}

TEST_CASE("R-hat detects chains that disagree", "[diagnostics]") {
    Rng rng = make_rng(83);
    std::normal_distribution<double> z(0.0, 1.0);
    ChainMatrix chains(4, std::vector<double>(500));
    for (std::size_t c = 0; c < chains.size(); ++c) {
        for (auto& v : chains[c]) v = z(rng) + (c == 0 ? 3.0 : 0.0);
    }
    const auto d = chain_diagnostics(chains);
    // Rank normalization damps the shift, so only the direction is compared.
    CHECK(d.rhat > 1.1);
    CHECK(classic_split_rhat(chains) > 1.1);
}

TEST_CASE("degenerate chains report sentinels", "[diagnostics]") {
    const auto same = chain_diagnostics(ChainMatrix(3, std::vector<double>(10, 2.0)));
    CHECK(same.rhat == 1.0);
    CHECK(same.ess_bulk == 1.0);
    CHECK(same.degenerate);
    const auto stuck = chain_diagnostics({std::vector<double>(10, 1.0), std::vector<double>(10, 2.0)});
    CHECK(std::isinf(stuck.rhat));
    CHECK(stuck.degenerate);
    CHECK_THROWS_AS(chain_diagnostics({std::vector<double>(10, 1.0)}), DomainError);
    CHECK_THROWS_AS(chain_diagnostics({std::vector<double>(10, 1.0), std::vector<double>(9, 1.0)}), DomainError);
}
