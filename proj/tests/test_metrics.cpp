#include <cmath>

#include <catch_amalgamated.hpp>

#include "intercens/metrics.hpp"

using namespace intercens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Kaplan-Meier hand table", "[metrics][oracle]") {
    const auto km = kaplan_meier({{1, true}, {2, false}, {3, true}, {3, true}, {4, false}, {5, true}});
    CHECK(km.knots() == std::vector<double>{1, 3, 5});
    CHECK_THAT(km(1.0), WithinRel(5.0 / 6.0, 1e-15));
    CHECK_THAT(km(3.5), WithinRel(5.0 / 12.0, 1e-15));
    CHECK(km(5.0) == 0.0);
    CHECK(km(0.5) == 1.0);
}

TEST_CASE("censored times tied with events stay at risk", "[metrics]") {
    const auto km = kaplan_meier({{2, false}, {2, true}, {3, true}});
    CHECK_THAT(km(2.0), WithinRel(2.0 / 3.0, 1e-15));
    CHECK(km(3.0) == 0.0);
    const auto none = kaplan_meier({{1, false}, {2, false}});
    CHECK(none.knots().empty());
    CHECK(none(10.0) == 1.0);
}

TEST_CASE("pseudo right-censoring of interval data", "[metrics]") {
    const Dataset d({Observation::make(0, 3), Observation::make(3, 6), Observation::make(6, kInfinity),
                     Observation::make(4, 4)},
                    {});
    const auto km = km_pseudo_right(d);
    CHECK(km.knots() == std::vector<double>{3, 4, 6});
    CHECK_THAT(km(3.0), WithinRel(0.75, 1e-15));
    CHECK_THAT(km(4.0), WithinRel(0.5, 1e-15));
    // The row censored at 6 is still at risk for the event tied with it.
    CHECK_THAT(km(6.0), WithinRel(0.25, 1e-15));
}

TEST_CASE("ISE", "[metrics][oracle]") {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    const auto a = ise(one, zero, 2.0);
    CHECK_THAT(a.raw, WithinRel(2.0, 1e-12));
    CHECK_THAT(a.normalized, WithinRel(1.0, 1e-12));
    CHECK(ise(one, one, 5.0).raw == 0.0);
    const auto b = ise([](double t) { return std::exp(-t); }, zero, 5.0);
    CHECK_THAT(b.raw, WithinRel((1.0 - std::exp(-10.0)) / 2.0, 1e-4));
    CHECK_THROWS_AS(ise(one, zero, 0.0), DomainError);
}

TEST_CASE("Brier score and its integral", "[metrics][oracle]") {
    CHECK_THAT(brier_score({0.5, 1.0}, {1.0, 3.0}, 2.0), WithinRel(0.125, 1e-15));
    CHECK_THROWS_AS(brier_score({0.5}, {1.0, 2.0}, 1.0), DomainError);

    const std::vector<double> truths{1.0, 2.5, 4.0, 7.0};
    const double perfect = ibs([&](std::size_t i, double t) { return truths[i] > t ? 1.0 : 0.0; }, truths, 10.0);
    CHECK_THAT(perfect, WithinAbs(0.0, 1e-12));
    const double half = ibs([](std::size_t, double) { return 0.5; }, truths, 10.0);
    CHECK_THAT(half, WithinAbs(0.25, 1e-12));
    // Always predicting survival: BS(t) is the fraction already dead.
    const double surv = ibs([](std::size_t, double) { return 1.0; }, truths, 10.0, 100001);
    const double exact = ((10 - 1.0) + (10 - 2.5) + (10 - 4.0) + (10 - 7.0)) / 4.0 / 10.0;
    CHECK_THAT(surv, WithinAbs(exact, 1e-4));
}

TEST_CASE("empirical coverage", "[metrics]") {
    std::vector<SurvivalBand> bands(60);
    for (std::size_t r = 0; r < bands.size(); ++r) {
        bands[r].grid = {1.0, 2.0};
        bands[r].lower = {0.4, 0.2};
        bands[r].upper = {0.6, r < 30 ? 0.4 : 0.25};
        bands[r].median = {0.5, 0.3};
    }
    auto truth = [](double t) { return t == 1.0 ? 0.5 : 0.3; };
    const auto c = empirical_coverage(bands, truth);
    CHECK_THAT(c.pointwise, WithinRel(0.75, 1e-15));
    CHECK_THAT(c.simultaneous, WithinRel(0.5, 1e-15));
    bands.resize(49);
    CHECK_THROWS_AS(empirical_coverage(bands, truth), DomainError);
}

TEST_CASE("metric properties", "[metrics][property]") {
    auto a = [](double t) { return std::exp(-t / 3.0); };
    auto b = [](double t) { return 1.0 / (1.0 + t); };
    CHECK_THAT(ise(a, b, 10.0).raw, WithinRel(ise(b, a, 10.0).raw, 1e-14));

    const auto km = kaplan_meier({{1, true}, {2, true}, {3, true}, {4, true}});
    CHECK_THAT(km(1.0), WithinRel(0.75, 1e-15));
    CHECK_THAT(km(2.0), WithinRel(0.5, 1e-15));
    CHECK(km(4.0) == 0.0);

    // Identical predictions S(t) for draws from S: E[BS(t)] = S (1 - S).
    Rng rng = make_rng(5);
    std::vector<double> t(40000);
    for (auto& v : t) v = -3.0 * std::log(uniform_open(rng));
    for (double at : {1.0, 3.0, 6.0}) {
        std::vector<double> pred(t.size(), a(at));
        CHECK_THAT(brier_score(pred, t, at), WithinAbs(a(at) * (1 - a(at)), 0.005));
    }
    const double oracle = ibs([&](std::size_t, double s) { return a(s); }, t, 10.0);
    const double wrong = ibs([&](std::size_t, double s) { return b(s); }, t, 10.0);
    const double flat = ibs([](std::size_t, double) { return 0.5; }, t, 10.0);
    for (double v : {oracle, wrong, flat}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(oracle <= wrong);
    CHECK(oracle <= flat);
}

TEST_CASE("coverage extremes", "[metrics]") {
    std::vector<SurvivalBand> wide(50), thin(50);
    for (std::size_t r = 0; r < 50; ++r) {
        wide[r].grid = thin[r].grid = {1.0, 2.0, 3.0};
        wide[r].lower = {0, 0, 0};
        wide[r].upper = {1, 1, 1};
        thin[r].lower = thin[r].upper = {0.2, 0.2, 0.2};
        wide[r].median = thin[r].median = {0.5, 0.5, 0.5};
    }
    auto truth = [](double t) { return std::exp(-t); };
    const auto w = empirical_coverage(wide, truth);
    CHECK(w.pointwise == 1.0);
    CHECK(w.simultaneous == 1.0);
    const auto z = empirical_coverage(thin, truth);
    CHECK(z.pointwise == 0.0);
    CHECK(z.simultaneous == 0.0);
}
