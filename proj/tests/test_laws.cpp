#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gwspeed/laws.hpp"
#include "oracles.hpp"

using namespace gwspeed;

namespace {
OffspringLaw example_law() { return OffspringLaw({{1, 0.5}, {2, 0.5}}); }
}

TEST_CASE("offspring law moments and flags") {
    const OffspringLaw law = example_law();
    CHECK(law.mean() == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(law.second_moment() == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(law.supercritical());
    CHECK(!law.has_leaves());
    CHECK(law.prob(1) == 0.5);
    CHECK(law.prob(3) == 0.0);
    CHECK(law.max_support() == 2);

    CHECK(OffspringLaw({{0, 0.5}, {1, 0.5}}).has_leaves());
    CHECK(!OffspringLaw({{0, 0.5}, {1, 0.5}}).supercritical());
    CHECK_THROWS_AS(OffspringLaw({{0, 0.5}, {1, 0.6}}), std::invalid_argument);
    CHECK_THROWS_AS(OffspringLaw({{-1, 1.0}}), std::invalid_argument);
    // duplicate entries merge
    CHECK(OffspringLaw({{1, 0.25}, {1, 0.25}, {2, 0.5}}).prob(1) == 0.5);
}

TEST_CASE("pgf is nondecreasing, convex, and 1 at 1") {
    const OffspringLaw law({{0, 0.12}, {1, 0.56}, {2, 0.32}});
    CHECK(pgf_eval(law, 1.0) == 1.0);
    double prev = pgf_eval(law, 0.0);
    double prev_slope = -1.0;
    for (int i = 1; i <= 20; ++i) {
        const double s = i / 20.0;
        const double cur = pgf_eval(law, s);
        CHECK(cur >= prev);
        const double slope = cur - prev;
        CHECK(slope >= prev_slope - 1e-15);
        prev = cur;
        prev_slope = slope;
    }
    CHECK(pgf_derivative(law, 1.0) == doctest::Approx(law.mean()).epsilon(1e-14));
    CHECK_THROWS_AS(pgf_eval(law, 1.5), std::domain_error);
}

TEST_CASE("binomial thinning") {
    const OffspringLaw law = example_law();
    // no thinning / total thinning
    CHECK(thinned_law(law, 0.0).prob(1) == 0.5);
    CHECK(thinned_law(law, 0.0).prob(2) == 0.5);
    CHECK(thinned_law(law, 1.0).prob(0) == 1.0);
    // hand-enumerated convolution at alpha = 0.2
    const OffspringLaw thinned = thinned_law(law, 0.2);
    CHECK(thinned.prob(0) == doctest::Approx(0.12).epsilon(1e-14));
    CHECK(thinned.prob(1) == doctest::Approx(0.56).epsilon(1e-14));
    CHECK(thinned.prob(2) == doctest::Approx(0.32).epsilon(1e-14));
    // mean scales by (1 - alpha) across the whole grid
    for (int i = 0; i <= 10; ++i) {
        const double alpha = i / 10.0;
        CHECK(thinned_law(law, alpha).mean() ==
              doctest::Approx((1.0 - alpha) * law.mean()).epsilon(1e-12));
    }
}

TEST_CASE("extinction probability against the quadratic closed form") {
    const OffspringLaw thinned = thinned_law(example_law(), 0.2);
    const double q = extinction_probability(thinned);
    CHECK(q == doctest::Approx(0.375).epsilon(1e-10));
    CHECK(q == doctest::Approx(oracles::quadratic_extinction(0.12, 0.56, 0.32))
                   .epsilon(1e-10));
    // degenerate cases
    CHECK(extinction_probability(example_law()) == 0.0);
    CHECK(extinction_probability(OffspringLaw({{0, 0.5}, {2, 0.5}})) == 1.0);
    // nondecreasing in the thinning probability
    double prev = 0.0;
    for (int i = 0; i <= 10; ++i) {
        const double cur = extinction_probability(thinned_law(example_law(), i / 10.0));
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
}

TEST_CASE("total progeny moments against series enumeration") {
    const OffspringLaw bernoulli({{0, 0.5}, {1, 0.5}});
    const auto [t1, t2] = progeny_moments(bernoulli);
    CHECK(t1 == 2.0);
    CHECK(t2 == 6.0);
    const OffspringLaw ternary({{0, 0.7}, {1, 0.1}, {2, 0.2}});
    const auto [u1, u2] = progeny_moments(ternary);
    CHECK(u1 == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(u2 == doctest::Approx(9.2).epsilon(1e-12));
    CHECK_THROWS_AS(progeny_moments(example_law()), std::invalid_argument);

    // Enumerate P(T = n) far enough that the residual mass is negligible and
    // compare the probability-weighted sums with the closed forms.
    for (const OffspringLaw& law : {bernoulli, ternary}) {
        const auto pmf = oracles::total_progeny_pmf(law, 400);
        double mass = 0.0, m1 = 0.0, m2 = 0.0;
        for (std::size_t n = 0; n < pmf.size(); ++n) {
            mass += pmf[n];
            m1 += static_cast<double>(n) * pmf[n];
            m2 += static_cast<double>(n) * static_cast<double>(n) * pmf[n];
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        const auto [e1, e2] = progeny_moments(law);
        CHECK(m1 == doctest::Approx(e1).epsilon(1e-9));
        CHECK(m2 == doctest::Approx(e2).epsilon(1e-9));
        // small sizes individually positive and bounded
        CHECK(pmf[0] == 0.0);
        CHECK(pmf[1] == law.prob(0));
    }
}

TEST_CASE("dual law and harris decomposition") {
    const OffspringLaw thinned = thinned_law(example_law(), 0.2);
    const OffspringLaw dual = dual_law(thinned);
    double total = 0.0;
    for (const auto& [k, p] : dual.pmf()) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dual.mean() < 1.0);
    // p_k q^{k-1} with q = 3/8: (0.12/0.375, 0.56, 0.32*0.375) = (.32,.56,.12)
    CHECK(dual.prob(0) == doctest::Approx(0.32).epsilon(1e-10));
    CHECK(dual.prob(1) == doctest::Approx(0.56).epsilon(1e-10));
    CHECK(dual.prob(2) == doctest::Approx(0.12).epsilon(1e-10));

    const HarrisLaws harris = harris_laws(thinned);
    CHECK(!harris.backbone.has_leaves());
    CHECK(harris.backbone.mean() == doctest::Approx(thinned.mean()).epsilon(1e-12));
    CHECK(harris.backbone.prob(1) == doctest::Approx(0.8).epsilon(1e-10));
    CHECK(harris.backbone.prob(2) == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(harris.bush.prob(0) == doctest::Approx(0.32).epsilon(1e-10));

    // q = 0: backbone is the law itself, bushes are empty
    const HarrisLaws trivial = harris_laws(example_law());
    CHECK(trivial.backbone.prob(1) == 0.5);
    CHECK(trivial.bush.prob(0) == 1.0);
}

TEST_CASE("conductance law and epsilon mixture") {
    const ConductanceLaw two_atom({{0.5, 0.5}, {2.0, 0.5}}, 0.5);
    CHECK(two_atom.mean() == doctest::Approx(1.25).epsilon(1e-14));
    CHECK_THROWS_AS(ConductanceLaw({{0.1, 1.0}}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(ConductanceLaw({{1.0, 0.9}}, 0.5), std::invalid_argument);

    const ConductanceLaw doubled = two_atom.scaled(2.0);
    CHECK(doubled.atoms()[0].first == 1.0);
    CHECK(doubled.atoms()[1].first == 4.0);

    const EpsilonMixture mix(two_atom, 0.2, 0.01);
    CHECK(mixture_mean(mix) == doctest::Approx(0.2 * 0.01 + 0.8 * 1.25).epsilon(1e-14));
    CHECK(mix.elliptic());
    CHECK(!mix.with_epsilon(0.0).elliptic());
    CHECK(EpsilonMixture::pure(two_atom).elliptic());

    // sampling frequency of the epsilon atom, 3 sigma
    Rng rng(42);
    const int n = 200'000;
    int marked = 0;
    for (int i = 0; i < n; ++i) {
        const EpsilonSample s = mix.sample(rng);
        if (s.is_epsilon) {
            CHECK(s.value == 0.01);
            ++marked;
        } else {
            CHECK((s.value == 0.5 || s.value == 2.0));
        }
    }
    const double freq = static_cast<double>(marked) / n;
    CHECK(std::abs(freq - 0.2) <= 3.0 * std::sqrt(0.2 * 0.8 / n));
}

TEST_CASE("mixture sampling consumes a fixed draw count for coupling") {
    const ConductanceLaw base = ConductanceLaw::unit();
    const EpsilonMixture a(base, 0.3, 0.1), b(base, 0.3, 0.0);
    Rng r1(7), r2(7);
    for (int i = 0; i < 1000; ++i) {
        const EpsilonSample sa = a.sample(r1);
        const EpsilonSample sb = b.sample(r2);
        CHECK(sa.is_epsilon == sb.is_epsilon);
        if (!sa.is_epsilon) CHECK(sa.value == sb.value);
    }
    CHECK(r1.next_u64() == r2.next_u64()); // streams stayed in lockstep
}
