#include "acuity/policy.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

using namespace acuity;

namespace {

ParticleSet point_mass(double k1) {
    return ParticleSet({{0.7 * k1, k1, 1.0}}, 0.25, 0.8);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent restatement of the FrACT fitting objective: Bernoulli log
// likelihood of the history plus one correct answer at the largest size and
// one miss at the smallest.
double fract_objective(std::span<const Observation> history, double v0, double slope, double c,
                       const SizeBounds& b) {
    std::vector<Observation> all(history.begin(), history.end());
    all.push_back({b.max, true});
    all.push_back({b.min, false});
    double ll = 0.0;
    for (const auto& o : all) {
        const double p = c + (1.0 - c) * sigmoid(slope * std::log(v0 * o.size));
        ll += std::log(o.correct ? p : 1.0 - p);
    }
    return ll;
}

std::vector<Observation> logistic_history(double v0, double slope, double c, int n, Rng& rng) {
    const FractParams truth{v0, slope, c};
    std::vector<Observation> h;
    for (int i = 0; i < n; ++i) {
        const double x = std::pow(10.0, uniform(rng, -0.4, 1.0));
        h.push_back({x, bernoulli(rng, fract_logistic(x, truth, Orientation::IncreasingWithSize))});
    }
    return h;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("clamping to the displayable range") {
    const SizeBounds b{};
    CHECK(clamp_size(0.01, b).size == 0.1);
    CHECK(clamp_size(0.01, b).clamped);
    CHECK(clamp_size(500.0, b).size == 200.0);
    CHECK(clamp_size(500.0, b).clamped);
    CHECK(clamp_size(3.0, b).size == 3.0);
    CHECK_FALSE(clamp_size(3.0, b).clamped);
    CHECK_THROWS_AS(SizeBounds({5.0, 1.0}).validate(), std::invalid_argument);
}

TEST_CASE("single-particle beliefs") {
    Rng rng(1);
    const ParticleSet ps = point_mass(2.5);
    for (int i = 0; i < 50; ++i) CHECK(next_size_posterior_matching(ps, rng, {}).size == 2.5);
    CHECK(next_size_greedy_map(ps, {}).size == 2.5);

    const ParticleSet tiny = point_mass(0.05);
    const SizeChoice pm = next_size_posterior_matching(tiny, rng, {});
    CHECK(pm.size == 0.1);
    CHECK(pm.clamped);
    const SizeChoice gm = next_size_greedy_map(tiny, {});
    CHECK(gm.size == 0.1);
    CHECK(gm.clamped);
}

TEST_CASE("point-mass posterior matching coincides with greedy") {
    Rng rng(2);
    for (double k : {0.3, 1.0, 2.0, 17.0, 150.0}) {
        const ParticleSet ps = point_mass(k);
        CHECK(next_size_posterior_matching(ps, rng, {}).size == next_size_greedy_map(ps, {}).size);
    }
}

TEST_CASE("posterior matching draws follow the posterior") {
    Rng init(3);
    ParticleSet ps = init_particles(GumbelPrior{}, K0RatioPrior{}, 2000, 0.25, 0.8, init);
    ps.update({2.0, true}, 0.05);
    ps.update({1.2, false}, 0.05);

    const int bins = 12;
    const double lo = -0.6, hi = 1.2;
    auto bin_of = [&](double k) {
        const int b = static_cast<int>((std::log10(k) - lo) / (hi - lo) * bins);
        return std::clamp(b, 0, bins - 1);
    };
    std::vector<double> expected(bins, 0.0);
    const auto w = ps.normalized_weights();
    for (std::size_t i = 0; i < ps.size(); ++i) expected[bin_of(ps.k1(i))] += w[i];

    const SizeBounds wide{1e-6, 1e6};
    const int n = 10000;
    std::vector<double> observed(bins, 0.0);
    Rng rng(4);
    for (int i = 0; i < n; ++i) observed[bin_of(next_size_posterior_matching(ps, rng, wide).size)] += 1.0;

    double chi2 = 0.0;
    int dof = -1;
    for (int b = 0; b < bins; ++b) {
        const double e = expected[b] * n;
        if (e < 5.0) continue;
        chi2 += (observed[b] - e) * (observed[b] - e) / e;
        ++dof;
    }
    REQUIRE(dof >= 4);
    // Far above the 0.999 quantile for up to 11 degrees of freedom (31.3).
    CHECK(chi2 < 35.0);
}

TEST_CASE("greedy delegates to the posterior map") {
    Rng rng(5);
    ParticleSet ps = init_particles(GumbelPrior{}, K0RatioPrior{}, 3000, 0.25, 0.8, rng);
    Rng gen(6);
    for (int i = 0; i < 10; ++i) {
        ps.update({std::pow(10.0, uniform(gen, -0.2, 0.8)), bernoulli(gen, 0.6)}, 0.05);
        CHECK(next_size_greedy_map(ps, {}).size == clamp_size(posterior_map(ps), {}).size);
    }
}

TEST_CASE("policies are deterministic and stay in range") {
    Rng init(7);
    const ParticleSet ps = init_particles(GumbelPrior{0.3, 1.5}, K0RatioPrior{}, 2000, 0.25, 0.8, init);
    const SizeBounds b{};
    Rng a(8), c(8);
    for (int i = 0; i < 2000; ++i) {
        const double x = next_size_posterior_matching(ps, a, b).size;
        CHECK(x == next_size_posterior_matching(ps, c, b).size);
        CHECK(x >= b.min);
        CHECK(x <= b.max);
    }
    Rng gen(9);
    for (int i = 0; i < 200; ++i) {
        const FractParams p{std::pow(10.0, uniform(gen, -4.0, 3.0)), uniform(gen, 0.5, 20.0), 0.25};
        const double x = fract_next_size(p, b).size;
        CHECK(std::isfinite(x));
        CHECK(x >= b.min);
        CHECK(x <= b.max);
    }
}

TEST_CASE("policy names round-trip") {
    for (const char* name : {"posterior-matching", "greedy-map", "fract-max-info"})
        CHECK(policy_name(policy_from_name(name)) == name);
    CHECK(policy_name(FixedSequence{{1.0}}) == "fixed-sequence");
    CHECK_THROWS_AS(policy_from_name("random"), std::invalid_argument);
}

TEST_CASE("FrACT fit recovers a known threshold") {
    Rng rng(10);
    const auto history = logistic_history(0.5, 4.0, 0.25, 200, rng);
    const FractFit fit = fract_mle(history, 0.25, {});
    CHECK(std::abs(fit.params.v0 - 0.5) / 0.5 < 0.10);
    CHECK_FALSE(fit.boundary);
}

TEST_CASE("FrACT fit beats random parameter draws") {
    const SizeBounds b{};
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const auto history = logistic_history(std::pow(10.0, uniform(rng, -0.8, 0.2)), uniform(rng, 1.5, 8.0),
                                              0.25, 10 + 20 * rep, rng);
        const FractFit fit = fract_mle(history, 0.25, b);
        const double at_fit = fract_objective(history, fit.params.v0, fit.params.slope, 0.25, b);
        CHECK(fit.log_likelihood == doctest::Approx(at_fit).epsilon(1e-9));
        for (int i = 0; i < 100; ++i) {
            const double v0 = std::exp(uniform(rng, -std::log(b.max), -std::log(b.min)));
            const double slope = std::exp(uniform(rng, std::log(kFractSlopeMin), std::log(kFractSlopeMax)));
            CHECK(at_fit >= fract_objective(history, v0, slope, 0.25, b) - 1e-9);
        }
    }
}

TEST_CASE("one-sided histories are flagged") {
    const std::vector<Observation> one{{2.0, true}};
    CHECK(fract_mle(one, 0.25, {}).boundary);
    const std::vector<Observation> misses{{2.0, false}, {4.0, false}, {8.0, false}};
    const FractFit fit = fract_mle(misses, 0.25, {});
    CHECK(fit.boundary);
    CHECK(std::isfinite(fit.params.v0));
    CHECK_THROWS_AS(fract_mle(std::vector<Observation>{}, 0.25, {}), std::invalid_argument);
}

TEST_CASE("FrACT next size is the steepest point on a log-size axis") {
    const SizeBounds wide{1e-6, 1e6};
    Rng rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const FractParams p{std::pow(10.0, uniform(rng, -1.5, 0.5)), rep == 0 ? 1.0 : uniform(rng, 1.0, 10.0), 0.25};
        // Dense grid argmax of the finite-difference slope in log x.
        const double centre = -std::log(p.v0);
        double best_u = 0.0, best_d = -1.0;
        const double du = 1e-4;
        for (double u = centre - 5.0; u <= centre + 5.0; u += du) {
            const double d = fract_logistic(std::exp(u + 0.5 * du), p, Orientation::IncreasingWithSize) -
                             fract_logistic(std::exp(u - 0.5 * du), p, Orientation::IncreasingWithSize);
            if (d > best_d) {
                best_d = d;
                best_u = u;
            }
        }
        const double chosen = fract_next_size(p, wide).size;
        CHECK(std::abs(chosen - std::exp(best_u)) / chosen < 1e-3);
    }
}

TEST_CASE("FrACT next size scales inversely with v0") {
    const SizeBounds wide{1e-6, 1e6};
    for (double slope : {1.0, 3.0, 9.0}) {
        const double base = fract_next_size({1.0, slope, 0.25}, wide).size;
        for (double v0 : {0.1, 0.5, 2.0, 4.0}) {
            CHECK(fract_next_size({v0, slope, 0.25}, wide).size == doctest::Approx(base / v0).epsilon(1e-14));
        }
        CHECK(fract_next_size({2.0, slope, 0.25}, wide).size ==
              doctest::Approx(0.5 * fract_next_size({1.0, slope, 0.25}, wide).size));
    }
}

TEST_CASE("threshold information peaks near the chosen size") {
    const FractParams p{0.5, 4.0, 0.25};
    const double at_next = fract_threshold_information(fract_next_size(p, {}).size, p);
    CHECK(at_next > fract_threshold_information(0.5, p));
    CHECK(at_next > fract_threshold_information(20.0, p));
    CHECK(fract_threshold_information(1e-3, p) < 1e-6);
}

}
