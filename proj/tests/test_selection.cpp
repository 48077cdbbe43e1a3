#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "autos/data.hpp"
#include "autos/rng.hpp"
#include "autos/selection.hpp"

using namespace autos;

TEST_CASE("cluster_centers normalizes classifier rows") {
    Matrix w(2, 2);
    w.data = {3, 4, 0, 2};
    Matrix c = cluster_centers(w);
    CHECK(c(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(c(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(c(1, 0) == 0.0);
    CHECK(c(1, 1) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix again = cluster_centers(c);
    for (std::size_t i = 0; i < c.data.size(); ++i)
        CHECK(again.data[i] == doctest::Approx(c.data[i]).epsilon(1e-12));
    for (std::size_t r = 0; r < c.rows; ++r)
        CHECK(norm2(c.row(r), c.cols) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix zero_row(1, 2, 0.0);
    CHECK_THROWS_AS(cluster_centers(zero_row), NumericError);
}

TEST_CASE("cosine_distance") {
    Vector a = {1.0, 2.0, 3.0};
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_distance({1, 0}, {-1, 0}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cosine_distance({1, 2}, {2, 1}) == doctest::Approx(cosine_distance({2, 1}, {1, 2})));
    CHECK_THROWS_AS(cosine_distance({0, 0}, {1, 0}), NumericError);
}

TEST_CASE("assign_targets: exact, tie rule, brute-force equivalence") {
    Matrix centers(3, 4);
    auto rng = make_stream(5, "assign");
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : centers.data) v = gauss(rng);
    centers = cluster_centers(centers);

    SUBCASE("feature equal to a center maps to it") {
        Matrix f(1, 4);
        std::copy(centers.row(2), centers.row(2) + 4, f.row(0));
        CHECK(assign_targets(f, centers)[0] == 2);
    }
    SUBCASE("equidistant tie goes to the lowest class") {
        Matrix c2(2, 2);
        c2.data = {1, 0, 0, 1};
        Matrix f(1, 2);
        f.data = {1, 1};
        CHECK(assign_targets(f, c2)[0] == 0);
    }
    SUBCASE("matches exhaustive scan") {
        Matrix f(200, 4);
        for (double& v : f.data) v = gauss(rng);
        auto got = assign_targets(f, centers);
        for (std::size_t i = 0; i < f.rows; ++i) {
            int best = 0;
            double bd = 1e300;
            for (std::size_t c = 0; c < centers.rows; ++c) {
                double d = cosine_distance(f.row(i), centers.row(c), 4);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            CHECK(got[i] == best);
        }
    }
}

TEST_CASE("cluster_radius metrics") {
    std::vector<double> d = {0.1, 0.2, 0.3};
    CHECK(cluster_radius(d, RadiusMetric::Mean) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(cluster_radius(d, RadiusMetric::Rms) == doctest::Approx(std::sqrt(0.14 / 3.0)).epsilon(1e-12));
    CHECK(cluster_radius(d, RadiusMetric::Rms) == doctest::Approx(0.21602).epsilon(1e-4));
    CHECK(cluster_radius(d, RadiusMetric::Max) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(cluster_radius({}, RadiusMetric::Mean), EmptyCluster);
}

TEST_CASE("power-mean ordering: mean <= rms <= max") {
    auto rng = make_stream(17, "radius-prop");
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::uniform_int_distribution<int> len(1, 30);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> d(len(rng));
        for (double& v : d) v = u(rng);
        double mean = cluster_radius(d, RadiusMetric::Mean);
        double rms = cluster_radius(d, RadiusMetric::Rms);
        double mx = cluster_radius(d, RadiusMetric::Max);
        CHECK(mean <= rms + 1e-12);
        CHECK(rms <= mx + 1e-12);
    }
}

TEST_CASE("thresholds and adjustments") {
    auto [d_s, d_t] = thresholds(0.2, 1.0, 0.05, 0.2 / 3.0);
    CHECK(d_s == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d_t == doctest::Approx(0.2 - 0.2 / 3.0).epsilon(1e-12));
    CHECK(d_t == doctest::Approx(0.1333).epsilon(1e-3));
    // d_t is floored at zero
    CHECK(thresholds(0.1, 1.0, 0.0, 0.5).second == 0.0);

    auto [s_adj, t_adj] = compute_adjustments({0.1, 0.2, 0.3}, 0.3);
    CHECK(s_adj == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(t_adj == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(median({0.1, 0.3}) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_AS(compute_adjustments({}, 0.1), EmptyCluster);
}

TEST_CASE("target_density") {
    CHECK(target_density(10, 0.5, 2, 1) == doctest::Approx(20.0 / M_PI).epsilon(1e-12));
    CHECK(target_density(0, 0.5, 2, 1) == 0.0);
    CHECK(target_density(20, 0.5, 2, 1) == doctest::Approx(2.0 * target_density(10, 0.5, 2, 1)));
    CHECK_THROWS_AS(target_density(5, 0.0, 2, 1), NumericError);

    // log-space evaluation matches the direct formula up to d = 20
    for (int d = 2; d <= 20; ++d) {
        double direct = 12.0 / (std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0) * 0.37);
        CHECK(target_density(12, 0.37, d, 1) == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("domain_weights") {
    std::vector<std::vector<bool>> valid = {{true, true}, {true, true}};

    SUBCASE("zero density gives omega2 = 0.5") {
        DomainWeights w = domain_weights({0, 0}, 10, {{0.0, 0.0}, {0.0, 0.0}}, valid, 0.5);
        CHECK(w.omega2[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(w.omega[0] == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("full counts and huge density approach 1") {
        DomainWeights w = domain_weights({10, 10}, 10, {{1e9, 1e9}, {1e9, 1e9}}, valid, 0.5);
        CHECK(w.omega[0] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("lambda blends the two weights") {
        // omega1 = 0.4 via counts; omega2 forced by density sigmoid
        DomainWeights w = domain_weights({4}, 10, {{std::log(0.6 / 0.4), std::log(0.6 / 0.4)}},
                                         {{true, true}}, 0.5);
        CHECK(w.omega1[0] == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(w.omega2[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(w.omega[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("omega2 strictly increases in each density") {
        double base = domain_weights({1}, 4, {{1.0, 2.0}}, {{true, true}}, 0.5).omega2[0];
        double more = domain_weights({1}, 4, {{1.5, 2.0}}, {{true, true}}, 0.5).omega2[0];
        CHECK(more > base);
    }
    SUBCASE("invalid cells are skipped") {
        DomainWeights w = domain_weights({1}, 4, {{5.0, 123.0}}, {{true, false}}, 0.0);
        CHECK(w.omega2[0] == doctest::Approx(stable_sigmoid(5.0)).epsilon(1e-12));
    }
}

TEST_CASE("keep_rule") {
    Vector equal = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    auto all_kept = keep_rule(equal, 3, 0.01);
    CHECK(all_kept == std::vector<bool>{true, true, true});

    auto mixed = keep_rule({0.5, 0.4, 0.05}, 3, 0.1);
    CHECK(mixed == std::vector<bool>{true, true, false});

    auto lax = keep_rule({0.0, 0.9}, 2, 0.6);  // sigma >= 1/K: threshold <= 0
    CHECK(lax == std::vector<bool>{true, true});

    CHECK_THROWS_AS(keep_rule(equal, 0, 0.1), ConfigError);
    CHECK_THROWS_AS(keep_rule(equal, 3, -0.1), ConfigError);
}

namespace {

struct Fixture {
    Model model;
    LabeledDomain source;
    UnlabeledDomain target;
    Matrix sx, tx;
};

Fixture make_fixture(std::uint64_t seed, int n_src = 60, int n_tgt = 80) {
    Fixture f;
    SyntheticSpec spec;
    spec.source_count = 1;
    spec.class_count = 3;
    spec.dim = 6;
    spec.samples_per_class = n_src / 3;
    spec.separation = 2.0;
    auto [sources, target] = generate_synthetic(spec, seed);
    f.source = sources[0];
    f.target = std::move(target);
    f.target.samples.resize(std::min<std::size_t>(n_tgt, f.target.samples.size()));
    auto rng = make_stream(seed, "fixture-model");
    f.model = make_model(6, 5, 3, rng);
    f.sx = feature_matrix(f.source.samples);
    f.tx = feature_matrix(f.target.samples);
    return f;
}

}  // namespace

TEST_CASE("select_confident matches a brute-force re-check") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Fixture f = make_fixture(seed);
        DomainSelection sel =
            select_domain(f.model, f.source, f.sx, f.tx, RadiusMetric::Mean, 1.0, 0, true);

        Matrix centers = cluster_centers(f.model.decision.weight);
        Matrix fs = forward(f.model, f.sx).features();
        Matrix ft = forward(f.model, f.tx).features();

        // brute force source confidence
        std::vector<std::size_t> src_expected;
        for (std::size_t i = 0; i < f.source.size(); ++i) {
            int c = *f.source.samples[i].label;
            double dist = cosine_distance(fs.row(i), centers.row(c), fs.cols);
            if (sel.stats.valid[c] && dist < sel.stats.d_s[c]) src_expected.push_back(i);
        }
        CHECK(sel.confident_src == src_expected);

        // brute force target assignment + confidence
        std::vector<std::size_t> tgt_expected;
        for (std::size_t i = 0; i < f.tx.rows; ++i) {
            int best = 0;
            double bd = 1e300;
            for (std::size_t c = 0; c < centers.rows; ++c) {
                double d = cosine_distance(ft.row(i), centers.row(c), ft.cols);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            CHECK(sel.assignments[i] == best);
            if (sel.stats.valid[best] && bd < sel.stats.d_t[best]) tgt_expected.push_back(i);
        }
        CHECK(sel.confident_tgt == tgt_expected);
    }
}

TEST_CASE("selection boundary cases") {
    Fixture f = make_fixture(4);
    DomainSelection sel = select_domain(f.model, f.source, f.sx, f.tx, RadiusMetric::Mean, 1.0, 0, true);
    // a target just past the threshold is not confident (strict inequality)
    Matrix centers = cluster_centers(f.model.decision.weight);
    Matrix ft = forward(f.model, f.tx).features();
    for (std::size_t idx = 0; idx < f.tx.rows; ++idx) {
        int c = sel.assignments[idx];
        double d = cosine_distance(ft.row(idx), centers.row(c), ft.cols);
        bool in_set = std::find(sel.confident_tgt.begin(), sel.confident_tgt.end(), idx) !=
                      sel.confident_tgt.end();
        CHECK(in_set == (sel.stats.valid[c] && d < sel.stats.d_t[c]));
    }
}

TEST_CASE("alpha monotonicity of the confident source set") {
    Fixture f = make_fixture(8);
    std::size_t prev = 0;
    for (double alpha : {0.5, 1.0, 1.5, 2.0}) {
        DomainSelection sel =
            select_domain(f.model, f.source, f.sx, f.tx, RadiusMetric::Mean, alpha, 0, true);
        CHECK(sel.confident_src.size() >= prev);
        prev = sel.confident_src.size();
    }
}

TEST_CASE("t_adj monotonicity of the confident target set") {
    Fixture f = make_fixture(8);
    Matrix centers = cluster_centers(f.model.decision.weight);
    Matrix ft = forward(f.model, f.tx).features();
    auto assignments = assign_targets(ft, centers);
    std::vector<double> dists(f.tx.rows);
    for (std::size_t i = 0; i < f.tx.rows; ++i)
        dists[i] = cosine_distance(ft.row(i), centers.row(assignments[i]), ft.cols);
    double r = 0.4;
    std::size_t prev = f.tx.rows + 1;
    for (double t_adj : {0.0, 0.1, 0.2, 0.3}) {
        auto [d_s, d_t] = thresholds(r, 1.0, 0.0, t_adj);
        (void)d_s;
        std::size_t count = 0;
        for (double d : dists)
            if (d < d_t) ++count;
        CHECK(count <= prev);
        prev = count;
    }
}

TEST_CASE("renew_domain") {
    Fixture f = make_fixture(12);
    std::vector<std::size_t> all_src(f.source.size());
    std::iota(all_src.begin(), all_src.end(), 0);

    SUBCASE("all sources, no targets: identity") {
        LabeledDomain renewed = renew_domain(f.source, f.target, all_src, {}, {});
        REQUIRE(renewed.size() == f.source.size());
        for (std::size_t i = 0; i < renewed.size(); ++i)
            CHECK(renewed.samples[i].id == f.source.samples[i].id);
    }
    SUBCASE("sizes add and pseudo-labels are attached") {
        std::vector<std::size_t> src(all_src.begin(), all_src.begin() + 40);
        std::vector<std::size_t> tgt = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
        LabeledDomain renewed = renew_domain(f.source, f.target, src, tgt, labels);
        CHECK(renewed.size() == 50);
        for (std::size_t j = 0; j < tgt.size(); ++j)
            CHECK(*renewed.samples[40 + j].label == labels[j]);
    }
    SUBCASE("low-confidence sources are excluded") {
        std::vector<std::size_t> src = {0, 2, 4};
        LabeledDomain renewed = renew_domain(f.source, f.target, src, {}, {});
        for (const auto& rec : renewed.samples)
            CHECK(rec.id != f.source.samples[1].id);
    }
    SUBCASE("fully empty renewal signals EmptyDomain") {
        CHECK_THROWS_AS(renew_domain(f.source, f.target, {}, {}, {}), EmptyDomain);
    }
}
