#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "lla/metrics.hpp"

using namespace lla;

namespace {

ConfusionMatrix random_matrix(std::size_t k, std::size_t n, std::mt19937_64& rng) {
    ConfusionMatrix cm(k);
    std::uniform_int_distribution<int> d(0, static_cast<int>(k) - 1);
    std::bernoulli_distribution hit(0.5);
    for (std::size_t i = 0; i < n; ++i) {
        const int t = d(rng);
        cm.update(t, hit(rng) ? t : d(rng));
    }
    return cm;
}

}  // namespace

TEST_CASE("confusion matrix updates") {
    ConfusionMatrix cm;
    cm.update(2, 2);
    CHECK(cm(2, 2) == 1);
    CHECK(cm.total() == 1);
    for (int i = 0; i < 9; ++i) cm.update(i % 7, (i + 1) % 7);
    CHECK(cm.total() == 10);
    CHECK_THROWS_AS(cm.update(7, 0), std::out_of_range);
    CHECK_THROWS_AS(cm.update(0, -1), std::out_of_range);

    std::mt19937_64 rng(1);
    ConfusionMatrix a(7), b(7), both(7);
    std::uniform_int_distribution<int> d(0, 6);
    for (int i = 0; i < 200; ++i) {
        const int t = d(rng), p = d(rng);
        (i % 3 ? a : b).update(t, p);
        both.update(t, p);
    }
    ConfusionMatrix merged = a;
    merged.merge(b);
    CHECK(merged == both);
}

TEST_CASE("summary formulas") {
    ConfusionMatrix perfect(7);
    for (int c = 0; c < 7; ++c)
        for (int i = 0; i <= c; ++i) perfect.update(c, c);
    MetricSummary p = summarize(perfect);
    CHECK(p.accuracy == 1.0);
    CHECK(p.macro_f1 == 1.0);

    ConfusionMatrix two(2);
    two(0, 0) = 2;
    two(0, 1) = 1;
    two(1, 0) = 1;
    two(1, 1) = 2;
    MetricSummary s = summarize(two);
    CHECK(s.accuracy == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK(s.per_class_f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.per_class_f1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    // A class never predicted and one never present: 0/0 terms count as 0.
    ConfusionMatrix sparse(3);
    sparse(0, 0) = 3;
    sparse(1, 0) = 2;
    MetricSummary z = summarize(sparse);
    CHECK(z.per_class_accuracy[1] == 0.0);
    CHECK(z.per_class_accuracy[2] == 0.0);
    CHECK(z.per_class_f1[2] == 0.0);
    CHECK(z.macro_f1 == doctest::Approx((2.0 * 0.6 / 1.6) / 3.0));

    CHECK_THROWS(summarize(ConfusionMatrix(7)));
}

TEST_CASE("per-class recall fixture reproduces the reference recall profile") {
    const std::vector<double> target{0.31, 0.36, 0.42, 0.52, 0.30, 0.26, 0.58};
    ConfusionMatrix cm(7);
    for (std::size_t c = 0; c < 7; ++c) {
        const auto hits = static_cast<std::uint64_t>(std::lround(target[c] * 100));
        cm(c, c) = hits;
        cm(c, (c + 1) % 7) = 100 - hits;
    }
    MetricSummary s = summarize(cm);
    for (std::size_t c = 0; c < 7; ++c) CHECK(s.per_class_accuracy[c] == target[c]);
}

TEST_CASE("challenge score") {
    const double s = challenge_score(0.49, 0.38);
    CHECK(std::abs(s - 0.4163) < 5e-4);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", s);
    CHECK(std::string(buf) == "0.42");
    CHECK(challenge_score(1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(challenge_score(0.0, 0.0) == 0.0);
    CHECK_THROWS(challenge_score(1.1, 0.5));
    CHECK_THROWS(challenge_score(0.5, -0.1));
    for (int i = 0; i < 20; ++i) {
        const double x = i / 20.0, y = (i + 1) / 20.0;
        CHECK(challenge_score(y, 0.3) > challenge_score(x, 0.3));
        CHECK(challenge_score(0.3, y) > challenge_score(0.3, x));
    }
}

TEST_CASE("relabeling permutes per-class values and keeps aggregates") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix cm = random_matrix(7, 300, rng);
        std::vector<std::size_t> perm(7);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ConfusionMatrix pc(7);
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 7; ++j) pc(perm[i], perm[j]) = cm(i, j);
        MetricSummary a = summarize(cm), b = summarize(pc);
        CHECK(a.accuracy == b.accuracy);
        CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-14));
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(a.per_class_accuracy[i] == b.per_class_accuracy[perm[i]]);
            CHECK(a.per_class_f1[i] == b.per_class_f1[perm[i]]);
        }
    }
}

TEST_CASE("accuracy of a merged matrix lies between the parts") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix a = random_matrix(7, 150, rng), b = random_matrix(7, 150, rng);
        ConfusionMatrix m = a;
        m.merge(b);
        const double x = summarize(a).accuracy, y = summarize(b).accuracy, z = summarize(m).accuracy;
        CHECK(z >= std::min(x, y));
        CHECK(z <= std::max(x, y));
    }
}

TEST_CASE("metrics report layout") {
    ConfusionMatrix cm(7);
    for (int c = 0; c < 7; ++c) cm.update(c, c);
    cm.update(0, 1);
    auto j = metrics_report(cm);
    CHECK(j["per_class"].size() == 7);
    CHECK(j["confusion"].size() == 7);
    CHECK(j["confusion"][0][1] == 1);
    CHECK(j.contains("accuracy"));
    CHECK(j.contains("macro_f1"));
    CHECK(j["score"].get<double>() == doctest::Approx(challenge_score(j["accuracy"], j["macro_f1"])));
}
