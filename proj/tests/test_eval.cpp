#include <doctest.h>

#include <cmath>

#include "tcd/eval.hpp"
#include "tcd/graph.hpp"
#include "tcd/rng.hpp"

using namespace tcd;

TEST_CASE("auroc fixtures") {
    CHECK(auroc({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
    CHECK(auroc({0.5, 0.5, 0.5}, {1, 0, 1}) == doctest::Approx(0.5));
    // one win of two pairs
    CHECK(auroc({0.9, 0.8, 0.1}, {0, 1, 0}) == doctest::Approx(0.5));
    CHECK_THROWS(auroc({0.1, 0.2}, {1, 1}));
    CHECK_THROWS(auroc({0.1}, {1, 0}));
}

TEST_CASE("auroc sort formula agrees with the pairwise oracle on tied vectors") {
    Rng rng(99);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 2 + static_cast<int>(rng.below(40));
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        // coarse grid of score values forces plenty of ties
        for (auto& s : scores) s = static_cast<double>(rng.below(6)) / 5.0;
        long pos = 0;
        for (auto& l : labels) {
            l = rng.bernoulli(0.4) ? 1 : 0;
            pos += l;
        }
        if (pos == 0) labels[0] = 1;
        if (pos == n) labels[0] = 0;
        CHECK(auroc(scores, labels) ==
              doctest::Approx(auroc_pairwise(scores, labels)).epsilon(1e-9));
    }
}

TEST_CASE("average precision fixtures") {
    CHECK(average_precision({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
    // positives at ranks 2 and 3: (1/2 + 2/3) / 2
    CHECK(average_precision({0.9, 0.8, 0.1}, {0, 1, 1}) == doctest::Approx(7.0 / 12.0));
    // single positive ranked last of k
    CHECK(average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == doctest::Approx(0.25));
    CHECK_THROWS(average_precision({0.1, 0.2}, {0, 0}));
}

TEST_CASE("f1 at matched positives") {
    // top-2 = {0, 2}, one true positive among them
    CHECK(f1_matched({0.9, 0.2, 0.8, 0.1}, {1, 0, 0, 1}) == doctest::Approx(0.5));
    CHECK(f1_matched({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(f1_matched({0.1, 0.2, 0.9}, {1, 0, 0}) == doctest::Approx(0.0));

    // predicts exactly P positives
    const auto top = top_matched_indices({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
    CHECK(top.size() == 2);
    CHECK(top == std::vector<int>{0, 1});  // ties broken by ascending index
}

TEST_CASE("rank metrics are invariant under strictly increasing transforms") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 3 + static_cast<int>(rng.below(20));
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        for (auto& s : scores) s = rng.uniform(-2.0, 2.0);
        for (auto& l : labels) l = rng.bernoulli(0.5) ? 1 : 0;
        labels[0] = 1;
        labels[1] = 0;
        std::vector<double> warped(n);
        for (int i = 0; i < n; ++i) warped[i] = std::exp(3.0 * scores[i]) + 1.0;
        CHECK(auroc(scores, labels) == doctest::Approx(auroc(warped, labels)).epsilon(1e-12));
        CHECK(average_precision(scores, labels) ==
              doctest::Approx(average_precision(warped, labels)).epsilon(1e-12));
        CHECK(f1_matched(scores, labels) ==
              doctest::Approx(f1_matched(warped, labels)).epsilon(1e-12));
    }
}

TEST_CASE("evaluate_targets") {
    const CausalGraph empty(5, {});
    const auto none = evaluate_targets(empty, [&](int) { return std::vector<double>(5, 0.0); });
    CHECK(none.valid_targets == 0);

    const CausalGraph chain(4, {{0, 1}, {1, 2}, {2, 3}});
    const auto labels = chain.cause_label_matrix();
    // oracle scorer reads off the labels
    const auto perfect = evaluate_targets(chain, [&](int i) {
        std::vector<double> s(4);
        for (int j = 0; j < 4; ++j) s[j] = labels[i * 4 + j];
        return s;
    });
    CHECK(perfect.mean_auroc == doctest::Approx(1.0));
    CHECK(perfect.mean_ap == doctest::Approx(1.0));
    CHECK(perfect.mean_f1 == doctest::Approx(1.0));
    // target 3 has all of {0,1,2} as causes: no negatives, so it is skipped
    CHECK(perfect.valid_targets == 2);
    CHECK(perfect.skipped_targets == 1);
}

TEST_CASE("random scores give AUROC near one half") {
    GraphSpec spec;
    spec.avg_degree = 2.0;
    double sum = 0.0;
    long count = 0;
    for (int k = 0; k < 10; ++k) {
        const auto g = generate_graph(spec, 30, 800 + k);
        const auto rep =
            evaluate_targets(g, [&](int i) { return random_baseline(30, i, 900 + k); });
        sum += rep.mean_auroc * rep.valid_targets;
        count += rep.valid_targets;
    }
    CHECK(count > 100);
    CHECK(sum / count == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("fnr by distance") {
    const CausalGraph chain(4, {{0, 1}, {1, 2}, {2, 3}});

    // perfect predictor: all-zero curve
    std::map<int, std::vector<int>> perfect;
    for (int i = 0; i < 4; ++i) perfect[i] = chain.ancestors(i);
    const auto zero = fnr_by_distance(chain, perfect);
    long support = 0;
    for (const auto& [d, fs] : zero.buckets) {
        CHECK(fs.first == 0.0);
        support += fs.second;
    }
    // total true (cause, target) pairs: 3 + 2 + 1
    CHECK(support == 6);

    // parents-only predictor: FNR 0 at d=1, 1 at d>=2
    std::map<int, std::vector<int>> parents_only;
    for (int i = 0; i < 4; ++i) parents_only[i] = chain.parents(i);
    const auto curve = fnr_by_distance(chain, parents_only);
    CHECK(curve.buckets.at(1).first == 0.0);
    CHECK(curve.buckets.at(2).first == 1.0);
    CHECK(curve.buckets.at(3).first == 1.0);
}

TEST_CASE("propagated error formula") {
    CHECK(propagated_error(0.1, 3) == doctest::Approx(0.271));
    CHECK(propagated_error(0.3, 1) == doctest::Approx(0.3));
    CHECK(propagated_error(0.0, 7) == doctest::Approx(0.0));
    CHECK_THROWS(propagated_error(-0.1, 1));
}

TEST_CASE("relative auroc") {
    CHECK(relative_auroc(0.7, 0.9, 0.5) == doctest::Approx(50.0));
    CHECK(relative_auroc(0.9, 0.9, 0.5) == doctest::Approx(100.0));
    CHECK(relative_auroc(0.5, 0.9, 0.5) == doctest::Approx(0.0));
    CHECK_THROWS(relative_auroc(0.5, 0.6, 0.6));
    // affine invariance
    CHECK(relative_auroc(0.7 + 0.05, 0.9 + 0.05, 0.5 + 0.05) == doctest::Approx(50.0));
}

TEST_CASE("correlation baseline") {
    // identical rows: |r| = 1
    std::vector<float> x = {1, 2, 3, 4, 1, 2, 3, 4, 4, 3, 1, 2};
    const auto s = correlation_baseline(x, 3, 4, 0);
    CHECK(s[1] == doctest::Approx(1.0));
    CHECK(s[0] == doctest::Approx(1.0));

    // zero-variance row scores 0
    std::vector<float> flat = {1, 1, 1, 1, 2, 3, 4, 5};
    const auto sf = correlation_baseline(flat, 2, 4, 1);
    CHECK(sf[0] == 0.0);

    // independent rows: |r| < 3/sqrt(m)
    const int m = 4000;
    Rng rng(5);
    std::vector<float> big(2 * m);
    for (auto& v : big) v = static_cast<float>(rng.normal());
    const auto sb = correlation_baseline(big, 2, m, 0);
    CHECK(sb[1] < 3.0 / std::sqrt(static_cast<double>(m)));
}

TEST_CASE("random baseline determinism and range") {
    const auto a = random_baseline(100, 3, 7);
    const auto b = random_baseline(100, 3, 7);
    CHECK(a == b);
    const auto c = random_baseline(100, 4, 7);
    CHECK(a != c);
    for (double v : a) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
