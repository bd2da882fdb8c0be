#include <doctest.h>

#include <cmath>

#include "tcd/scm.hpp"

using namespace tcd;

namespace {

CausalGraph chain3() { return CausalGraph(3, {{0, 1}, {1, 2}}); }

double row_mean(const ObservationSet& obs, int row, int from, int to) {
    double sum = 0.0;
    for (int c = from; c < to; ++c) sum += obs.at(row, c);
    return sum / (to - from);
}

double row_var(const ObservationSet& obs, int row, int from, int to) {
    const double mean = row_mean(obs, row, from, to);
    double var = 0.0;
    for (int c = from; c < to; ++c)
        var += (obs.at(row, c) - mean) * (obs.at(row, c) - mean);
    return var / (to - from);
}

}  // namespace

TEST_CASE("build_scm is deterministic and structure-shaped") {
    const auto g = chain3();
    MechanismSpec spec;
    const auto a = build_scm(g, spec, 3);
    const auto b = build_scm(g, spec, 3);
    CHECK(a.node_fns[1].w == b.node_fns[1].w);
    CHECK(a.node_fns[2].w == b.node_fns[2].w);
    // roots carry no function, non-roots one weight per parent
    CHECK(a.node_fns[0].w.empty());
    CHECK(a.node_fns[1].w.size() == 1);
    CHECK(std::fabs(a.node_fns[1].w[0]) >= spec.weight_min);
    CHECK(std::fabs(a.node_fns[1].w[0]) <= spec.weight_max);

    const auto c = build_scm(g, spec, 4);
    CHECK(a.node_fns[1].w != c.node_fns[1].w);

    spec.kind = MechanismKind::MLP;
    const auto mlp = build_scm(g, spec, 3);
    CHECK(mlp.node_fns[1].mlp_b1.size() == 16);  // 2-layer perceptron, tanh hidden
    CHECK(mlp.node_fns[1].w2.size() == 16);
}

TEST_CASE("deterministic propagation under zero noise") {
    const auto g = chain3();
    MechanismSpec spec;
    spec.noise_std = 0.0;
    auto scm = build_scm(g, spec, 9);
    const double w1 = scm.node_fns[1].w[0];
    const double w2 = scm.node_fns[2].w[0];

    const auto obs = sample(scm, 0, {{InterventionSpec{0, 0.5}, 3}}, 11);
    CHECK(obs.m == 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(obs.at(0, c) == doctest::Approx(0.5));
        CHECK(obs.at(1, c) == doctest::Approx(w1 * 0.5));
        CHECK(obs.at(2, c) == doctest::Approx(w2 * w1 * 0.5));
        CHECK(obs.mask_at(0, c) == 1);
        CHECK(obs.mask_at(1, c) == 0);
    }
}

TEST_CASE("unit-weight chain with constant root is constant") {
    const auto g = chain3();
    MechanismSpec spec;
    spec.noise_std = 0.0;
    spec.root_low = 1.0;
    spec.root_high = 1.0;
    auto scm = build_scm(g, spec, 1);
    scm.node_fns[1].w = {1.0};
    scm.node_fns[2].w = {1.0};
    const auto obs = sample(scm, 5, {}, 3);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 5; ++c) CHECK(obs.at(i, c) == doctest::Approx(1.0));
}

TEST_CASE("sample determinism") {
    const auto g = chain3();
    const auto scm = build_scm(g, MechanismSpec{}, 5);
    const auto a = sample(scm, 10, {{InterventionSpec{1, 0.0}, 4}}, 77);
    const auto b = sample(scm, 10, {{InterventionSpec{1, 0.0}, 4}}, 77);
    CHECK(a.x == b.x);
    CHECK(a.mask == b.mask);
    const auto c = sample(scm, 10, {{InterventionSpec{1, 0.0}, 4}}, 78);
    CHECK(a.x != c.x);
}

TEST_CASE("intervention suite bookkeeping") {
    GraphSpec gs;
    gs.avg_degree = 1.0;
    const auto g = generate_graph(gs, 10, 2);
    const auto scm = build_scm(g, MechanismSpec{}, 2);
    const auto obs = make_intervention_suite(scm, 10, 500, 3);
    CHECK(obs.n == 10);
    CHECK(obs.m == 600);
    long total = 0;
    for (auto v : obs.mask) total += v;
    CHECK(total == 100);
    // observational columns first, then knockouts in index order
    for (int c = 0; c < 500; ++c) CHECK(obs.interventions_in(c).empty());
    for (int j = 0; j < 10; ++j)
        for (int k = 0; k < 10; ++k) {
            const int col = 500 + j * 10 + k;
            CHECK(obs.interventions_in(col) == std::vector<int>{j});
            CHECK(obs.at(j, col) == 0.0f);
        }

    const auto none = make_intervention_suite(scm, 0, 20, 3);
    for (auto v : none.mask) CHECK(v == 0);
}

TEST_CASE("interventions on non-descendants leave a variable's distribution alone") {
    // chain 0 -> 1 -> 2: do(x_2) must not move x_0 or x_1
    const auto g = chain3();
    const auto scm = build_scm(g, MechanismSpec{}, 21);
    const int m = 5000;
    const auto base = sample(scm, m, {}, 100);
    const auto clamped = sample(scm, 0, {{InterventionSpec{2, 5.0}, m}}, 101);
    for (int row : {0, 1}) {
        const double mu_a = row_mean(base, row, 0, m);
        const double mu_b = row_mean(clamped, row, 0, m);
        const double sd = std::sqrt(row_var(base, row, 0, m) / m +
                                    row_var(clamped, row, 0, m) / m);
        CHECK(std::fabs(mu_a - mu_b) < 3.0 * sd + 1e-9);
    }
}

TEST_CASE("interventions on a cause move the target, on a non-cause they do not") {
    const auto g = chain3();
    MechanismSpec spec;
    const auto scm = build_scm(g, spec, 33);
    const int m = 5000;

    const auto lo = sample(scm, 0, {{InterventionSpec{0, -1.0}, m}}, 200);
    const auto hi = sample(scm, 0, {{InterventionSpec{0, 1.0}, m}}, 201);
    const double mu_lo = row_mean(lo, 2, 0, m);
    const double mu_hi = row_mean(hi, 2, 0, m);
    const double sd = std::sqrt(row_var(lo, 2, 0, m) / m + row_var(hi, 2, 0, m) / m);
    CHECK(std::fabs(mu_hi - mu_lo) > 3.0 * sd);

    // 2 is not an ancestor of 0
    const auto lo0 = sample(scm, 0, {{InterventionSpec{2, -1.0}, m}}, 202);
    const auto hi0 = sample(scm, 0, {{InterventionSpec{2, 1.0}, m}}, 203);
    const double d0 = std::fabs(row_mean(lo0, 0, 0, m) - row_mean(hi0, 0, 0, m));
    const double sd0 = std::sqrt(row_var(lo0, 0, 0, m) / m + row_var(hi0, 0, 0, m) / m);
    CHECK(d0 < 3.0 * sd0 + 1e-9);
}

TEST_CASE("all mechanism kinds sample finitely") {
    GraphSpec gs;
    gs.avg_degree = 2.0;
    const auto g = generate_graph(gs, 12, 5);
    for (auto kind :
         {MechanismKind::LINEAR, MechanismKind::MLP, MechanismKind::POLY, MechanismKind::SIGMOID}) {
        MechanismSpec spec;
        spec.kind = kind;
        const auto scm = build_scm(g, spec, 6);
        const auto obs = make_intervention_suite(scm, 2, 50, 7);
        for (float v : obs.x) CHECK(std::isfinite(v));
    }
}
