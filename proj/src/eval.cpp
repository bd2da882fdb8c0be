#include "tcd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tcd/rng.hpp"

namespace tcd {

namespace {

void check_lengths(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("metrics: score/label length mismatch");
    if (scores.empty()) throw std::invalid_argument("metrics: empty vectors");
}

long positive_count(const std::vector<std::uint8_t>& labels) {
    long p = 0;
    for (auto v : labels) p += v ? 1 : 0;
    return p;
}

// indices sorted by score descending, index ascending on ties
std::vector<int> ranking(const std::vector<double>& scores) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    check_lengths(scores, labels);
    const long pos = positive_count(labels);
    const long neg = static_cast<long>(labels.size()) - pos;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("auroc: needs at least one positive and one negative");

    // average ranks over tie groups, then the Mann-Whitney statistic
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t at = 0;
    while (at < idx.size()) {
        std::size_t end = at;
        while (end < idx.size() && scores[idx[end]] == scores[idx[at]]) ++end;
        const double avg_rank = 0.5 * (static_cast<double>(at + 1) + static_cast<double>(end));
        for (std::size_t k = at; k < end; ++k)
            if (labels[idx[k]]) rank_sum_pos += avg_rank;
        at = end;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc_pairwise(const std::vector<double>& scores,
                      const std::vector<std::uint8_t>& labels) {
    check_lengths(scores, labels);
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    if (pairs == 0)
        throw std::invalid_argument("auroc: needs at least one positive and one negative");
    return wins / static_cast<double>(pairs);
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels) {
    check_lengths(scores, labels);
    const long pos = positive_count(labels);
    if (pos == 0) throw std::invalid_argument("average_precision: needs at least one positive");
    const auto idx = ranking(scores);
    double hits = 0.0, sum = 0.0;
    for (std::size_t rank = 0; rank < idx.size(); ++rank) {
        if (labels[idx[rank]]) {
            hits += 1.0;
            sum += hits / static_cast<double>(rank + 1);
        }
    }
    return sum / static_cast<double>(pos);
}

std::vector<int> top_matched_indices(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& labels) {
    check_lengths(scores, labels);
    const long pos = positive_count(labels);
    if (pos == 0) throw std::invalid_argument("f1_matched: needs at least one positive");
    const auto idx = ranking(scores);
    return {idx.begin(), idx.begin() + pos};
}

double f1_matched(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    const auto top = top_matched_indices(scores, labels);
    long tp = 0;
    for (int j : top) tp += labels[j] ? 1 : 0;
    return static_cast<double>(tp) / static_cast<double>(top.size());
}

MetricReport evaluate_targets(const CausalGraph& graph, const ScoreFn& score_fn) {
    MetricReport report;
    const auto label_matrix = graph.cause_label_matrix();
    const int n = graph.n();
    double sum_auroc = 0, sum_ap = 0, sum_f1 = 0;
    for (int i = 0; i < n; ++i) {
        const auto* lrow = &label_matrix[static_cast<std::size_t>(i) * n];
        long pos = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) pos += lrow[j];
        if (pos == 0) continue;  // not a valid target
        if (pos == n - 1) {      // no negatives: metrics undefined
            ++report.skipped_targets;
            continue;
        }
        const auto full = score_fn(i);
        if (static_cast<int>(full.size()) != n)
            throw std::invalid_argument("evaluate_targets: score vector length mismatch");
        std::vector<double> scores;
        std::vector<std::uint8_t> labels;
        scores.reserve(n - 1);
        labels.reserve(n - 1);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;  // a variable is never its own cause
            scores.push_back(full[j]);
            labels.push_back(lrow[j]);
        }
        TargetMetrics tm;
        tm.target = i;
        tm.auroc = auroc(scores, labels);
        tm.ap = average_precision(scores, labels);
        tm.f1 = f1_matched(scores, labels);
        sum_auroc += tm.auroc;
        sum_ap += tm.ap;
        sum_f1 += tm.f1;
        report.per_target.push_back(tm);
    }
    report.valid_targets = static_cast<int>(report.per_target.size());
    if (report.valid_targets > 0) {
        report.mean_auroc = sum_auroc / report.valid_targets;
        report.mean_ap = sum_ap / report.valid_targets;
        report.mean_f1 = sum_f1 / report.valid_targets;
    }
    return report;
}

DistanceErrorCurve fnr_by_distance(const CausalGraph& graph,
                                   const std::map<int, std::vector<int>>& predictions) {
    DistanceErrorCurve curve;
    std::map<int, std::pair<long, long>> counts;  // d -> (missed, total)
    for (const auto& [target, predicted] : predictions) {
        std::vector<bool> hit(graph.n(), false);
        for (int j : predicted) hit[j] = true;
        for (int j : graph.ancestors(target)) {
            const int d = graph.distance(j, target);
            auto& [missed, total] = counts[d];
            ++total;
            if (!hit[j]) ++missed;
        }
    }
    for (const auto& [d, mt] : counts)
        curve.buckets[d] = {static_cast<double>(mt.first) / static_cast<double>(mt.second),
                            mt.second};
    return curve;
}

double propagated_error(double e, int d) {
    if (e < 0.0 || e > 1.0 || d < 0) throw std::invalid_argument("propagated_error: bad input");
    return 1.0 - std::pow(1.0 - e, d);
}

double relative_auroc(double p, double p_best, double p_random) {
    if (p_best == p_random)
        throw std::invalid_argument("relative_auroc: p_best equals p_random");
    return 100.0 * (p - p_random) / (p_best - p_random);
}

std::vector<double> correlation_baseline(const std::vector<float>& x, int n, int m, int target) {
    if (x.size() != static_cast<std::size_t>(n) * m)
        throw std::invalid_argument("correlation_baseline: shape mismatch");
    if (target < 0 || target >= n)
        throw std::invalid_argument("correlation_baseline: target out of range");
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto* row = &x[static_cast<std::size_t>(i) * m];
        for (int c = 0; c < m; ++c) mean[i] += row[c];
        mean[i] /= m;
        for (int c = 0; c < m; ++c) var[i] += (row[c] - mean[i]) * (row[c] - mean[i]);
    }
    std::vector<double> s(n, 0.0);
    const auto* trow = &x[static_cast<std::size_t>(target) * m];
    if (var[target] <= 0.0) return s;
    for (int j = 0; j < n; ++j) {
        if (var[j] <= 0.0) continue;
        const auto* jrow = &x[static_cast<std::size_t>(j) * m];
        double cov = 0.0;
        for (int c = 0; c < m; ++c) cov += (jrow[c] - mean[j]) * (trow[c] - mean[target]);
        s[j] = std::fabs(cov / std::sqrt(var[j] * var[target]));
    }
    return s;
}

std::vector<double> random_baseline(int n, int target, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x30u, static_cast<std::uint64_t>(target)));
    std::vector<double> s(n);
    for (auto& v : s) v = rng.uniform();
    return s;
}

}  // namespace tcd
