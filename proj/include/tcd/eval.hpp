#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "tcd/graph.hpp"

namespace tcd {

// Probability that a random positive outranks a random negative, ties counted
// one half. Sort-based (rank formula); requires at least one positive and one
// negative.
double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Same quantity by the exact pairwise definition. O(P*N); kept as the
// independent oracle for auroc.
double auroc_pairwise(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Non-interpolated average precision; ties ordered by ascending index.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels);

// F1 after thresholding so the predicted-positive count equals the number of
// true positives (ties broken by ascending index). With matched counts
// precision = recall = F1.
double f1_matched(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Top-P indices by score (P = positive count), the prediction set f1_matched
// scores.
std::vector<int> top_matched_indices(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& labels);

struct TargetMetrics {
    int target = 0;
    double auroc = 0.0;
    double ap = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    std::vector<TargetMetrics> per_target;
    double mean_auroc = 0.0;
    double mean_ap = 0.0;
    double mean_f1 = 0.0;
    int valid_targets = 0;    // targets with >= 1 cause that were evaluable
    int skipped_targets = 0;  // degenerate label vectors (no negatives)
};

// Iterates targets with at least one cause; the self-index is excluded from
// every score/label vector before metrics are computed.
using ScoreFn = std::function<std::vector<double>(int target)>;
MetricReport evaluate_targets(const CausalGraph& graph, const ScoreFn& score_fn);

struct DistanceErrorCurve {
    // shortest-path distance -> (false negative rate, support)
    std::map<int, std::pair<double, long>> buckets;
};

// predictions[i] = predicted-positive variable set for target i (only valid
// targets need entries). Buckets every true (cause, target) pair by shortest
// directed path length.
DistanceErrorCurve fnr_by_distance(const CausalGraph& graph,
                                   const std::map<int, std::vector<int>>& predictions);

// 1 - (1-e)^d
double propagated_error(double e, int d);

// 100 (p - p_random) / (p_best - p_random)
double relative_auroc(double p, double p_best, double p_random);

// |Pearson correlation| of each row against row `target`; zero-variance rows
// score 0.
std::vector<double> correlation_baseline(const std::vector<float>& x, int n, int m, int target);

std::vector<double> random_baseline(int n, int target, std::uint64_t seed);

}  // namespace tcd
