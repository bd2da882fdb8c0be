#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "tcd/data.hpp"
#include "tcd/model.hpp"

namespace tcd {

struct TrainConfig {
    int batch_size = 32;
    long max_steps = 40000;
    double base_lr = 8e-4;
    double weight_decay = 1e-5;
    long eval_every = 200;
    long patience = 4000;  // steps without validation improvement; multiple of eval_every
    int n_sub = 200;
    int m_sub = 200;
    std::uint64_t seed = 0;

    void validate() const;
};

struct InferenceConfig {
    int n_sub = 200;
    int m_sub = 200;
    int ensemble = 50;  // T
    std::uint64_t seed = 0;
};

struct CauseScoreVector {
    std::vector<double> s;
    int target = 0;  // s[target] is the never-evaluated self-score
};

// Mean over entries of the numerically stable binary cross-entropy on logits.
double bce_with_logits(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& labels);

// base * 0.5 * (1 + cos(pi * step / total))
double cosine_lr(long step, long total, double base);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled-weight-decay Adam; moments kept in double regardless of T.
template <typename T>
struct AdamWState {
    std::vector<double> m, v;
    long step = 0;
    AdamWConfig cfg;

    explicit AdamWState(std::size_t size, AdamWConfig c = {})
        : m(size, 0.0), v(size, 0.0), cfg(c) {}

    void update(std::vector<T>& params, const std::vector<T>& grad, double lr,
                double weight_decay);
};

// BCE loss over all (target, candidate) pairs of one subsampled matrix, mean
// over nv*nv entries; accumulates d(loss)/dF. Labels are nv x nv row-major
// (row t = labels for target at row t).
template <typename T>
double matrix_loss_and_grad(const FeatureMatrix<T>& f, const std::vector<std::uint8_t>& labels,
                            FeatureMatrix<T>& df);

template <typename T>
struct TrainResult {
    ModelParams<T> params;  // best-validation parameters
    long best_step = -1;
    double best_metric = 0.0;
    long stop_step = 0;  // number of optimizer steps actually taken
};

// Alg. 1 local training: per step draws batch_size dataset subsamples, treats
// every variable in each V as a target off one shared feature extraction, and
// applies AdamW with a cosine schedule. Stops early when the validation AUROC
// has not improved for `patience` steps. Throws on non-finite loss.
template <typename T>
TrainResult<T> train(const std::vector<LabeledDataset>& train_data, const ModelConfig& mc,
                     const TrainConfig& tc, const std::vector<LabeledDataset>& val_data,
                     std::ostream* log_jsonl = nullptr);

// Scorer over one variable block; used to stub the model out in tests.
using BlockScorer = std::function<std::vector<double>(
    const std::vector<float>& x, const std::vector<std::uint8_t>& m, int nv, int no,
    int target_pos)>;

// Alg. 2 ensembled local inference: T passes of a fresh partition, per-block
// observation subsample and forward, accumulated at global indices and divided
// by T. Every j != target receives exactly T contributions (recorded in
// `counts` when given).
CauseScoreVector infer_with_scorer(const BlockScorer& scorer, const ObservationSet& obs,
                                   int target, const InferenceConfig& ic,
                                   std::vector<long>* counts = nullptr);

template <typename T>
CauseScoreVector infer(const ModelParams<T>& p, const ObservationSet& obs, int target,
                       const InferenceConfig& ic, std::vector<long>* counts = nullptr);

struct ComplexityCase {
    int n = 0;
    int ensemble = 0;
};

struct ComplexityRow {
    int n = 0;
    int ensemble = 0;
    double seconds = 0.0;
};

// Times infer on synthetic knockout suites over the given (n, T) cases;
// median of `repeats` runs per case.
template <typename T>
std::vector<ComplexityRow> measure_complexity(const ModelParams<T>& p,
                                              const std::vector<ComplexityCase>& cases,
                                              const InferenceConfig& base, int per_var, int obs,
                                              int repeats, std::uint64_t seed);

// Least-squares slope of log(seconds) against log(n).
double loglog_slope(const std::vector<ComplexityRow>& rows);

}  // namespace tcd
