#include "tcd/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "tcd/eval.hpp"
#include "tcd/rng.hpp"

namespace tcd {

void TrainConfig::validate() const {
    if (batch_size < 1 || max_steps < 1 || base_lr <= 0.0 || eval_every < 1 || patience < 1 ||
        n_sub < 1 || m_sub < 1 || weight_decay < 0.0)
        throw std::invalid_argument("train config: all fields must be positive");
    if (patience % eval_every != 0)
        throw std::invalid_argument("train config: patience must be a multiple of eval_every");
}

double bce_with_logits(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& labels) {
    if (logits.size() != labels.size())
        throw std::invalid_argument("bce_with_logits: length mismatch");
    if (logits.empty()) throw std::invalid_argument("bce_with_logits: empty input");
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double z = logits[k];
        // softplus(z) - y*z in log-sum-exp form
        const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
        sum += softplus - (labels[k] ? z : 0.0);
    }
    return sum / static_cast<double>(logits.size());
}

double cosine_lr(long step, long total, double base) {
    if (step < 0 || step > total) throw std::invalid_argument("cosine_lr: step out of range");
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                        static_cast<double>(total)));
}

template <typename T>
void AdamWState<T>::update(std::vector<T>& params, const std::vector<T>& grad, double lr,
                           double weight_decay) {
    if (params.size() != m.size() || grad.size() != m.size())
        throw std::invalid_argument("adamw: size mismatch");
    ++step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = static_cast<double>(grad[k]);
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        const double p = static_cast<double>(params[k]);
        params[k] = static_cast<T>(p - lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                             weight_decay * p));
    }
}

template <typename T>
double matrix_loss_and_grad(const FeatureMatrix<T>& f, const std::vector<std::uint8_t>& labels,
                            FeatureMatrix<T>& df) {
    const int nv = f.nv, d = f.d;
    if (labels.size() != static_cast<std::size_t>(nv) * nv)
        throw std::invalid_argument("matrix_loss_and_grad: label shape mismatch");
    df.nv = nv;
    df.d = d;
    df.f.assign(static_cast<std::size_t>(nv) * 2 * d, T(0));
    const double denom = static_cast<double>(nv) * nv;
    double loss = 0.0;
    for (int t = 0; t < nv; ++t) {
        const T* ft = f.at(t, 1);
        T* dft = df.at(t, 1);
        for (int j = 0; j < nv; ++j) {
            const T* fj = f.at(j, 0);
            double z = 0.0;
            for (int c = 0; c < d; ++c) z += static_cast<double>(fj[c]) * ft[c];
            const double y = labels[static_cast<std::size_t>(t) * nv + j] ? 1.0 : 0.0;
            loss += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) - y * z;
            const double dz = (1.0 / (1.0 + std::exp(-z)) - y) / denom;
            T* dfj = df.at(j, 0);
            for (int c = 0; c < d; ++c) {
                dfj[c] += static_cast<T>(dz * ft[c]);
                dft[c] += static_cast<T>(dz * fj[c]);
            }
        }
    }
    return loss / denom;
}

namespace {

// Mean AUROC over the targets of fixed validation subsamples.
template <typename T>
double validation_auroc(const ModelParams<T>& params, const std::vector<MatrixBatch>& batches) {
    double sum = 0.0;
    long count = 0;
    FeatureMatrix<T> f;
    ForwardCache<T> cache;
    cache.keep_for_backward = false;
    for (const auto& batch : batches) {
        const int nv = static_cast<int>(batch.vars.size());
        extract_features(params, batch.x.data(), batch.mask.data(), nv, batch.m_sub, f, cache);
        for (int t = 0; t < nv; ++t) {
            std::vector<double> scores;
            std::vector<std::uint8_t> labels;
            scores.reserve(nv - 1);
            labels.reserve(nv - 1);
            const T* ft = f.at(t, 1);
            long pos = 0;
            for (int j = 0; j < nv; ++j) {
                if (j == t) continue;
                const T* fj = f.at(j, 0);
                double z = 0.0;
                for (int c = 0; c < f.d; ++c) z += static_cast<double>(fj[c]) * ft[c];
                scores.push_back(z);
                labels.push_back(batch.labels[static_cast<std::size_t>(t) * nv + j]);
                pos += labels.back();
            }
            if (pos == 0 || pos == nv - 1) continue;
            sum += auroc(scores, labels);
            ++count;
        }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

template <typename T>
TrainResult<T> train(const std::vector<LabeledDataset>& train_data, const ModelConfig& mc,
                     const TrainConfig& tc, const std::vector<LabeledDataset>& val_data,
                     std::ostream* log_jsonl) {
    tc.validate();
    if (train_data.empty()) throw std::invalid_argument("train: no training datasets");

    auto params = init_params<T>(mc, derive_seed(tc.seed, 0x40u));
    AdamWState<T> opt(params.values.size());
    std::vector<T> grad(params.values.size());

    // validation subsamples are fixed once so the metric is comparable across
    // evaluations
    std::vector<MatrixBatch> val_batches;
    for (std::size_t v = 0; v < val_data.size(); ++v)
        val_batches.push_back(subsample_matrix(
            val_data[v].obs, {tc.n_sub, tc.m_sub, derive_seed(tc.seed, 0x43u, v)},
            &val_data[v].labels));

    TrainResult<T> result{params, -1, 0.0, 0};
    if (log_jsonl)
        *log_jsonl << "{\"event\":\"start\",\"seed\":" << tc.seed
                   << ",\"batch_size\":" << tc.batch_size << ",\"max_steps\":" << tc.max_steps
                   << ",\"base_lr\":" << tc.base_lr << ",\"n_sub\":" << tc.n_sub
                   << ",\"m_sub\":" << tc.m_sub << "}\n";

    const int b = tc.batch_size;
    std::vector<std::vector<T>> item_grads(b, std::vector<T>(params.values.size()));
    std::vector<double> item_loss(b);
    double loss_accum = 0.0;
    long loss_count = 0;

    for (long step = 0; step < tc.max_steps; ++step) {
        // batch composition drawn sequentially for determinism
        Rng step_rng(derive_seed(tc.seed, 0x41u, static_cast<std::uint64_t>(step)));
        std::vector<int> picks(b);
        for (int j = 0; j < b; ++j)
            picks[j] = static_cast<int>(step_rng.below(train_data.size()));

#pragma omp parallel for schedule(dynamic, 1)
        for (int j = 0; j < b; ++j) {
            const auto& ds = train_data[picks[j]];
            const auto batch = subsample_matrix(
                ds.obs,
                {tc.n_sub, tc.m_sub,
                 derive_seed(tc.seed, 0x42u, static_cast<std::uint64_t>(step),
                             static_cast<std::uint64_t>(j))},
                &ds.labels);
            const int nv = static_cast<int>(batch.vars.size());
            FeatureMatrix<T> f, df;
            ForwardCache<T> cache;
            extract_features(params, batch.x.data(), batch.mask.data(), nv, batch.m_sub, f,
                             cache);
            item_loss[j] = matrix_loss_and_grad(f, batch.labels, df);
            std::fill(item_grads[j].begin(), item_grads[j].end(), T(0));
            extract_features_backward(params, cache, df, item_grads[j]);
        }

        std::fill(grad.begin(), grad.end(), T(0));
        double loss = 0.0;
        for (int j = 0; j < b; ++j) {
            loss += item_loss[j] / b;
            const auto& g = item_grads[j];
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k] / b;
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        loss_accum += loss;
        ++loss_count;

        const double lr = cosine_lr(step, tc.max_steps, tc.base_lr);
        opt.update(params.values, grad, lr, tc.weight_decay);
        result.stop_step = step + 1;

        if ((step + 1) % tc.eval_every == 0) {
            const double metric =
                val_batches.empty() ? 0.0 : validation_auroc(params, val_batches);
            const bool improved = result.best_step < 0 || metric > result.best_metric;
            if (improved) {
                result.best_metric = metric;
                result.best_step = step + 1;
                result.params.values = params.values;
            }
            if (log_jsonl)
                *log_jsonl << "{\"event\":\"eval\",\"step\":" << step + 1 << ",\"lr\":" << lr
                           << ",\"train_loss\":" << loss_accum / std::max(1L, loss_count)
                           << ",\"val_auroc\":" << metric
                           << ",\"best_step\":" << result.best_step << "}\n";
            loss_accum = 0.0;
            loss_count = 0;
            if (!val_batches.empty() && step + 1 - result.best_step >= tc.patience) break;
        }
    }
    if (result.best_step < 0) result.params.values = params.values;  // no eval ever ran
    if (log_jsonl)
        *log_jsonl << "{\"event\":\"done\",\"best_step\":" << result.best_step
                   << ",\"best_val_auroc\":" << result.best_metric
                   << ",\"stop_step\":" << result.stop_step << "}\n";
    return result;
}

CauseScoreVector infer_with_scorer(const BlockScorer& scorer, const ObservationSet& obs,
                                   int target, const InferenceConfig& ic,
                                   std::vector<long>* counts) {
    if (target < 0 || target >= obs.n)
        throw std::invalid_argument("infer: target out of range");
    if (ic.ensemble < 1) throw std::invalid_argument("infer: ensemble size must be >= 1");

    struct Task {
        std::vector<int> vars;
        std::uint64_t seed;
        std::vector<double> out;
    };
    std::vector<Task> tasks;
    for (int t = 0; t < ic.ensemble; ++t) {
        auto blocks = partition_for_inference(
            obs.n, target, ic.n_sub, derive_seed(ic.seed, 0x50u, static_cast<std::uint64_t>(t)));
        for (std::size_t j = 0; j < blocks.size(); ++j)
            tasks.push_back({std::move(blocks[j]),
                             derive_seed(ic.seed, 0x51u, static_cast<std::uint64_t>(t), j),
                             {}});
    }

#pragma omp parallel for schedule(dynamic, 1)
    for (long k = 0; k < static_cast<long>(tasks.size()); ++k) {
        auto& task = tasks[k];
        const int target_pos = static_cast<int>(task.vars.size()) - 1;  // appended last
        const auto batch =
            subsample_given_vars(obs, task.vars, target_pos, ic.m_sub, task.seed);
        task.out = scorer(batch.x, batch.mask, static_cast<int>(task.vars.size()), ic.m_sub,
                          target_pos);
    }

    CauseScoreVector result;
    result.target = target;
    result.s.assign(obs.n, 0.0);
    if (counts) counts->assign(obs.n, 0);
    for (const auto& task : tasks) {
        for (std::size_t pos = 0; pos < task.vars.size(); ++pos) {
            result.s[task.vars[pos]] += task.out[pos];
            if (counts) ++(*counts)[task.vars[pos]];
        }
    }
    for (auto& v : result.s) v /= static_cast<double>(ic.ensemble);
    return result;
}

template <typename T>
CauseScoreVector infer(const ModelParams<T>& p, const ObservationSet& obs, int target,
                       const InferenceConfig& ic, std::vector<long>* counts) {
    const auto scorer = [&p](const std::vector<float>& x, const std::vector<std::uint8_t>& m,
                             int nv, int no, int target_pos) {
        const auto out = forward(p, x.data(), m.data(), nv, no, target_pos);
        return std::vector<double>(out.begin(), out.end());
    };
    return infer_with_scorer(scorer, obs, target, ic, counts);
}

template <typename T>
std::vector<ComplexityRow> measure_complexity(const ModelParams<T>& p,
                                              const std::vector<ComplexityCase>& cases,
                                              const InferenceConfig& base, int per_var, int obs,
                                              int repeats, std::uint64_t seed) {
    std::vector<ComplexityRow> rows;
    for (const auto& c : cases) {
        // synthetic knockout suite: standard-normal X, one intervention row
        // group per variable
        const int m = c.n * per_var + obs;
        Rng rng(derive_seed(seed, 0x60u, static_cast<std::uint64_t>(c.n)));
        std::vector<float> x(static_cast<std::size_t>(c.n) * m);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        std::vector<std::uint8_t> mask(x.size(), 0);
        for (int j = 0; j < c.n; ++j)
            for (int k = 0; k < per_var; ++k)
                mask[static_cast<std::size_t>(j) * m + obs + j * per_var + k] = 1;
        ObservationSet data(c.n, m, std::move(x), std::move(mask));

        InferenceConfig ic = base;
        ic.ensemble = c.ensemble;
        std::vector<double> times;
        for (int r = 0; r < repeats; ++r) {
            ic.seed = derive_seed(seed, 0x61u, r);
            const auto t0 = std::chrono::steady_clock::now();
            infer(p, data, 0, ic);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        rows.push_back({c.n, c.ensemble, times[times.size() / 2]});
    }
    return rows;
}

double loglog_slope(const std::vector<ComplexityRow>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
        const double lx = std::log(static_cast<double>(r.n));
        const double ly = std::log(r.seconds);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double k = static_cast<double>(rows.size());
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

template struct AdamWState<float>;
template struct AdamWState<double>;
template double matrix_loss_and_grad<float>(const FeatureMatrix<float>&,
                                            const std::vector<std::uint8_t>&,
                                            FeatureMatrix<float>&);
template double matrix_loss_and_grad<double>(const FeatureMatrix<double>&,
                                             const std::vector<std::uint8_t>&,
                                             FeatureMatrix<double>&);
template TrainResult<float> train<float>(const std::vector<LabeledDataset>&, const ModelConfig&,
                                         const TrainConfig&, const std::vector<LabeledDataset>&,
                                         std::ostream*);
template TrainResult<double> train<double>(const std::vector<LabeledDataset>&,
                                           const ModelConfig&, const TrainConfig&,
                                           const std::vector<LabeledDataset>&, std::ostream*);
template CauseScoreVector infer<float>(const ModelParams<float>&, const ObservationSet&, int,
                                       const InferenceConfig&, std::vector<long>*);
template CauseScoreVector infer<double>(const ModelParams<double>&, const ObservationSet&, int,
                                        const InferenceConfig&, std::vector<long>*);
template std::vector<ComplexityRow> measure_complexity<float>(
    const ModelParams<float>&, const std::vector<ComplexityCase>&, const InferenceConfig&, int,
    int, int, std::uint64_t);
template std::vector<ComplexityRow> measure_complexity<double>(
    const ModelParams<double>&, const std::vector<ComplexityCase>&, const InferenceConfig&, int,
    int, int, std::uint64_t);

}  // namespace tcd
