#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tcd {

struct ModelConfig {
    int layers = 10;
    int embed_dim = 16;  // d
    int heads = 16;
    int ff_hidden = 96;

    void validate() const;
};

struct TensorSpec {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    int fan_in = 0;  // 0 marks layer-norm weights (init 1) and biases (init 0)
    bool ones = false;
};

// Flat parameter vector with a named-tensor table. Offsets depend only on the
// config, so checkpoints round-trip by name.
class ParamLayout {
public:
    static ParamLayout build(const ModelConfig& cfg);
    const std::vector<TensorSpec>& tensors() const { return tensors_; }
    std::size_t total() const { return total_; }
    std::size_t offset(const std::string& name) const;

private:
    std::vector<TensorSpec> tensors_;
    std::size_t total_ = 0;
};

std::size_t count_params(const ModelConfig& cfg);

template <typename T>
struct ModelParams {
    ModelConfig cfg;
    ParamLayout layout;
    std::vector<T> values;
};

// Fan-in-scaled uniform init; deterministic per (cfg, seed).
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// F in R^{nv x 2 x d}; slot 0 holds candidate-cause features, slot 1 target
// features. Stored [variable][slot][channel].
template <typename T>
struct FeatureMatrix {
    int nv = 0;
    int d = 0;
    std::vector<T> f;

    const T* at(int var, int slot) const { return &f[(static_cast<std::size_t>(var) * 2 + slot) * d]; }
    T* at(int var, int slot) { return &f[(static_cast<std::size_t>(var) * 2 + slot) * d]; }
};

// Activations cached by the forward pass for the backward pass. With
// keep_for_backward=false only transient buffers are used, which keeps
// inference memory at O(nv*no*d).
template <typename T>
struct ForwardCache {
    bool keep_for_backward = true;
    int nv = 0, no = 0;
    std::vector<T> input;                 // nv*no*2 stacked (X, M)
    std::vector<std::vector<T>> sub_in;   // stream entering each sublayer (3 per layer)
    std::vector<T> pooled;                // nv*d after observation mean-pool
    std::vector<T> head_norm[2];          // LN output per head, nv*d
    std::vector<T> head_pre[2];           // fc1 pre-activation per head, nv*ff
    // scratch reused across calls
    std::vector<T> stream;
};

// Stacks [X, M], embeds to d, applies `layers` x (variable-axis attention,
// observation-axis attention, feed-forward) with pre-LN residual sublayers,
// mean-pools over observations and applies the two head blocks.
template <typename T>
void extract_features(const ModelParams<T>& p, const float* x, const std::uint8_t* m, int nv,
                      int no, FeatureMatrix<T>& f, ForwardCache<T>& cache);

// Accumulates d(loss)/d(params) into `grad` (size layout.total()), given
// d(loss)/dF. Requires the cache of the matching forward call.
template <typename T>
void extract_features_backward(const ModelParams<T>& p, const ForwardCache<T>& cache,
                               const FeatureMatrix<T>& dF, std::vector<T>& grad);

// s[j] = <F[j,0], F[target_pos,1]>.
template <typename T>
std::vector<T> score(const FeatureMatrix<T>& f, int target_pos);

// score(extract_features(...), target_pos), sharing one feature extraction.
template <typename T>
std::vector<T> forward(const ModelParams<T>& p, const float* x, const std::uint8_t* m, int nv,
                       int no, int target_pos);

// Checkpoint directory: config.json (version, architecture, dtype, named
// tensor table, checksum) + params.bin (raw little-endian values).
template <typename T>
void save_checkpoint(const ModelParams<T>& p, const std::filesystem::path& dir);

struct CheckpointInfo {
    ModelConfig cfg;
    std::string dtype;  // "f32" or "f64"
};
CheckpointInfo peek_checkpoint(const std::filesystem::path& dir);

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& dir);

}  // namespace tcd
