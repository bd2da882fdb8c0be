#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tcd/graph.hpp"

namespace tcd {

// Observation matrix X (variables x observations) paired with the boolean
// intervention mask M. Column eligibility queries are frequent, so the
// intervened-variable list per column is cached at construction.
struct ObservationSet {
    int n = 0;
    int m = 0;
    std::vector<float> x;        // n*m row-major, row = variable
    std::vector<std::uint8_t> mask;  // n*m row-major, entries in {0,1}

    ObservationSet() = default;
    ObservationSet(int n_, int m_, std::vector<float> x_, std::vector<std::uint8_t> mask_);

    float at(int i, int col) const { return x[static_cast<std::size_t>(i) * m + col]; }
    std::uint8_t mask_at(int i, int col) const {
        return mask[static_cast<std::size_t>(i) * m + col];
    }

    // Variables intervened in a column (usually none or one).
    const std::vector<int>& interventions_in(int col) const { return col_interventions_[col]; }

    void rebuild_intervention_index();

private:
    std::vector<std::vector<int>> col_interventions_;
};

struct SubsampleSpec {
    int n_sub = 200;   // variable subsample size n'
    int m_sub = 200;   // observation subsample size m'
    std::uint64_t seed = 0;
};

// One model input: rows are the variables V (global indices, ascending),
// columns the subsampled observations O.
struct LocalBatch {
    std::vector<float> x;            // |V| * m_sub row-major
    std::vector<std::uint8_t> mask;  // |V| * m_sub
    std::vector<int> vars;           // V, global indices of rows
    int target_pos = -1;             // row position of the target within V
    int m_sub = 0;
    std::vector<std::uint8_t> label_slice;  // over V; empty unless labels given
};

// Training variant: same (V, O) restriction but every row is a target.
struct MatrixBatch {
    std::vector<float> x;
    std::vector<std::uint8_t> mask;
    std::vector<int> vars;
    int m_sub = 0;
    std::vector<std::uint8_t> labels;  // |V| x |V| row-major; row t = labels for target V[t]
};

// log2(1 + 1e6 * v / column_sum); all-zero columns map to zero. Rejects
// negative entries.
std::vector<float> cpm_normalize(const std::vector<float>& x, int n, int m);

// Per-row z-score; zero-variance rows map to zero. Used for analytic-SCM data
// where counts-per-million does not apply.
std::vector<float> standardize_rows(const std::vector<float>& x, int n, int m);

// S(X, M, i): V is a uniform size-n_sub subset containing i; eligible columns
// are exactly those whose intervened variables all lie inside V; O draws m_sub
// eligible columns (with replacement iff fewer are eligible). `labels`, when
// given, is the n x n cause-label matrix and fills label_slice for the target.
LocalBatch subsample(const ObservationSet& obs, int target, const SubsampleSpec& spec,
                     const std::vector<std::uint8_t>* labels = nullptr);

// Training-side draw: V has no pinned target; labels rows are produced for
// every variable in V.
MatrixBatch subsample_matrix(const ObservationSet& obs, const SubsampleSpec& spec,
                             const std::vector<std::uint8_t>* labels = nullptr);

// Restriction to an explicit variable block (kept in the given row order):
// only the observation subsample is drawn. Used by ensembled inference, where
// the blocks come from partition_for_inference.
LocalBatch subsample_given_vars(const ObservationSet& obs, const std::vector<int>& vars,
                                int target_pos, int m_sub, std::uint64_t seed);

// Splits a random permutation of {0..n-1}\{i} into ceil(n/n_sub) contiguous
// blocks of size <= n_sub, then appends i to each block.
std::vector<std::vector<int>> partition_for_inference(int n, int target, int n_sub,
                                                      std::uint64_t seed);

struct LabeledDataset {
    ObservationSet obs;
    CausalGraph graph;
    std::vector<std::uint8_t> labels;  // n x n, equals graph.cause_label_matrix()
    std::string provenance;            // JSON text: generator kind, seeds, fidelity

    LabeledDataset(ObservationSet o, CausalGraph g, std::string prov);
};

// Dataset directory: meta.json, X.bin (f32 LE row-major), M.bin (u8),
// edges.tsv, labels.bin (u8). Layouts are documented in FORMATS.md. Writes are
// atomic (temp file + rename); loads verify shapes and SHA-256 checksums.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

// SHA-256 hex digest of a byte range (OpenSSL-backed).
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

// Write bytes to a temp file in the target directory, then rename into place.
void atomic_write(const std::filesystem::path& path, const void* data, std::size_t size);

}  // namespace tcd
