#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tcd {

using Edge = std::pair<int, int>;  // (src, dst) meaning src -> dst

// Immutable directed acyclic causal graph. Construction validates acyclicity
// and caches a topological order plus parent/child adjacency.
class CausalGraph {
public:
    CausalGraph(int n, std::vector<Edge> edges);

    int n() const { return n_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<int>& topo_order() const { return topo_; }

    const std::vector<int>& parents(int i) const;
    const std::vector<int>& children(int i) const;
    bool is_root(int i) const { return parents(i).empty(); }

    // All j with a directed path j -> ... -> i, sorted ascending. Never
    // contains i itself.
    std::vector<int> ancestors(int i) const;

    // n x n row-major matrix, row i marks ancestors of i. Diagonal is zero.
    std::vector<std::uint8_t> cause_label_matrix() const;

    // Shortest directed path length from j to i, or -1 if unreachable.
    int distance(int from, int to) const;

private:
    int n_;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
    std::vector<int> topo_;
};

enum class GraphKind { ER, SF, SF_DIRECT, SBM, CUSTOM };

std::string to_string(GraphKind kind);
GraphKind graph_kind_from_string(const std::string& s);

struct GraphSpec {
    GraphKind kind = GraphKind::ER;
    double avg_degree = 2.0;       // target mean in-degree for generated kinds
    int sbm_blocks = 5;            // SBM only
    double sbm_intra_ratio = 10.0; // intra-block edge probability / inter-block
    std::vector<Edge> edges;       // CUSTOM only
};

// Deterministic per (spec, n, seed). Generated graphs are acyclic by
// construction (edges follow a random node ordering).
CausalGraph generate_graph(const GraphSpec& spec, int n, std::uint64_t seed);

// Latent projection onto `keep` (directed edges only): the result has an edge
// j -> k iff g has a directed path j ~> k whose intermediate nodes all lie
// outside `keep`. Node v of the result corresponds to sorted(keep)[v].
CausalGraph marginalize(const CausalGraph& g, const std::vector<int>& keep);

struct SparsityStats {
    double direct_cause_ratio = 0.0;  // mean over graphs of mean_i |pa(i)|/n
    double cause_ratio_min = 0.0;     // range over graphs of mean_i |ca(i)|/n
    double cause_ratio_max = 0.0;
};

SparsityStats sparsity_stats(const std::vector<CausalGraph>& graphs);

// edges.tsv: one "src<TAB>dst" row per edge, 0-indexed, LF line endings.
CausalGraph load_edge_list(const std::filesystem::path& path, int n);
void save_edge_list(const CausalGraph& g, const std::filesystem::path& path);

// graph_meta.json sidecar (n, kind, seed, optional name map) next to edges.tsv.
void save_graph_dir(const CausalGraph& g, const GraphSpec& spec, std::uint64_t seed,
                    const std::filesystem::path& dir,
                    const std::vector<std::string>& names = {});
CausalGraph load_graph_dir(const std::filesystem::path& dir);

}  // namespace tcd
