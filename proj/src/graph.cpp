#include "tcd/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tcd/rng.hpp"

namespace tcd {

CausalGraph::CausalGraph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    if (n_ <= 0) throw std::invalid_argument("graph: n must be positive");
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    parents_.resize(n_);
    children_.resize(n_);
    for (const auto& [src, dst] : edges_) {
        if (src < 0 || src >= n_ || dst < 0 || dst >= n_)
            throw std::invalid_argument("graph: edge index out of range");
        if (src == dst) throw std::invalid_argument("graph: self-loop");
        parents_[dst].push_back(src);
        children_[src].push_back(dst);
    }
    for (auto& p : parents_) std::sort(p.begin(), p.end());
    for (auto& c : children_) std::sort(c.begin(), c.end());

    // Kahn's algorithm; failure to place all nodes means a cycle.
    std::vector<int> indeg(n_);
    for (int i = 0; i < n_; ++i) indeg[i] = static_cast<int>(parents_[i].size());
    std::deque<int> q;
    for (int i = 0; i < n_; ++i)
        if (indeg[i] == 0) q.push_back(i);
    topo_.reserve(n_);
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        topo_.push_back(u);
        for (int v : children_[u])
            if (--indeg[v] == 0) q.push_back(v);
    }
    if (static_cast<int>(topo_.size()) != n_)
        throw std::invalid_argument("graph: edges contain a directed cycle");
}

const std::vector<int>& CausalGraph::parents(int i) const {
    if (i < 0 || i >= n_) throw std::out_of_range("graph: node index out of range");
    return parents_[i];
}

const std::vector<int>& CausalGraph::children(int i) const {
    if (i < 0 || i >= n_) throw std::out_of_range("graph: node index out of range");
    return children_[i];
}

std::vector<int> CausalGraph::ancestors(int i) const {
    if (i < 0 || i >= n_) throw std::out_of_range("graph: node index out of range");
    std::vector<bool> seen(n_, false);
    std::deque<int> q{i};
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int p : parents_[u]) {
            if (!seen[p]) {
                seen[p] = true;
                q.push_back(p);
            }
        }
    }
    std::vector<int> out;
    for (int j = 0; j < n_; ++j)
        if (seen[j] && j != i) out.push_back(j);
    return out;
}

std::vector<std::uint8_t> CausalGraph::cause_label_matrix() const {
    // DP over topo order with 64-bit ancestor bitsets.
    const std::size_t words = (static_cast<std::size_t>(n_) + 63) / 64;
    std::vector<std::uint64_t> anc(static_cast<std::size_t>(n_) * words, 0);
    for (int u : topo_) {
        auto* row = &anc[static_cast<std::size_t>(u) * words];
        for (int p : parents_[u]) {
            const auto* prow = &anc[static_cast<std::size_t>(p) * words];
            for (std::size_t w = 0; w < words; ++w) row[w] |= prow[w];
            row[static_cast<std::size_t>(p) / 64] |= 1ULL << (p % 64);
        }
    }
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n_) * n_, 0);
    for (int i = 0; i < n_; ++i) {
        const auto* row = &anc[static_cast<std::size_t>(i) * words];
        for (int j = 0; j < n_; ++j)
            if (row[static_cast<std::size_t>(j) / 64] >> (j % 64) & 1)
                labels[static_cast<std::size_t>(i) * n_ + j] = 1;
        labels[static_cast<std::size_t>(i) * n_ + i] = 0;
    }
    return labels;
}

int CausalGraph::distance(int from, int to) const {
    if (from == to) return 0;
    std::vector<int> dist(n_, -1);
    dist[from] = 0;
    std::deque<int> q{from};
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int v : children_[u]) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                if (v == to) return dist[v];
                q.push_back(v);
            }
        }
    }
    return dist[to];
}

std::string to_string(GraphKind kind) {
    switch (kind) {
        case GraphKind::ER: return "er";
        case GraphKind::SF: return "sf";
        case GraphKind::SF_DIRECT: return "sf_direct";
        case GraphKind::SBM: return "sbm";
        case GraphKind::CUSTOM: return "custom";
    }
    throw std::logic_error("unknown graph kind");
}

GraphKind graph_kind_from_string(const std::string& s) {
    if (s == "er") return GraphKind::ER;
    if (s == "sf") return GraphKind::SF;
    if (s == "sf_direct") return GraphKind::SF_DIRECT;
    if (s == "sbm") return GraphKind::SBM;
    if (s == "custom") return GraphKind::CUSTOM;
    throw std::invalid_argument("unknown graph kind: " + s);
}

namespace {

std::vector<int> random_order(int n, Rng& rng) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    return order;
}

// Each ordered pair (earlier, later) carries an independent edge with
// probability p = 2*deg/(n-1), which yields mean in-degree deg.
std::vector<Edge> gen_er(int n, double deg, Rng& rng) {
    const double p = 2.0 * deg / (n - 1);
    if (p > 1.0)
        throw std::invalid_argument("er: average degree " + std::to_string(deg) +
                                    " infeasible for n=" + std::to_string(n) +
                                    " (max (n-1)/2)");
    const auto order = random_order(n, rng);
    std::vector<Edge> edges;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (rng.bernoulli(p)) edges.emplace_back(order[a], order[b]);
    return edges;
}

// Preferential attachment over a random node ordering; node at position t
// attaches min(t, m) incoming edges to earlier nodes. SF weights attachment by
// total degree, SF_DIRECT by out-degree only (hub regulators).
std::vector<Edge> gen_sf(int n, double deg, bool direct, Rng& rng) {
    const int m = static_cast<int>(std::lround(deg));
    if (m < 0 || m >= n)
        throw std::invalid_argument("sf: average degree must be in [0, n)");
    const auto order = random_order(n, rng);
    std::vector<double> weight(n, 0.0);  // attachment mass per node
    std::vector<Edge> edges;
    std::vector<int> picked;
    for (int t = 1; t < n; ++t) {
        const int k = std::min(t, m);
        picked.clear();
        for (int e = 0; e < k; ++e) {
            double total = 0.0;
            for (int a = 0; a < t; ++a) {
                bool used = std::find(picked.begin(), picked.end(), a) != picked.end();
                if (!used) total += weight[order[a]] + 1.0;
            }
            double r = rng.uniform() * total;
            int chosen = -1;
            for (int a = 0; a < t; ++a) {
                bool used = std::find(picked.begin(), picked.end(), a) != picked.end();
                if (used) continue;
                r -= weight[order[a]] + 1.0;
                if (r <= 0.0) {
                    chosen = a;
                    break;
                }
            }
            if (chosen < 0) chosen = t - 1;  // guard against rounding at the tail
            picked.push_back(chosen);
            edges.emplace_back(order[chosen], order[t]);
            weight[order[chosen]] += 1.0;  // out-degree mass
        }
        if (!direct) weight[order[t]] += k;  // in-degree mass counts for plain SF
    }
    return edges;
}

// Fixed block count; intra-block pairs are `intra_ratio` times likelier than
// inter-block pairs, with the base rate solved to hit the target degree.
std::vector<Edge> gen_sbm(int n, double deg, int blocks, double intra_ratio, Rng& rng) {
    if (blocks < 1 || blocks > n) throw std::invalid_argument("sbm: invalid block count");
    const auto order = random_order(n, rng);
    std::vector<int> block(n);
    for (int a = 0; a < n; ++a) block[order[a]] = a % blocks;

    double intra_pairs = 0.0, inter_pairs = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            (block[order[a]] == block[order[b]] ? intra_pairs : inter_pairs) += 1.0;
    const double target_edges = deg * n;
    const double p_inter = target_edges / (inter_pairs + intra_ratio * intra_pairs);
    const double p_intra = intra_ratio * p_inter;
    if (p_intra > 1.0)
        throw std::invalid_argument("sbm: average degree infeasible with intra ratio");

    std::vector<Edge> edges;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const double p = block[order[a]] == block[order[b]] ? p_intra : p_inter;
            if (rng.bernoulli(p)) edges.emplace_back(order[a], order[b]);
        }
    return edges;
}

}  // namespace

CausalGraph generate_graph(const GraphSpec& spec, int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("generate_graph: n must be >= 2");
    if (spec.kind == GraphKind::CUSTOM) return CausalGraph(n, spec.edges);
    if (spec.avg_degree < 0.0) throw std::invalid_argument("generate_graph: negative degree");
    if (spec.avg_degree >= n)
        throw std::invalid_argument("generate_graph: degree >= n is infeasible");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(spec.kind), n));
    switch (spec.kind) {
        case GraphKind::ER: return CausalGraph(n, gen_er(n, spec.avg_degree, rng));
        case GraphKind::SF: return CausalGraph(n, gen_sf(n, spec.avg_degree, false, rng));
        case GraphKind::SF_DIRECT: return CausalGraph(n, gen_sf(n, spec.avg_degree, true, rng));
        case GraphKind::SBM:
            return CausalGraph(n, gen_sbm(n, spec.avg_degree, spec.sbm_blocks,
                                          spec.sbm_intra_ratio, rng));
        default: throw std::logic_error("unreachable");
    }
}

CausalGraph marginalize(const CausalGraph& g, const std::vector<int>& keep) {
    if (keep.empty()) throw std::invalid_argument("marginalize: empty variable subset");
    std::vector<int> vars = keep;
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    std::vector<int> local(g.n(), -1);
    for (std::size_t k = 0; k < vars.size(); ++k) {
        if (vars[k] < 0 || vars[k] >= g.n())
            throw std::invalid_argument("marginalize: subset index out of range");
        local[vars[k]] = static_cast<int>(k);
    }

    std::vector<Edge> edges;
    std::vector<bool> visited(g.n());
    std::vector<int> stack;
    for (std::size_t k = 0; k < vars.size(); ++k) {
        // DFS from vars[k] whose interior runs through dropped nodes only.
        std::fill(visited.begin(), visited.end(), false);
        stack.assign(1, vars[k]);
        visited[vars[k]] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : g.children(u)) {
                if (visited[v]) continue;
                visited[v] = true;
                if (local[v] >= 0)
                    edges.emplace_back(static_cast<int>(k), local[v]);
                else
                    stack.push_back(v);
            }
        }
    }
    return CausalGraph(static_cast<int>(vars.size()), std::move(edges));
}

SparsityStats sparsity_stats(const std::vector<CausalGraph>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("sparsity_stats: empty graph list");
    SparsityStats st;
    st.cause_ratio_min = 1.0;
    st.cause_ratio_max = 0.0;
    double direct_sum = 0.0;
    for (const auto& g : graphs) {
        const double n = g.n();
        direct_sum += static_cast<double>(g.edges().size()) / (n * n);
        const auto labels = g.cause_label_matrix();
        std::size_t causes = 0;
        for (auto v : labels) causes += v;
        const double ratio = static_cast<double>(causes) / (n * n);
        st.cause_ratio_min = std::min(st.cause_ratio_min, ratio);
        st.cause_ratio_max = std::max(st.cause_ratio_max, ratio);
    }
    st.direct_cause_ratio = direct_sum / static_cast<double>(graphs.size());
    return st;
}

CausalGraph load_edge_list(const std::filesystem::path& path, int n) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open edge list: " + path.string());
    std::vector<Edge> edges;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        long src, dst;
        if (!(ss >> src >> dst))
            throw std::runtime_error("edge list row " + std::to_string(row) + ": parse error");
        if (src < 0 || src >= n || dst < 0 || dst >= n)
            throw std::runtime_error("edge list row " + std::to_string(row) +
                                     ": index out of range for n=" + std::to_string(n));
        edges.emplace_back(static_cast<int>(src), static_cast<int>(dst));
    }
    try {
        return CausalGraph(n, std::move(edges));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("edge list ") + path.string() + ": " + e.what());
    }
}

void save_edge_list(const CausalGraph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!out) throw std::runtime_error("cannot write edge list: " + path.string());
    for (const auto& [src, dst] : g.edges()) out << src << '\t' << dst << '\n';
}

void save_graph_dir(const CausalGraph& g, const GraphSpec& spec, std::uint64_t seed,
                    const std::filesystem::path& dir, const std::vector<std::string>& names) {
    std::filesystem::create_directories(dir);
    save_edge_list(g, dir / "edges.tsv");
    nlohmann::json meta{{"n", g.n()}, {"kind", to_string(spec.kind)}, {"seed", seed}};
    if (spec.kind != GraphKind::CUSTOM) meta["avg_degree"] = spec.avg_degree;
    if (spec.kind == GraphKind::SBM) {
        meta["sbm_blocks"] = spec.sbm_blocks;
        meta["sbm_intra_ratio"] = spec.sbm_intra_ratio;
    }
    if (!names.empty()) meta["names"] = names;
    std::ofstream out(dir / "graph_meta.json", std::ios::binary);
    out << meta.dump(2) << '\n';
}

CausalGraph load_graph_dir(const std::filesystem::path& dir) {
    std::ifstream in(dir / "graph_meta.json");
    if (!in) throw std::runtime_error("cannot open graph_meta.json in " + dir.string());
    nlohmann::json meta = nlohmann::json::parse(in);
    return load_edge_list(dir / "edges.tsv", meta.at("n").get<int>());
}

}  // namespace tcd
