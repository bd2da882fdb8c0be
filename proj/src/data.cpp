#include "tcd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "tcd/rng.hpp"

namespace tcd {

ObservationSet::ObservationSet(int n_, int m_, std::vector<float> x_,
                               std::vector<std::uint8_t> mask_)
    : n(n_), m(m_), x(std::move(x_)), mask(std::move(mask_)) {
    if (n < 0 || m < 0) throw std::invalid_argument("observation set: negative shape");
    const auto expect = static_cast<std::size_t>(n) * m;
    if (x.size() != expect || mask.size() != expect)
        throw std::invalid_argument("observation set: shape mismatch");
    for (auto v : mask)
        if (v > 1) throw std::invalid_argument("observation set: mask entries must be 0/1");
    rebuild_intervention_index();
}

void ObservationSet::rebuild_intervention_index() {
    col_interventions_.assign(m, {});
    for (int i = 0; i < n; ++i) {
        const auto* row = &mask[static_cast<std::size_t>(i) * m];
        for (int c = 0; c < m; ++c)
            if (row[c]) col_interventions_[c].push_back(i);
    }
}

std::vector<float> cpm_normalize(const std::vector<float>& x, int n, int m) {
    if (x.size() != static_cast<std::size_t>(n) * m)
        throw std::invalid_argument("cpm_normalize: shape mismatch");
    for (float v : x)
        if (v < 0.0f) throw std::invalid_argument("cpm_normalize: negative entry");
    std::vector<double> colsum(m, 0.0);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < m; ++c) colsum[c] += x[static_cast<std::size_t>(i) * m + c];
    std::vector<float> out(x.size(), 0.0f);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < m; ++c) {
            if (colsum[c] <= 0.0) continue;
            const double v = x[static_cast<std::size_t>(i) * m + c];
            out[static_cast<std::size_t>(i) * m + c] =
                static_cast<float>(std::log2(1.0 + 1e6 * v / colsum[c]));
        }
    return out;
}

std::vector<float> standardize_rows(const std::vector<float>& x, int n, int m) {
    if (x.size() != static_cast<std::size_t>(n) * m)
        throw std::invalid_argument("standardize_rows: shape mismatch");
    std::vector<float> out(x.size());
    for (int i = 0; i < n; ++i) {
        const auto* row = &x[static_cast<std::size_t>(i) * m];
        double mean = 0.0;
        for (int c = 0; c < m; ++c) mean += row[c];
        mean /= std::max(1, m);
        double var = 0.0;
        for (int c = 0; c < m; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= std::max(1, m);
        const double sd = std::sqrt(var);
        auto* orow = &out[static_cast<std::size_t>(i) * m];
        if (sd < 1e-12) {
            std::fill(orow, orow + m, 0.0f);
        } else {
            for (int c = 0; c < m; ++c)
                orow[c] = static_cast<float>((row[c] - mean) / sd);
        }
    }
    return out;
}

namespace {

// Uniform size-k subset of {0..n-1}; optionally forces `must` in. Ascending.
std::vector<int> sample_subset(int n, int k, int must, Rng& rng) {
    std::vector<int> pool;
    pool.reserve(n);
    for (int i = 0; i < n; ++i)
        if (i != must) pool.push_back(i);
    // partial Fisher-Yates for the first k' slots
    const int kprime = must >= 0 ? k - 1 : k;
    for (int i = 0; i < kprime; ++i) {
        const auto j = i + static_cast<int>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> vars(pool.begin(), pool.begin() + kprime);
    if (must >= 0) vars.push_back(must);
    std::sort(vars.begin(), vars.end());
    return vars;
}

std::vector<int> eligible_columns(const ObservationSet& obs, const std::vector<std::uint8_t>& in_v) {
    std::vector<int> eligible;
    for (int c = 0; c < obs.m; ++c) {
        bool ok = true;
        for (int j : obs.interventions_in(c))
            if (!in_v[j]) {
                ok = false;
                break;
            }
        if (ok) eligible.push_back(c);
    }
    return eligible;
}

std::vector<int> draw_columns(const std::vector<int>& eligible, int m_sub, Rng& rng) {
    if (eligible.empty())
        throw std::runtime_error(
            "subsample: no eligible observation columns (every column has an "
            "intervention on a variable outside V)");
    std::vector<int> cols(m_sub);
    if (static_cast<int>(eligible.size()) >= m_sub) {
        std::vector<int> pool = eligible;
        for (int i = 0; i < m_sub; ++i) {
            const auto j = i + static_cast<int>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            cols[i] = pool[i];
        }
    } else {
        for (int i = 0; i < m_sub; ++i)
            cols[i] = eligible[rng.below(eligible.size())];
    }
    return cols;
}

void gather(const ObservationSet& obs, const std::vector<int>& vars,
            const std::vector<int>& cols, std::vector<float>& x,
            std::vector<std::uint8_t>& mask) {
    const auto nv = vars.size();
    const auto mc = cols.size();
    x.resize(nv * mc);
    mask.resize(nv * mc);
    for (std::size_t r = 0; r < nv; ++r) {
        const auto* xrow = &obs.x[static_cast<std::size_t>(vars[r]) * obs.m];
        const auto* mrow = &obs.mask[static_cast<std::size_t>(vars[r]) * obs.m];
        for (std::size_t c = 0; c < mc; ++c) {
            x[r * mc + c] = xrow[cols[c]];
            mask[r * mc + c] = mrow[cols[c]];
        }
    }
}

}  // namespace

LocalBatch subsample(const ObservationSet& obs, int target, const SubsampleSpec& spec,
                     const std::vector<std::uint8_t>* labels) {
    if (target < 0 || target >= obs.n) throw std::invalid_argument("subsample: target out of range");
    if (obs.m < 1) throw std::invalid_argument("subsample: empty observation set");
    if (spec.n_sub < 1 || spec.m_sub < 1) throw std::invalid_argument("subsample: sizes must be >= 1");
    Rng rng(derive_seed(spec.seed, 0x5u));
    const int nv = std::min(spec.n_sub, obs.n);

    LocalBatch batch;
    batch.vars = sample_subset(obs.n, nv, target, rng);
    batch.target_pos = static_cast<int>(
        std::lower_bound(batch.vars.begin(), batch.vars.end(), target) - batch.vars.begin());
    std::vector<std::uint8_t> in_v(obs.n, 0);
    for (int v : batch.vars) in_v[v] = 1;
    const auto cols = draw_columns(eligible_columns(obs, in_v), spec.m_sub, rng);
    gather(obs, batch.vars, cols, batch.x, batch.mask);
    batch.m_sub = spec.m_sub;
    if (labels) {
        batch.label_slice.resize(batch.vars.size());
        const auto* lrow = &(*labels)[static_cast<std::size_t>(target) * obs.n];
        for (std::size_t r = 0; r < batch.vars.size(); ++r)
            batch.label_slice[r] = lrow[batch.vars[r]];
    }
    return batch;
}

MatrixBatch subsample_matrix(const ObservationSet& obs, const SubsampleSpec& spec,
                             const std::vector<std::uint8_t>* labels) {
    if (obs.m < 1) throw std::invalid_argument("subsample: empty observation set");
    if (spec.n_sub < 1 || spec.m_sub < 1) throw std::invalid_argument("subsample: sizes must be >= 1");
    Rng rng(derive_seed(spec.seed, 0x6u));
    const int nv = std::min(spec.n_sub, obs.n);

    MatrixBatch batch;
    batch.vars = sample_subset(obs.n, nv, -1, rng);
    std::vector<std::uint8_t> in_v(obs.n, 0);
    for (int v : batch.vars) in_v[v] = 1;
    const auto cols = draw_columns(eligible_columns(obs, in_v), spec.m_sub, rng);
    gather(obs, batch.vars, cols, batch.x, batch.mask);
    batch.m_sub = spec.m_sub;
    if (labels) {
        const auto k = batch.vars.size();
        batch.labels.resize(k * k);
        for (std::size_t t = 0; t < k; ++t) {
            const auto* lrow = &(*labels)[static_cast<std::size_t>(batch.vars[t]) * obs.n];
            for (std::size_t r = 0; r < k; ++r) batch.labels[t * k + r] = lrow[batch.vars[r]];
        }
    }
    return batch;
}

LocalBatch subsample_given_vars(const ObservationSet& obs, const std::vector<int>& vars,
                                int target_pos, int m_sub, std::uint64_t seed) {
    if (vars.empty() || target_pos < 0 || target_pos >= static_cast<int>(vars.size()))
        throw std::invalid_argument("subsample_given_vars: bad block");
    if (m_sub < 1) throw std::invalid_argument("subsample_given_vars: m_sub must be >= 1");
    Rng rng(derive_seed(seed, 0x8u));
    std::vector<std::uint8_t> in_v(obs.n, 0);
    for (int v : vars) in_v[v] = 1;
    const auto cols = draw_columns(eligible_columns(obs, in_v), m_sub, rng);
    LocalBatch batch;
    batch.vars = vars;
    batch.target_pos = target_pos;
    batch.m_sub = m_sub;
    gather(obs, vars, cols, batch.x, batch.mask);
    return batch;
}

std::vector<std::vector<int>> partition_for_inference(int n, int target, int n_sub,
                                                      std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("partition_for_inference: n must be >= 2");
    if (target < 0 || target >= n) throw std::invalid_argument("partition_for_inference: bad target");
    if (n_sub < 1) throw std::invalid_argument("partition_for_inference: n_sub must be >= 1");
    std::vector<int> rest;
    rest.reserve(n - 1);
    for (int i = 0; i < n; ++i)
        if (i != target) rest.push_back(i);
    Rng rng(derive_seed(seed, 0x7u));
    rng.shuffle(rest);

    const int b = (n + n_sub - 1) / n_sub;
    std::vector<std::vector<int>> blocks(b);
    const int total = n - 1;
    const int base = total / b, extra = total % b;
    int at = 0;
    for (int j = 0; j < b; ++j) {
        const int len = base + (j < extra ? 1 : 0);
        blocks[j].assign(rest.begin() + at, rest.begin() + at + len);
        blocks[j].push_back(target);  // target appended last
        at += len;
    }
    return blocks;
}

LabeledDataset::LabeledDataset(ObservationSet o, CausalGraph g, std::string prov)
    : obs(std::move(o)), graph(std::move(g)), provenance(std::move(prov)) {
    if (obs.n != graph.n())
        throw std::invalid_argument("labeled dataset: graph size does not match observations");
    labels = graph.cause_label_matrix();
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out(len * 2, '0');
    for (unsigned i = 0; i < len; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes.data(), bytes.size());
}

void atomic_write(const std::filesystem::path& path, const void* data, std::size_t size) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write: " + tmp);
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw std::runtime_error("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

namespace {

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& obs = ds.obs;
    atomic_write(dir / "X.bin", obs.x.data(), obs.x.size() * sizeof(float));
    atomic_write(dir / "M.bin", obs.mask.data(), obs.mask.size());
    atomic_write(dir / "labels.bin", ds.labels.data(), ds.labels.size());
    {
        std::string tsv;
        for (const auto& [src, dst] : ds.graph.edges())
            tsv += std::to_string(src) + '\t' + std::to_string(dst) + '\n';
        atomic_write(dir / "edges.tsv", tsv.data(), tsv.size());
    }
    nlohmann::json meta{
        {"format_version", 1},
        {"n", obs.n},
        {"m", obs.m},
        {"x_dtype", "f32le"},
        {"mask_dtype", "u8"},
        {"labels_dtype", "u8"},
        {"provenance", nlohmann::json::parse(ds.provenance.empty() ? "{}" : ds.provenance)},
        {"sha256",
         {{"X.bin", sha256_hex(obs.x.data(), obs.x.size() * sizeof(float))},
          {"M.bin", sha256_hex(obs.mask.data(), obs.mask.size())},
          {"labels.bin", sha256_hex(ds.labels.data(), ds.labels.size())},
          {"edges.tsv", sha256_file(dir / "edges.tsv")}}},
    };
    const auto text = meta.dump(2) + '\n';
    atomic_write(dir / "meta.json", text.data(), text.size());
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
    nlohmann::json meta = nlohmann::json::parse(read_file(dir / "meta.json"));
    if (meta.at("format_version").get<int>() != 1)
        throw std::runtime_error("dataset: unsupported format version");
    const int n = meta.at("n").get<int>();
    const int m = meta.at("m").get<int>();
    if (meta.at("x_dtype").get<std::string>() != "f32le")
        throw std::runtime_error("dataset: unsupported X dtype");

    const auto check = [&](const char* name, const std::vector<char>& bytes) {
        const auto want = meta.at("sha256").at(name).get<std::string>();
        const auto got = sha256_hex(bytes.data(), bytes.size());
        if (want != got)
            throw std::runtime_error(std::string("dataset: checksum mismatch for ") + name);
    };

    auto xbytes = read_file(dir / "X.bin");
    if (xbytes.size() != static_cast<std::size_t>(n) * m * sizeof(float))
        throw std::runtime_error("dataset: X.bin size does not match meta shape");
    check("X.bin", xbytes);
    std::vector<float> x(static_cast<std::size_t>(n) * m);
    std::memcpy(x.data(), xbytes.data(), xbytes.size());

    auto mbytes = read_file(dir / "M.bin");
    if (mbytes.size() != static_cast<std::size_t>(n) * m)
        throw std::runtime_error("dataset: M.bin size does not match meta shape");
    check("M.bin", mbytes);
    std::vector<std::uint8_t> mask(mbytes.begin(), mbytes.end());

    auto g = load_edge_list(dir / "edges.tsv", n);
    LabeledDataset ds(ObservationSet(n, m, std::move(x), std::move(mask)), std::move(g),
                      meta.at("provenance").dump());

    auto lbytes = read_file(dir / "labels.bin");
    if (lbytes.size() != static_cast<std::size_t>(n) * n)
        throw std::runtime_error("dataset: labels.bin size does not match meta shape");
    check("labels.bin", lbytes);
    if (!std::equal(lbytes.begin(), lbytes.end(), ds.labels.begin()))
        throw std::runtime_error("dataset: labels.bin disagrees with edges.tsv ancestry");
    return ds;
}

}  // namespace tcd
