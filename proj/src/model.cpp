#include "tcd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tcd/data.hpp"
#include "tcd/rng.hpp"

namespace tcd {

void ModelConfig::validate() const {
    if (layers < 0 || embed_dim <= 0 || heads <= 0 || ff_hidden <= 0)
        throw std::invalid_argument("model config: all fields must be positive");
    if (embed_dim % heads != 0)
        throw std::invalid_argument("model config: heads must divide embed_dim");
}

namespace {

void push(std::vector<TensorSpec>& out, std::size_t& at, const std::string& name,
          std::size_t size, int fan_in, bool ones = false) {
    out.push_back({name, at, size, fan_in, ones});
    at += size;
}

void push_linear(std::vector<TensorSpec>& out, std::size_t& at, const std::string& name,
                 int rows, int cols) {
    push(out, at, name + ".w", static_cast<std::size_t>(rows) * cols, cols);
    push(out, at, name + ".b", rows, 0);
}

void push_ln(std::vector<TensorSpec>& out, std::size_t& at, const std::string& name, int d) {
    push(out, at, name + ".w", d, 0, true);
    push(out, at, name + ".b", d, 0);
}

void push_ff_block(std::vector<TensorSpec>& out, std::size_t& at, const std::string& name,
                   int d, int ff) {
    push_ln(out, at, name + ".ln", d);
    push_linear(out, at, name + ".fc1", ff, d);
    push_linear(out, at, name + ".fc2", d, ff);
}

}  // namespace

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
    cfg.validate();
    ParamLayout layout;
    std::size_t at = 0;
    auto& t = layout.tensors_;
    push_linear(t, at, "embed", cfg.embed_dim, 2);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = "layer" + std::to_string(l);
        for (const char* axis : {".var", ".obs"}) {
            push_ln(t, at, base + axis + ".ln", cfg.embed_dim);
            for (const char* proj : {".q", ".k", ".v", ".o"})
                push_linear(t, at, base + axis + proj, cfg.embed_dim, cfg.embed_dim);
        }
        push_ff_block(t, at, base + ".ff", cfg.embed_dim, cfg.ff_hidden);
    }
    push_ff_block(t, at, "head0", cfg.embed_dim, cfg.ff_hidden);
    push_ff_block(t, at, "head1", cfg.embed_dim, cfg.ff_hidden);
    layout.total_ = at;
    return layout;
}

std::size_t ParamLayout::offset(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t.offset;
    throw std::out_of_range("no tensor named " + name);
}

std::size_t count_params(const ModelConfig& cfg) { return ParamLayout::build(cfg).total(); }

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<T> p{cfg, ParamLayout::build(cfg), {}};
    p.values.assign(p.layout.total(), T(0));
    Rng rng(derive_seed(seed, 0x20u));
    for (const auto& spec : p.layout.tensors()) {
        if (spec.ones) {
            std::fill_n(p.values.begin() + spec.offset, spec.size, T(1));
        } else if (spec.fan_in > 0) {
            const double bound = std::sqrt(3.0 / spec.fan_in);
            for (std::size_t k = 0; k < spec.size; ++k)
                p.values[spec.offset + k] = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
    return p;
}

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
inline T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475)));
}

template <typename T>
inline T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475)));
    const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
    return cdf + x * pdf;
}

// y = W x + b for one vector; W is rows x cols row-major.
template <typename T>
inline void linear(const T* w, const T* b, const T* x, T* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        T acc = b[r];
        const T* wr = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// dL/dx += W^T dy; dL/dW += dy x^T; dL/db += dy.
template <typename T>
inline void linear_backward(const T* w, const T* x, const T* dy, T* dx, T* dw, T* db, int rows,
                            int cols) {
    for (int r = 0; r < rows; ++r) {
        const T g = dy[r];
        db[r] += g;
        const T* wr = w + static_cast<std::size_t>(r) * cols;
        T* dwr = dw + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            dwr[c] += g * x[c];
            if (dx) dx[c] += g * wr[c];
        }
    }
}

template <typename T>
inline void layer_norm(const T* w, const T* b, const T* x, T* y, int d) {
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += x[c];
    mean /= d;
    T var = 0;
    for (int c = 0; c < d; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= d;
    const T inv = T(1) / std::sqrt(var + T(kLnEps));
    for (int c = 0; c < d; ++c) y[c] = (x[c] - mean) * inv * w[c] + b[c];
}

// Recomputes the normalization internally from x.
template <typename T>
inline void layer_norm_backward(const T* w, const T* x, const T* dy, T* dx, T* dw, T* db,
                                int d) {
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += x[c];
    mean /= d;
    T var = 0;
    for (int c = 0; c < d; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= d;
    const T inv = T(1) / std::sqrt(var + T(kLnEps));
    T sum_g = 0, sum_gx = 0;
    for (int c = 0; c < d; ++c) {
        const T xhat = (x[c] - mean) * inv;
        const T g = dy[c] * w[c];
        dw[c] += dy[c] * xhat;
        db[c] += dy[c];
        sum_g += g;
        sum_gx += g * xhat;
    }
    for (int c = 0; c < d; ++c) {
        const T xhat = (x[c] - mean) * inv;
        const T g = dy[c] * w[c];
        dx[c] += inv * (g - sum_g / d - xhat * sum_gx / d);
    }
}

// Offsets of one attention block's tensors inside the flat parameter vector.
struct AttnOffsets {
    std::size_t ln_w, ln_b, q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
};

struct FfOffsets {
    std::size_t ln_w, ln_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

AttnOffsets attn_offsets(const ParamLayout& layout, const std::string& base) {
    return {layout.offset(base + ".ln.w"), layout.offset(base + ".ln.b"),
            layout.offset(base + ".q.w"),  layout.offset(base + ".q.b"),
            layout.offset(base + ".k.w"),  layout.offset(base + ".k.b"),
            layout.offset(base + ".v.w"),  layout.offset(base + ".v.b"),
            layout.offset(base + ".o.w"),  layout.offset(base + ".o.b")};
}

FfOffsets ff_offsets(const ParamLayout& layout, const std::string& base) {
    return {layout.offset(base + ".ln.w"),  layout.offset(base + ".ln.b"),
            layout.offset(base + ".fc1.w"), layout.offset(base + ".fc1.b"),
            layout.offset(base + ".fc2.w"), layout.offset(base + ".fc2.b")};
}

// Attention over `seq` tokens for one batch lane. x/y are seq x d with row
// stride `stride` (so an axis of the stream tensor can be addressed in place).
template <typename T>
struct AttnScratch {
    std::vector<T> norm, q, k, v, ctx, probs;
    std::vector<T> dnorm, dq, dk, dv, dctx;
};

template <typename T>
void attention_axis(const T* params, const AttnOffsets& off, int heads, int d, const T* x,
                    std::size_t x_stride, T* y, std::size_t y_stride, int seq,
                    AttnScratch<T>& s) {
    const int hd = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    s.norm.resize(static_cast<std::size_t>(seq) * d);
    s.q.resize(static_cast<std::size_t>(seq) * d);
    s.k.resize(static_cast<std::size_t>(seq) * d);
    s.v.resize(static_cast<std::size_t>(seq) * d);
    s.ctx.resize(static_cast<std::size_t>(seq) * d);
    s.probs.resize(static_cast<std::size_t>(seq));

    for (int t = 0; t < seq; ++t) {
        layer_norm(params + off.ln_w, params + off.ln_b, x + t * x_stride, &s.norm[t * d], d);
        linear(params + off.q_w, params + off.q_b, &s.norm[t * d], &s.q[t * d], d, d);
        linear(params + off.k_w, params + off.k_b, &s.norm[t * d], &s.k[t * d], d, d);
        linear(params + off.v_w, params + off.v_b, &s.norm[t * d], &s.v[t * d], d, d);
    }
    for (int h = 0; h < heads; ++h) {
        const int hb = h * hd;
        for (int a = 0; a < seq; ++a) {
            T* probs = s.probs.data();
            T maxv = -std::numeric_limits<T>::infinity();
            for (int b = 0; b < seq; ++b) {
                T dot = 0;
                for (int c = 0; c < hd; ++c) dot += s.q[a * d + hb + c] * s.k[b * d + hb + c];
                probs[b] = dot * scale;
                maxv = std::max(maxv, probs[b]);
            }
            T denom = 0;
            for (int b = 0; b < seq; ++b) {
                probs[b] = std::exp(probs[b] - maxv);
                denom += probs[b];
            }
            const T inv = T(1) / denom;
            for (int c = 0; c < hd; ++c) {
                T acc = 0;
                for (int b = 0; b < seq; ++b) acc += probs[b] * s.v[b * d + hb + c];
                s.ctx[a * d + hb + c] = acc * inv;
            }
        }
    }
    for (int t = 0; t < seq; ++t) {
        // residual add of the output projection
        T* out = y + t * y_stride;
        for (int r = 0; r < d; ++r) {
            T acc = params[off.o_b + r];
            const T* wr = params + off.o_w + static_cast<std::size_t>(r) * d;
            for (int c = 0; c < d; ++c) acc += wr[c] * s.ctx[t * d + c];
            out[r] += acc;
        }
    }
}

// Backward of attention_axis. x is the cached sublayer input; dy the gradient
// w.r.t. the sublayer output (post-residual); dx receives the full input
// gradient (residual passthrough included).
template <typename T>
void attention_axis_backward(const T* params, const AttnOffsets& off, int heads, int d,
                             const T* x, std::size_t x_stride, const T* dy,
                             std::size_t dy_stride, T* dx, std::size_t dx_stride, int seq,
                             T* grad, AttnScratch<T>& s) {
    const int hd = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    s.norm.resize(static_cast<std::size_t>(seq) * d);
    s.q.resize(static_cast<std::size_t>(seq) * d);
    s.k.resize(static_cast<std::size_t>(seq) * d);
    s.v.resize(static_cast<std::size_t>(seq) * d);
    s.ctx.resize(static_cast<std::size_t>(seq) * d);
    s.probs.resize(static_cast<std::size_t>(seq) * seq);
    s.dnorm.assign(static_cast<std::size_t>(seq) * d, T(0));
    s.dq.assign(static_cast<std::size_t>(seq) * d, T(0));
    s.dk.assign(static_cast<std::size_t>(seq) * d, T(0));
    s.dv.assign(static_cast<std::size_t>(seq) * d, T(0));
    s.dctx.assign(static_cast<std::size_t>(seq) * d, T(0));

    for (int t = 0; t < seq; ++t) {
        layer_norm(params + off.ln_w, params + off.ln_b, x + t * x_stride, &s.norm[t * d], d);
        linear(params + off.q_w, params + off.q_b, &s.norm[t * d], &s.q[t * d], d, d);
        linear(params + off.k_w, params + off.k_b, &s.norm[t * d], &s.k[t * d], d, d);
        linear(params + off.v_w, params + off.v_b, &s.norm[t * d], &s.v[t * d], d, d);
    }
    // recompute normalized softmax rows for every head, then the full context
    std::vector<T>& probs = s.probs;  // seq*seq, row per query; reused per head
    auto softmax_rows = [&](int h) {
        const int hb = h * hd;
        for (int a = 0; a < seq; ++a) {
            T* row = &probs[static_cast<std::size_t>(a) * seq];
            T maxv = -std::numeric_limits<T>::infinity();
            for (int b = 0; b < seq; ++b) {
                T dot = 0;
                for (int c = 0; c < hd; ++c) dot += s.q[a * d + hb + c] * s.k[b * d + hb + c];
                row[b] = dot * scale;
                maxv = std::max(maxv, row[b]);
            }
            T denom = 0;
            for (int b = 0; b < seq; ++b) {
                row[b] = std::exp(row[b] - maxv);
                denom += row[b];
            }
            const T inv = T(1) / denom;
            for (int b = 0; b < seq; ++b) row[b] *= inv;
        }
    };
    for (int h = 0; h < heads; ++h) {
        softmax_rows(h);
        const int hb = h * hd;
        for (int a = 0; a < seq; ++a) {
            const T* row = &probs[static_cast<std::size_t>(a) * seq];
            for (int c = 0; c < hd; ++c) {
                T acc = 0;
                for (int b = 0; b < seq; ++b) acc += row[b] * s.v[b * d + hb + c];
                s.ctx[a * d + hb + c] = acc;
            }
        }
    }
    // output projection backward: fills dctx and the Wo/bo grads
    for (int t = 0; t < seq; ++t)
        linear_backward(params + off.o_w, &s.ctx[t * d], dy + t * dy_stride, &s.dctx[t * d],
                        grad + off.o_w, grad + off.o_b, d, d);
    // softmax/attention backward per head
    for (int h = 0; h < heads; ++h) {
        softmax_rows(h);
        const int hb = h * hd;
        for (int a = 0; a < seq; ++a) {
            const T* row = &probs[static_cast<std::size_t>(a) * seq];
            // dP[a][b] = dctx[a] . v[b]; dV[b] += P[a][b] dctx[a]
            T dot_dp_p = 0;
            for (int b = 0; b < seq; ++b) {
                T dp = 0;
                for (int c = 0; c < hd; ++c) dp += s.dctx[a * d + hb + c] * s.v[b * d + hb + c];
                dot_dp_p += dp * row[b];
            }
            for (int b = 0; b < seq; ++b) {
                T dp = 0;
                for (int c = 0; c < hd; ++c) {
                    dp += s.dctx[a * d + hb + c] * s.v[b * d + hb + c];
                    s.dv[b * d + hb + c] += row[b] * s.dctx[a * d + hb + c];
                }
                const T dscore = row[b] * (dp - dot_dp_p) * scale;
                for (int c = 0; c < hd; ++c) {
                    s.dq[a * d + hb + c] += dscore * s.k[b * d + hb + c];
                    s.dk[b * d + hb + c] += dscore * s.q[a * d + hb + c];
                }
            }
        }
    }
    for (int t = 0; t < seq; ++t) {
        linear_backward(params + off.q_w, &s.norm[t * d], &s.dq[t * d], &s.dnorm[t * d],
                        grad + off.q_w, grad + off.q_b, d, d);
        linear_backward(params + off.k_w, &s.norm[t * d], &s.dk[t * d], &s.dnorm[t * d],
                        grad + off.k_w, grad + off.k_b, d, d);
        linear_backward(params + off.v_w, &s.norm[t * d], &s.dv[t * d], &s.dnorm[t * d],
                        grad + off.v_w, grad + off.v_b, d, d);
        // residual passthrough + LN path
        T* dxt = dx + t * dx_stride;
        const T* dyt = dy + t * dy_stride;
        for (int c = 0; c < d; ++c) dxt[c] += dyt[c];
        layer_norm_backward(params + off.ln_w, x + t * x_stride, &s.dnorm[t * d], dxt,
                            grad + off.ln_w, grad + off.ln_b, d);
    }
}

}  // namespace

template <typename T>
void extract_features(const ModelParams<T>& p, const float* x, const std::uint8_t* m, int nv,
                      int no, FeatureMatrix<T>& f, ForwardCache<T>& cache) {
    const auto& cfg = p.cfg;
    const int d = cfg.embed_dim;
    if (nv <= 0 || no <= 0) throw std::invalid_argument("extract_features: empty input");
    const T* params = p.values.data();

    cache.nv = nv;
    cache.no = no;
    const std::size_t tokens = static_cast<std::size_t>(nv) * no;
    cache.input.resize(tokens * 2);
    for (std::size_t t = 0; t < tokens; ++t) {
        cache.input[t * 2] = static_cast<T>(x[t]);
        cache.input[t * 2 + 1] = static_cast<T>(m[t]);
    }

    auto& h = cache.stream;
    h.resize(tokens * d);
    {
        const std::size_t w = p.layout.offset("embed.w");
        const std::size_t b = p.layout.offset("embed.b");
#pragma omp parallel for schedule(static)
        for (long t = 0; t < static_cast<long>(tokens); ++t)
            linear(params + w, params + b, &cache.input[t * 2], &h[t * d], d, 2);
    }

    if (cache.keep_for_backward) cache.sub_in.resize(static_cast<std::size_t>(cfg.layers) * 3);

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = "layer" + std::to_string(l);
        const auto var_off = attn_offsets(p.layout, base + ".var");
        const auto obs_off = attn_offsets(p.layout, base + ".obs");
        const auto ff = ff_offsets(p.layout, base + ".ff");

        if (cache.keep_for_backward) cache.sub_in[l * 3] = h;
        // variable-axis attention: one lane per observation column
#pragma omp parallel
        {
            AttnScratch<T> scratch;
#pragma omp for schedule(static)
            for (int o = 0; o < no; ++o)
                attention_axis(params, var_off, cfg.heads, d, h.data() + o * d,
                               static_cast<std::size_t>(no) * d, h.data() + o * d,
                               static_cast<std::size_t>(no) * d, nv, scratch);
        }

        if (cache.keep_for_backward) cache.sub_in[l * 3 + 1] = h;
        // observation-axis attention: one lane per variable row
#pragma omp parallel
        {
            AttnScratch<T> scratch;
#pragma omp for schedule(static)
            for (int i = 0; i < nv; ++i)
                attention_axis(params, obs_off, cfg.heads, d,
                               h.data() + static_cast<std::size_t>(i) * no * d, d,
                               h.data() + static_cast<std::size_t>(i) * no * d, d, no, scratch);
        }

        if (cache.keep_for_backward) cache.sub_in[l * 3 + 2] = h;
#pragma omp parallel
        {
            std::vector<T> norm(d), mid(cfg.ff_hidden);
#pragma omp for schedule(static)
            for (long t = 0; t < static_cast<long>(tokens); ++t) {
                layer_norm(params + ff.ln_w, params + ff.ln_b, &h[t * d], norm.data(), d);
                linear(params + ff.fc1_w, params + ff.fc1_b, norm.data(), mid.data(),
                       cfg.ff_hidden, d);
                for (int c = 0; c < cfg.ff_hidden; ++c) mid[c] = gelu(mid[c]);
                for (int r = 0; r < d; ++r) {
                    T acc = params[ff.fc2_b + r];
                    const T* wr = params + ff.fc2_w + static_cast<std::size_t>(r) * cfg.ff_hidden;
                    for (int c = 0; c < cfg.ff_hidden; ++c) acc += wr[c] * mid[c];
                    h[t * d + r] += acc;
                }
            }
        }
    }

    cache.pooled.assign(static_cast<std::size_t>(nv) * d, T(0));
    for (int i = 0; i < nv; ++i) {
        T* out = &cache.pooled[static_cast<std::size_t>(i) * d];
        for (int o = 0; o < no; ++o) {
            const T* tok = &h[(static_cast<std::size_t>(i) * no + o) * d];
            for (int c = 0; c < d; ++c) out[c] += tok[c];
        }
        for (int c = 0; c < d; ++c) out[c] /= no;
    }

    f.nv = nv;
    f.d = d;
    f.f.resize(static_cast<std::size_t>(nv) * 2 * d);
    for (int slot = 0; slot < 2; ++slot) {
        const auto off = ff_offsets(p.layout, slot == 0 ? "head0" : "head1");
        cache.head_norm[slot].resize(static_cast<std::size_t>(nv) * d);
        cache.head_pre[slot].resize(static_cast<std::size_t>(nv) * cfg.ff_hidden);
        std::vector<T> act(cfg.ff_hidden);
        for (int i = 0; i < nv; ++i) {
            T* norm = &cache.head_norm[slot][static_cast<std::size_t>(i) * d];
            T* pre = &cache.head_pre[slot][static_cast<std::size_t>(i) * cfg.ff_hidden];
            layer_norm(params + off.ln_w, params + off.ln_b,
                       &cache.pooled[static_cast<std::size_t>(i) * d], norm, d);
            linear(params + off.fc1_w, params + off.fc1_b, norm, pre, cfg.ff_hidden, d);
            for (int c = 0; c < cfg.ff_hidden; ++c) act[c] = gelu(pre[c]);
            linear(params + off.fc2_w, params + off.fc2_b, act.data(), f.at(i, slot), d,
                   cfg.ff_hidden);
        }
    }
}

template <typename T>
void extract_features_backward(const ModelParams<T>& p, const ForwardCache<T>& cache,
                               const FeatureMatrix<T>& dF, std::vector<T>& grad) {
    const auto& cfg = p.cfg;
    const int d = cfg.embed_dim;
    const int nv = cache.nv, no = cache.no;
    if (!cache.keep_for_backward)
        throw std::logic_error("extract_features_backward: cache was not kept");
    if (grad.size() != p.layout.total()) throw std::invalid_argument("grad size mismatch");
    const T* params = p.values.data();
    const std::size_t tokens = static_cast<std::size_t>(nv) * no;

    // heads backward -> dpooled
    std::vector<T> dpooled(static_cast<std::size_t>(nv) * d, T(0));
    {
        std::vector<T> act(cfg.ff_hidden), dact(cfg.ff_hidden), dpre(cfg.ff_hidden), dnorm(d);
        for (int slot = 0; slot < 2; ++slot) {
            const auto off = ff_offsets(p.layout, slot == 0 ? "head0" : "head1");
            for (int i = 0; i < nv; ++i) {
                const T* pre = &cache.head_pre[slot][static_cast<std::size_t>(i) * cfg.ff_hidden];
                const T* norm = &cache.head_norm[slot][static_cast<std::size_t>(i) * d];
                for (int c = 0; c < cfg.ff_hidden; ++c) act[c] = gelu(pre[c]);
                std::fill(dact.begin(), dact.end(), T(0));
                linear_backward(params + off.fc2_w, act.data(), dF.at(i, slot), dact.data(),
                                grad.data() + off.fc2_w, grad.data() + off.fc2_b, d,
                                cfg.ff_hidden);
                for (int c = 0; c < cfg.ff_hidden; ++c) dpre[c] = dact[c] * gelu_grad(pre[c]);
                std::fill(dnorm.begin(), dnorm.end(), T(0));
                linear_backward(params + off.fc1_w, norm, dpre.data(), dnorm.data(),
                                grad.data() + off.fc1_w, grad.data() + off.fc1_b,
                                cfg.ff_hidden, d);
                layer_norm_backward(params + off.ln_w,
                                    &cache.pooled[static_cast<std::size_t>(i) * d], dnorm.data(),
                                    &dpooled[static_cast<std::size_t>(i) * d],
                                    grad.data() + off.ln_w, grad.data() + off.ln_b, d);
            }
        }
    }

    // pooling backward
    std::vector<T> dh(tokens * d);
    for (int i = 0; i < nv; ++i)
        for (int o = 0; o < no; ++o)
            for (int c = 0; c < d; ++c)
                dh[(static_cast<std::size_t>(i) * no + o) * d + c] =
                    dpooled[static_cast<std::size_t>(i) * d + c] / no;

    std::vector<T> dx(tokens * d);
    AttnScratch<T> scratch;
    std::vector<T> norm(d), mid(cfg.ff_hidden), act(cfg.ff_hidden), dact(cfg.ff_hidden),
        dpre(cfg.ff_hidden), dnorm(d);
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const std::string base = "layer" + std::to_string(l);
        const auto var_off = attn_offsets(p.layout, base + ".var");
        const auto obs_off = attn_offsets(p.layout, base + ".obs");
        const auto ff = ff_offsets(p.layout, base + ".ff");

        {  // feed-forward backward
            const auto& sin = cache.sub_in[l * 3 + 2];
            std::fill(dx.begin(), dx.end(), T(0));
            for (std::size_t t = 0; t < tokens; ++t) {
                const T* xt = &sin[t * d];
                layer_norm(params + ff.ln_w, params + ff.ln_b, xt, norm.data(), d);
                linear(params + ff.fc1_w, params + ff.fc1_b, norm.data(), mid.data(),
                       cfg.ff_hidden, d);
                for (int c = 0; c < cfg.ff_hidden; ++c) act[c] = gelu(mid[c]);
                std::fill(dact.begin(), dact.end(), T(0));
                linear_backward(params + ff.fc2_w, act.data(), &dh[t * d], dact.data(),
                                grad.data() + ff.fc2_w, grad.data() + ff.fc2_b, d,
                                cfg.ff_hidden);
                for (int c = 0; c < cfg.ff_hidden; ++c) dpre[c] = dact[c] * gelu_grad(mid[c]);
                std::fill(dnorm.begin(), dnorm.end(), T(0));
                linear_backward(params + ff.fc1_w, norm.data(), dpre.data(), dnorm.data(),
                                grad.data() + ff.fc1_w, grad.data() + ff.fc1_b, cfg.ff_hidden,
                                d);
                T* dxt = &dx[t * d];
                const T* dht = &dh[t * d];
                for (int c = 0; c < d; ++c) dxt[c] += dht[c];
                layer_norm_backward(params + ff.ln_w, xt, dnorm.data(), dxt,
                                    grad.data() + ff.ln_w, grad.data() + ff.ln_b, d);
            }
            dh.swap(dx);
        }
        {  // observation-axis attention backward
            const auto& sin = cache.sub_in[l * 3 + 1];
            std::fill(dx.begin(), dx.end(), T(0));
            for (int i = 0; i < nv; ++i)
                attention_axis_backward(params, obs_off, cfg.heads, d,
                                        sin.data() + static_cast<std::size_t>(i) * no * d, d,
                                        dh.data() + static_cast<std::size_t>(i) * no * d, d,
                                        dx.data() + static_cast<std::size_t>(i) * no * d, d, no,
                                        grad.data(), scratch);
            dh.swap(dx);
        }
        {  // variable-axis attention backward
            const auto& sin = cache.sub_in[l * 3];
            std::fill(dx.begin(), dx.end(), T(0));
            for (int o = 0; o < no; ++o)
                attention_axis_backward(params, var_off, cfg.heads, d, sin.data() + o * d,
                                        static_cast<std::size_t>(no) * d, dh.data() + o * d,
                                        static_cast<std::size_t>(no) * d, dx.data() + o * d,
                                        static_cast<std::size_t>(no) * d, nv, grad.data(),
                                        scratch);
            dh.swap(dx);
        }
    }

    {  // embedding backward
        const std::size_t w = p.layout.offset("embed.w");
        const std::size_t b = p.layout.offset("embed.b");
        for (std::size_t t = 0; t < tokens; ++t)
            linear_backward(params + w, &cache.input[t * 2], &dh[t * d],
                            static_cast<T*>(nullptr), grad.data() + w, grad.data() + b, d, 2);
    }
}

template <typename T>
std::vector<T> score(const FeatureMatrix<T>& f, int target_pos) {
    if (target_pos < 0 || target_pos >= f.nv)
        throw std::invalid_argument("score: target position out of range");
    std::vector<T> s(f.nv);
    const T* tgt = f.at(target_pos, 1);
    for (int j = 0; j < f.nv; ++j) {
        T acc = 0;
        const T* cj = f.at(j, 0);
        for (int c = 0; c < f.d; ++c) acc += cj[c] * tgt[c];
        s[j] = acc;
    }
    return s;
}

template <typename T>
std::vector<T> forward(const ModelParams<T>& p, const float* x, const std::uint8_t* m, int nv,
                       int no, int target_pos) {
    FeatureMatrix<T> f;
    ForwardCache<T> cache;
    cache.keep_for_backward = false;
    extract_features(p, x, m, nv, no, f, cache);
    return score(f, target_pos);
}

template <typename T>
void save_checkpoint(const ModelParams<T>& p, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::size_t bytes = p.values.size() * sizeof(T);
    atomic_write(dir / "params.bin", p.values.data(), bytes);
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : p.layout.tensors())
        tensors.push_back({{"name", t.name}, {"offset", t.offset}, {"size", t.size}});
    nlohmann::json meta{
        {"format_version", 1},
        {"dtype", sizeof(T) == 4 ? "f32" : "f64"},
        {"model",
         {{"layers", p.cfg.layers},
          {"embed_dim", p.cfg.embed_dim},
          {"heads", p.cfg.heads},
          {"ff_hidden", p.cfg.ff_hidden}}},
        {"tensors", tensors},
        {"sha256", {{"params.bin", sha256_hex(p.values.data(), bytes)}}},
    };
    const auto text = meta.dump(2) + '\n';
    atomic_write(dir / "config.json", text.data(), text.size());
}

namespace {

nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir) {
    std::ifstream in(dir / "config.json");
    if (!in) throw std::runtime_error("cannot open checkpoint config: " + dir.string());
    auto meta = nlohmann::json::parse(in);
    if (meta.at("format_version").get<int>() != 1)
        throw std::runtime_error("checkpoint: unsupported format version");
    return meta;
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::filesystem::path& dir) {
    const auto meta = read_checkpoint_meta(dir);
    const auto& m = meta.at("model");
    return {{m.at("layers").get<int>(), m.at("embed_dim").get<int>(), m.at("heads").get<int>(),
             m.at("ff_hidden").get<int>()},
            meta.at("dtype").get<std::string>()};
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& dir) {
    const auto meta = read_checkpoint_meta(dir);
    const auto want_dtype = sizeof(T) == 4 ? "f32" : "f64";
    if (meta.at("dtype").get<std::string>() != want_dtype)
        throw std::runtime_error("checkpoint: dtype mismatch (stored " +
                                 meta.at("dtype").get<std::string>() + ")");
    const auto& m = meta.at("model");
    ModelConfig cfg{m.at("layers").get<int>(), m.at("embed_dim").get<int>(),
                    m.at("heads").get<int>(), m.at("ff_hidden").get<int>()};
    ModelParams<T> p{cfg, ParamLayout::build(cfg), {}};

    std::ifstream in(dir / "params.bin", std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint params: " + dir.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() != p.layout.total() * sizeof(T))
        throw std::runtime_error("checkpoint: params.bin size mismatch");
    if (sha256_hex(bytes.data(), bytes.size()) !=
        meta.at("sha256").at("params.bin").get<std::string>())
        throw std::runtime_error("checkpoint: params.bin checksum mismatch");
    p.values.resize(p.layout.total());
    std::memcpy(p.values.data(), bytes.data(), bytes.size());
    return p;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, std::uint64_t);
template void extract_features<float>(const ModelParams<float>&, const float*,
                                      const std::uint8_t*, int, int, FeatureMatrix<float>&,
                                      ForwardCache<float>&);
template void extract_features<double>(const ModelParams<double>&, const float*,
                                       const std::uint8_t*, int, int, FeatureMatrix<double>&,
                                       ForwardCache<double>&);
template void extract_features_backward<float>(const ModelParams<float>&,
                                               const ForwardCache<float>&,
                                               const FeatureMatrix<float>&,
                                               std::vector<float>&);
template void extract_features_backward<double>(const ModelParams<double>&,
                                                const ForwardCache<double>&,
                                                const FeatureMatrix<double>&,
                                                std::vector<double>&);
template std::vector<float> score<float>(const FeatureMatrix<float>&, int);
template std::vector<double> score<double>(const FeatureMatrix<double>&, int);
template std::vector<float> forward<float>(const ModelParams<float>&, const float*,
                                           const std::uint8_t*, int, int, int);
template std::vector<double> forward<double>(const ModelParams<double>&, const float*,
                                             const std::uint8_t*, int, int, int);
template void save_checkpoint<float>(const ModelParams<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const ModelParams<double>&, const std::filesystem::path&);
template ModelParams<float> load_checkpoint<float>(const std::filesystem::path&);
template ModelParams<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace tcd
