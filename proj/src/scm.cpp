#include "tcd/scm.hpp"

#include <cmath>
#include <stdexcept>

#include "tcd/rng.hpp"

namespace tcd {

std::string to_string(MechanismKind kind) {
    switch (kind) {
        case MechanismKind::LINEAR: return "linear";
        case MechanismKind::MLP: return "mlp";
        case MechanismKind::POLY: return "poly";
        case MechanismKind::SIGMOID: return "sigmoid";
    }
    throw std::logic_error("unknown mechanism kind");
}

MechanismKind mechanism_kind_from_string(const std::string& s) {
    if (s == "linear") return MechanismKind::LINEAR;
    if (s == "mlp") return MechanismKind::MLP;
    if (s == "poly") return MechanismKind::POLY;
    if (s == "sigmoid") return MechanismKind::SIGMOID;
    throw std::invalid_argument("unknown mechanism kind: " + s);
}

double ScmModel::eval_node(int i, const std::vector<double>& pa) const {
    const auto& fn = node_fns[i];
    switch (spec.kind) {
        case MechanismKind::LINEAR: {
            double y = 0.0;
            for (std::size_t k = 0; k < pa.size(); ++k) y += fn.w[k] * pa[k];
            return y;
        }
        case MechanismKind::POLY: {
            double y = 0.0;
            for (std::size_t k = 0; k < pa.size(); ++k)
                y += fn.w[k] * pa[k] + fn.w2[k] * pa[k] * pa[k];
            return y;
        }
        case MechanismKind::SIGMOID: {
            double z = 0.0;
            for (std::size_t k = 0; k < pa.size(); ++k) z += fn.w[k] * pa[k];
            return fn.scale * std::tanh(z);
        }
        case MechanismKind::MLP: {
            const auto hidden = fn.mlp_b1.size();
            double y = fn.bias;
            for (std::size_t h = 0; h < hidden; ++h) {
                double z = fn.mlp_b1[h];
                for (std::size_t k = 0; k < pa.size(); ++k)
                    z += fn.mlp_w1[h * pa.size() + k] * pa[k];
                y += fn.w2[h] * std::tanh(z);
            }
            return y;
        }
    }
    throw std::logic_error("unreachable");
}

namespace {

double signed_weight(const MechanismSpec& spec, Rng& rng) {
    const double mag = rng.uniform(spec.weight_min, spec.weight_max);
    return rng.bernoulli(0.5) ? mag : -mag;
}

}  // namespace

ScmModel build_scm(const CausalGraph& graph, const MechanismSpec& spec, std::uint64_t seed) {
    if (spec.weight_min <= 0.0 || spec.weight_max < spec.weight_min)
        throw std::invalid_argument("build_scm: weight range must be positive and ordered");
    ScmModel scm{graph, spec, {}};
    scm.node_fns.resize(graph.n());
    Rng rng(derive_seed(seed, 0x1u));
    for (int i = 0; i < graph.n(); ++i) {
        const auto deg = graph.parents(i).size();
        if (deg == 0) continue;
        auto& fn = scm.node_fns[i];
        switch (spec.kind) {
            case MechanismKind::LINEAR:
                for (std::size_t k = 0; k < deg; ++k) fn.w.push_back(signed_weight(spec, rng));
                break;
            case MechanismKind::POLY:
                for (std::size_t k = 0; k < deg; ++k)
                    fn.w.push_back(rng.uniform(-spec.poly_coeff, spec.poly_coeff));
                for (std::size_t k = 0; k < deg; ++k)
                    fn.w2.push_back(rng.uniform(-spec.poly_coeff, spec.poly_coeff));
                break;
            case MechanismKind::SIGMOID:
                for (std::size_t k = 0; k < deg; ++k) fn.w.push_back(signed_weight(spec, rng));
                fn.scale = rng.uniform(0.5, 2.0);
                break;
            case MechanismKind::MLP: {
                const int hidden = spec.mlp_hidden;
                const double a1 = std::sqrt(6.0 / (static_cast<double>(deg) + hidden));
                const double a2 = std::sqrt(6.0 / (hidden + 1.0));
                fn.mlp_w1.resize(static_cast<std::size_t>(hidden) * deg);
                for (auto& w : fn.mlp_w1) w = rng.uniform(-a1, a1);
                fn.mlp_b1.assign(hidden, 0.0);
                for (auto& b : fn.mlp_b1) b = rng.uniform(-0.1, 0.1);
                fn.w2.resize(hidden);
                for (auto& w : fn.w2) w = rng.uniform(-a2, a2);
                fn.bias = rng.uniform(-0.1, 0.1);
                break;
            }
        }
    }
    return scm;
}

ObservationSet sample(const ScmModel& scm, int m_obs,
                      const std::vector<std::pair<InterventionSpec, int>>& interventions,
                      std::uint64_t seed) {
    if (m_obs < 0) throw std::invalid_argument("sample: negative observation count");
    const int n = scm.graph.n();
    int m = m_obs;
    for (const auto& [spec, count] : interventions) {
        if (count < 0) throw std::invalid_argument("sample: negative intervention count");
        if (spec.variable < 0 || spec.variable >= n)
            throw std::invalid_argument("sample: intervention variable out of range");
        m += count;
    }

    std::vector<float> x(static_cast<std::size_t>(n) * m, 0.0f);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * m, 0);

    // (intervened variable, value) per column; -1 = observational
    std::vector<int> col_var(m, -1);
    std::vector<double> col_val(m, 0.0);
    int at = m_obs;
    for (const auto& [spec, count] : interventions)
        for (int c = 0; c < count; ++c, ++at) {
            col_var[at] = spec.variable;
            col_val[at] = spec.value;
            mask[static_cast<std::size_t>(spec.variable) * m + at] = 1;
        }

    std::vector<double> values(n);
    std::vector<double> pa_vals;
    for (int col = 0; col < m; ++col) {
        Rng rng(derive_seed(seed, 0x2u, static_cast<std::uint64_t>(col)));
        for (int i : scm.graph.topo_order()) {
            if (col_var[col] == i) {
                values[i] = col_val[col];
                continue;
            }
            const auto& parents = scm.graph.parents(i);
            if (parents.empty()) {
                values[i] = rng.uniform(scm.spec.root_low, scm.spec.root_high);
            } else {
                pa_vals.clear();
                for (int p : parents) pa_vals.push_back(values[p]);
                values[i] = scm.eval_node(i, pa_vals) + scm.spec.noise_std * rng.normal();
            }
        }
        for (int i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i) * m + col] = static_cast<float>(values[i]);
    }
    return ObservationSet(n, m, std::move(x), std::move(mask));
}

ObservationSet make_intervention_suite(const ScmModel& scm, int per_var, int obs,
                                       std::uint64_t seed) {
    if (per_var < 0 || obs < 0)
        throw std::invalid_argument("make_intervention_suite: negative counts");
    std::vector<std::pair<InterventionSpec, int>> interventions;
    for (int j = 0; j < scm.graph.n(); ++j)
        interventions.push_back({InterventionSpec{j, 0.0}, per_var});
    return sample(scm, obs, interventions, seed);
}

}  // namespace tcd
