#pragma once

#include <cstdint>
#include <vector>

#include "tcd/data.hpp"
#include "tcd/graph.hpp"

namespace tcd {

enum class MechanismKind { LINEAR, MLP, POLY, SIGMOID };

std::string to_string(MechanismKind kind);
MechanismKind mechanism_kind_from_string(const std::string& s);

struct MechanismSpec {
    MechanismKind kind = MechanismKind::LINEAR;
    double weight_min = 0.5;   // |w| range for linear/sigmoid combinations
    double weight_max = 2.0;
    double poly_coeff = 1.0;   // poly coefficients ~ U(-poly_coeff, poly_coeff)
    int mlp_hidden = 16;
    double root_low = -1.0;    // roots ~ U(root_low, root_high)
    double root_high = 1.0;
    double noise_std = 0.1;    // additive Gaussian noise per non-root
};

// Per-node sampled mechanism. Which fields are used depends on the kind:
//   LINEAR:  y = dot(w, pa)
//   POLY:    y = sum_j a_j*pa_j + b_j*pa_j^2
//   SIGMOID: y = scale * tanh(dot(w, pa))
//   MLP:     y = w2 . tanh(W1*pa + b1) + b2   (2-layer perceptron)
struct NodeFunction {
    std::vector<double> w;        // linear/sigmoid weights, or poly a_j
    std::vector<double> w2;       // poly b_j, or MLP output weights
    std::vector<double> mlp_w1;   // hidden x |pa| row-major
    std::vector<double> mlp_b1;
    double bias = 0.0;            // MLP b2
    double scale = 1.0;           // SIGMOID output scale
};

struct ScmModel {
    CausalGraph graph;
    MechanismSpec spec;
    std::vector<NodeFunction> node_fns;  // roots keep an empty function

    double eval_node(int i, const std::vector<double>& parent_values) const;
};

struct InterventionSpec {
    int variable = 0;
    double value = 0.0;  // 0 = knockout
};

// Deterministic per (graph, spec, seed); every non-root gets a sampled
// function, roots only a root distribution draw at sample time.
ScmModel build_scm(const CausalGraph& graph, const MechanismSpec& spec, std::uint64_t seed);

// Ancestral sampling in topological order. Columns: `m_obs` observational
// draws followed by the interventional groups in the order given; each group
// is (spec, count) with the intervened variable clamped to spec.value.
ObservationSet sample(const ScmModel& scm, int m_obs,
                      const std::vector<std::pair<InterventionSpec, int>>& interventions,
                      std::uint64_t seed);

// Knockout suite: `obs` observational columns then per_var do(x_j = 0)
// columns for every variable j in index order.
ObservationSet make_intervention_suite(const ScmModel& scm, int per_var, int obs,
                                       std::uint64_t seed);

}  // namespace tcd
