#include "tcd/grn_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "tcd/rng.hpp"

namespace tcd {

std::string to_string(FidelityLevel level) {
    switch (level) {
        case FidelityLevel::HIGH: return "high";
        case FidelityLevel::MEDIUM: return "medium";
        case FidelityLevel::LOW: return "low";
    }
    throw std::logic_error("unknown fidelity level");
}

FidelityLevel fidelity_from_string(const std::string& s) {
    if (s == "high") return FidelityLevel::HIGH;
    if (s == "medium") return FidelityLevel::MEDIUM;
    if (s == "low") return FidelityLevel::LOW;
    throw std::invalid_argument("unknown fidelity level: " + s);
}

NoiseProfile noise_preset(const std::string& name) {
    // Placeholder statistics per platform; dropout rates sit in the documented
    // 0.60-0.95 regime.
    if (name == "10x-chromium") return {name, 0.75, 0.01, 4.0, 0.0, 0.35};
    if (name == "drop-seq") return {name, 0.90, 0.01, 4.0, 0.0, 0.45};
    if (name == "illumina") return {name, 0.65, 0.02, 3.0, 0.0, 0.30};
    if (name == "smart-seq") return {name, 0.60, 0.02, 3.0, 0.0, 0.25};
    throw std::invalid_argument("unknown noise preset: " + name);
}

std::vector<std::string> noise_preset_names() {
    return {"10x-chromium", "drop-seq", "illumina", "smart-seq"};
}

void GrnConfig::validate() const {
    if (cell_types < 1) throw std::invalid_argument("grn: cell_types must be >= 1");
    if (hill_coeff <= 0.0) throw std::invalid_argument("grn: hill coefficient must be positive");
    if (half_response < 0.0) throw std::invalid_argument("grn: half response must be >= 0");
    if (decay <= 0.0) throw std::invalid_argument("grn: decay must be positive");
    if (sde_dt <= 0.0) throw std::invalid_argument("grn: dt must be positive");
    if (burn_in_steps < 0) throw std::invalid_argument("grn: negative burn-in");
    if (interaction_min <= 0.0 || interaction_max < interaction_min)
        throw std::invalid_argument("grn: interaction range must be positive and ordered");
    if (repressor_fraction < 0.0 || repressor_fraction > 1.0)
        throw std::invalid_argument("grn: repressor fraction must be in [0,1]");
}

double hill(double x, double half_response, double hill_coeff, bool repressive) {
    if (x < 0.0) throw std::invalid_argument("hill: negative input");
    if (half_response <= 0.0 || hill_coeff <= 0.0)
        throw std::invalid_argument("hill: K and h must be positive");
    double act;
    if (x == 0.0) {
        act = 0.0;
    } else {
        const double r = std::pow(x / half_response, hill_coeff);
        act = r / (1.0 + r);
    }
    return repressive ? 1.0 - act : act;
}

// Production rate of gene i given current state, or 0 when knocked out.
double GrnModel::production(const std::vector<double>& x, int i, int cell_type,
                            int knockout) const {
    if (i == knockout) return 0.0;
    if (graph.is_root(i))
        return basal[static_cast<std::size_t>(cell_type) * graph.n() + i];
    double p = 0.0;
    for (int e : in_edges[i])
        p += interaction[e] * hill(x[graph.edges()[e].first], half_response[e], cfg.hill_coeff,
                                   repressive[e] != 0);
    return p;
}

std::vector<double> GrnModel::steady_state(int cell_type, int knockout_gene) const {
    std::vector<double> x(graph.n(), 0.0);
    for (int i : graph.topo_order())
        x[i] = production(x, i, cell_type, knockout_gene) / cfg.decay;
    return x;
}

GrnModel build_grn(const CausalGraph& graph, const GrnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    GrnModel model{graph, cfg, {}, {}, {}, {}, {}};
    Rng rng(derive_seed(seed, 0x10u));
    const auto n_edges = graph.edges().size();
    model.in_edges.resize(graph.n());
    for (std::size_t e = 0; e < n_edges; ++e)
        model.in_edges[graph.edges()[e].second].push_back(static_cast<int>(e));
    model.interaction.resize(n_edges);
    model.repressive.resize(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) {
        model.interaction[e] = rng.uniform(cfg.interaction_min, cfg.interaction_max);
        model.repressive[e] = rng.bernoulli(cfg.repressor_fraction) ? 1 : 0;
    }
    model.basal.resize(static_cast<std::size_t>(cfg.cell_types) * graph.n());
    for (int ct = 0; ct < cfg.cell_types; ++ct)
        for (int i = 0; i < graph.n(); ++i)
            if (graph.is_root(i))
                model.basal[static_cast<std::size_t>(ct) * graph.n() + i] =
                    rng.uniform(cfg.basal_min, cfg.basal_max);

    model.half_response.assign(n_edges, cfg.half_response);
    if (cfg.half_response == 0.0) {
        // auto mode: K = half the regulator's mean steady-state expression,
        // estimated from the deterministic fixed point. Seed K=1 for the
        // estimation pass, then freeze.
        model.half_response.assign(n_edges, 1.0);
        std::vector<double> mean_ss(graph.n(), 0.0);
        for (int ct = 0; ct < cfg.cell_types; ++ct) {
            const auto ss = model.steady_state(ct);
            for (int i = 0; i < graph.n(); ++i) mean_ss[i] += ss[i] / cfg.cell_types;
        }
        for (std::size_t e = 0; e < n_edges; ++e)
            model.half_response[e] = std::max(0.5 * mean_ss[graph.edges()[e].first], 1e-6);
    }
    return model;
}

namespace {

struct ColumnPlan {
    int cell_type;
    int knockout;  // -1 = observational
};

ExpressionMatrix simulate_columns(const GrnModel& model, const std::vector<ColumnPlan>& plan,
                                  std::uint64_t seed) {
    const auto& g = model.graph;
    const auto& cfg = model.cfg;
    const int n = g.n();
    const int m = static_cast<int>(plan.size());
    ExpressionMatrix out;
    out.n = n;
    out.m = m;
    out.lambda.resize(static_cast<std::size_t>(n) * m);
    out.cell_type.resize(m);
    out.knockout.resize(m);

    // deterministic fixed points, cached per (cell type, knockout)
    std::map<std::pair<int, int>, std::vector<double>> init;
    for (const auto& p : plan) {
        const auto key = std::make_pair(p.cell_type, p.knockout);
        if (!init.count(key)) init[key] = model.steady_state(p.cell_type, p.knockout);
    }

    const double dt = cfg.sde_dt;
    const double sqrt_dt = std::sqrt(dt);
    const double q = cfg.noise_amplitude;
#pragma omp parallel for schedule(dynamic)
    for (int col = 0; col < m; ++col) {
        Rng rng(derive_seed(seed, 0x11u, static_cast<std::uint64_t>(col)));
        const auto& p = plan[col];
        std::vector<double> x = init.at({p.cell_type, p.knockout});
        for (int step = 0; step < cfg.burn_in_steps; ++step) {
            for (int i : g.topo_order()) {
                const double prod = model.production(x, i, p.cell_type, p.knockout);
                const double dec = cfg.decay * x[i];
                double nx = x[i] + (prod - dec) * dt;
                if (q > 0.0)
                    nx += q * (std::sqrt(prod) * rng.normal() - std::sqrt(dec) * rng.normal()) *
                          sqrt_dt;
                x[i] = std::fabs(nx);  // reflect at zero
            }
        }
        for (int i = 0; i < n; ++i)
            out.lambda[static_cast<std::size_t>(i) * m + col] = x[i];
        out.cell_type[col] = p.cell_type;
        out.knockout[col] = p.knockout;
    }
    return out;
}

}  // namespace

ExpressionMatrix simulate_clean(const GrnModel& model, int cells_per_type,
                                const std::vector<std::pair<int, int>>& knockouts,
                                std::uint64_t seed) {
    if (cells_per_type < 0) throw std::invalid_argument("simulate_clean: negative cell count");
    std::vector<ColumnPlan> plan;
    for (int ct = 0; ct < model.cfg.cell_types; ++ct)
        for (int c = 0; c < cells_per_type; ++c) plan.push_back({ct, -1});
    int at = static_cast<int>(plan.size());
    for (const auto& [gene, count] : knockouts) {
        if (gene < 0 || gene >= model.graph.n())
            throw std::invalid_argument("simulate_clean: knockout gene out of range");
        for (int c = 0; c < count; ++c, ++at)
            plan.push_back({at % model.cfg.cell_types, gene});
    }
    return simulate_columns(model, plan, seed);
}

ExpressionMatrix apply_technical_noise(const ExpressionMatrix& e, const NoiseProfile& profile,
                                       std::uint64_t seed) {
    ExpressionMatrix out = e;
    const int n = e.n, m = e.m;

    {  // 1) dropout
        Rng rng(derive_seed(seed, 0x12u, 1));
        for (auto& v : out.lambda)
            if (rng.bernoulli(profile.dropout_pct)) v = 0.0;
    }
    {  // 2) outlier genes
        Rng rng(derive_seed(seed, 0x12u, 2));
        for (int i = 0; i < n; ++i) {
            if (!rng.bernoulli(profile.outlier_prob)) continue;
            const double f =
                std::max(1.0, rng.lognormal(std::log(profile.outlier_scale), 0.5));
            for (int c = 0; c < m; ++c)
                out.lambda[static_cast<std::size_t>(i) * m + c] *= f;
        }
    }
    {  // 3) library size: per-column totals follow a log-normal around the mean
        Rng rng(derive_seed(seed, 0x12u, 3));
        std::vector<double> colsum(m, 0.0);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < m; ++c)
                colsum[c] += out.lambda[static_cast<std::size_t>(i) * m + c];
        double mean_sum = 0.0;
        for (double s : colsum) mean_sum += s;
        mean_sum /= std::max(1, m);
        for (int c = 0; c < m; ++c) {
            const double target =
                std::exp(profile.library_mu + profile.library_sigma * rng.normal()) * mean_sum;
            if (colsum[c] <= 0.0) continue;
            const double f = target / colsum[c];
            for (int i = 0; i < n; ++i)
                out.lambda[static_cast<std::size_t>(i) * m + c] *= f;
        }
    }
    return out;
}

std::vector<double> apply_fidelity(const ExpressionMatrix& e, FidelityLevel level,
                                   std::uint64_t seed) {
    for (double v : e.lambda)
        if (v < 0.0) throw std::invalid_argument("apply_fidelity: negative expression");
    std::vector<double> out(e.lambda.size());
    switch (level) {
        case FidelityLevel::HIGH:
            out = e.lambda;
            break;
        case FidelityLevel::MEDIUM: {
            Rng rng(derive_seed(seed, 0x13u));
            for (std::size_t k = 0; k < out.size(); ++k) {
                long total = 0;
                for (int rep = 0; rep < 100; ++rep) total += rng.poisson(e.lambda[k]);
                out[k] = static_cast<double>(total) / 100.0;
            }
            break;
        }
        case FidelityLevel::LOW: {
            Rng rng(derive_seed(seed, 0x13u));
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] = static_cast<double>(rng.poisson(e.lambda[k]));
            break;
        }
    }
    return out;
}

ObservationSet generate_grn_dataset(const CausalGraph& graph, const GrnConfig& cfg, int per_var,
                                    int obs, std::uint64_t seed) {
    if (per_var < 0 || obs < 0)
        throw std::invalid_argument("generate_grn_dataset: negative counts");
    const auto model = build_grn(graph, cfg, seed);
    const int n = graph.n();

    std::vector<ColumnPlan> plan;
    for (int c = 0; c < obs; ++c) plan.push_back({c % cfg.cell_types, -1});
    for (int gene = 0; gene < n; ++gene)
        for (int c = 0; c < per_var; ++c)
            plan.push_back({static_cast<int>(plan.size()) % cfg.cell_types, gene});

    auto expr = simulate_columns(model, plan, seed);
    if (cfg.noise) expr = apply_technical_noise(expr, *cfg.noise, seed);
    const auto values = apply_fidelity(expr, cfg.fidelity, seed);

    const int m = expr.m;
    std::vector<float> x(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) x[k] = static_cast<float>(values[k]);
    std::vector<std::uint8_t> mask(values.size(), 0);
    for (int c = 0; c < m; ++c)
        if (expr.knockout[c] >= 0)
            mask[static_cast<std::size_t>(expr.knockout[c]) * m + c] = 1;
    return ObservationSet(n, m, std::move(x), std::move(mask));
}

}  // namespace tcd
