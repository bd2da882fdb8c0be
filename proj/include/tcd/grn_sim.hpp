#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcd/data.hpp"
#include "tcd/graph.hpp"

namespace tcd {

enum class FidelityLevel { HIGH, MEDIUM, LOW };

std::string to_string(FidelityLevel level);
FidelityLevel fidelity_from_string(const std::string& s);

// Technical-noise stages applied in fixed order: dropout zeroing, outlier-gene
// inflation, per-column library-size rescaling.
struct NoiseProfile {
    std::string name = "custom";
    double dropout_pct = 0.0;        // per-entry zeroing probability
    double outlier_prob = 0.0;       // per-gene chance of inflation
    double outlier_scale = 1.0;      // inflation factor = max(1, LogNormal(ln scale, 0.5))
    double library_mu = 0.0;         // per-column total = exp(mu + sigma*xi) * mean total
    double library_sigma = 0.0;
};

// Named presets ("10x-chromium", "illumina", "drop-seq", "smart-seq").
NoiseProfile noise_preset(const std::string& name);
std::vector<std::string> noise_preset_names();

struct GrnConfig {
    int cell_types = 10;
    double hill_coeff = 2.0;           // h
    double half_response = 0.0;        // fixed K for every edge; 0 = auto (half of
                                       // the regulator's estimated steady state)
    double interaction_min = 1.0;      // k_ij ~ U(min, max)
    double interaction_max = 5.0;
    double repressor_fraction = 0.2;   // per-edge probability of a repressive sign
    double basal_min = 1.0;            // master-regulator production ~ U(min, max)
    double basal_max = 3.0;            // per (root, cell type)
    double decay = 0.8;                // lambda_dec
    double sde_dt = 0.01;
    int burn_in_steps = 500;
    double noise_amplitude = 1.0;      // q; 0 gives the deterministic ODE
    FidelityLevel fidelity = FidelityLevel::HIGH;
    std::optional<NoiseProfile> noise; // nullopt skips technical noise entirely

    void validate() const;
};

// Hill regulation: activators x^h / (K^h + x^h), repressors one minus that.
double hill(double x, double half_response, double hill_coeff, bool repressive);

// Pre-noise mean expression matrix with per-column tags.
struct ExpressionMatrix {
    int n = 0;
    int m = 0;
    std::vector<double> lambda;     // n*m row-major, >= 0
    std::vector<int> cell_type;     // per column
    std::vector<int> knockout;      // per column, gene index or -1
};

// Interaction parameters drawn once per (graph, cfg, seed); steady-state
// columns then sample from Langevin dynamics.
struct GrnModel {
    CausalGraph graph;
    GrnConfig cfg;
    std::vector<double> interaction;       // per edge, in graph.edges() order
    std::vector<std::uint8_t> repressive;  // per edge
    std::vector<double> basal;             // cell_types x n row-major, roots only
    std::vector<double> half_response;     // per edge
    std::vector<std::vector<int>> in_edges;  // edge indices incoming per node

    double production(const std::vector<double>& x, int i, int cell_type, int knockout) const;

    // Deterministic steady state (noise off), optionally with one knockout.
    std::vector<double> steady_state(int cell_type, int knockout_gene = -1) const;
};

GrnModel build_grn(const CausalGraph& graph, const GrnConfig& cfg, std::uint64_t seed);

// Columns: cells_per_type per cell type, then `count` knockout columns per
// (gene, count) entry with cell types assigned round-robin. Each column is an
// independent trajectory.
ExpressionMatrix simulate_clean(const GrnModel& model, int cells_per_type,
                                const std::vector<std::pair<int, int>>& knockouts,
                                std::uint64_t seed);

ExpressionMatrix apply_technical_noise(const ExpressionMatrix& e, const NoiseProfile& profile,
                                       std::uint64_t seed);

// HIGH returns lambda unchanged; MEDIUM the mean of 100 Poisson draws per
// entry; LOW a single Poisson draw (integer-valued).
std::vector<double> apply_fidelity(const ExpressionMatrix& e, FidelityLevel level,
                                   std::uint64_t seed);

// simulate_clean -> apply_technical_noise -> apply_fidelity, packaged with the
// knockout mask. X is n x (n*per_var + obs).
ObservationSet generate_grn_dataset(const CausalGraph& graph, const GrnConfig& cfg, int per_var,
                                    int obs, std::uint64_t seed);

}  // namespace tcd
