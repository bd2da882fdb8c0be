// Command-line driver: dataset generation, training, ensembled inference,
// evaluation, benchmarks and plots, all reproducible from JSON configs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tcd/data.hpp"
#include "tcd/engine.hpp"
#include "tcd/eval.hpp"
#include "tcd/graph.hpp"
#include "tcd/grn_sim.hpp"
#include "tcd/model.hpp"
#include "tcd/plot.hpp"
#include "tcd/rng.hpp"
#include "tcd/scm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

// Strict schema: unknown keys are rejected, not ignored.
void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for \"") + key + "\"");
    }
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---- graph / dataset sections ------------------------------------------

tcd::GraphSpec parse_graph_spec(const json& cfg) {
    require_keys(cfg, "graph",
                 {"kind", "n", "avg_degree", "sbm_blocks", "sbm_intra_ratio", "edges_path"});
    tcd::GraphSpec spec;
    spec.kind = tcd::graph_kind_from_string(get_or<std::string>(cfg, "kind", "er"));
    spec.avg_degree = get_or<double>(cfg, "avg_degree", 2.0);
    spec.sbm_blocks = get_or<int>(cfg, "sbm_blocks", 5);
    spec.sbm_intra_ratio = get_or<double>(cfg, "sbm_intra_ratio", 10.0);
    return spec;
}

tcd::CausalGraph build_graph(const json& cfg, std::uint64_t seed) {
    const auto spec = parse_graph_spec(cfg);
    const int n = get_or<int>(cfg, "n", 0);
    if (spec.kind == tcd::GraphKind::CUSTOM) {
        const auto path = get_or<std::string>(cfg, "edges_path", "");
        if (path.empty()) throw ConfigError("custom graph needs edges_path");
        return tcd::load_edge_list(path, n);
    }
    if (n < 2) throw ConfigError("graph.n must be >= 2");
    return tcd::generate_graph(spec, n, seed);
}

tcd::MechanismSpec parse_mechanism(const json& cfg) {
    require_keys(cfg, "mechanism",
                 {"kind", "weight_min", "weight_max", "poly_coeff", "mlp_hidden", "root_low",
                  "root_high", "noise_std"});
    tcd::MechanismSpec spec;
    spec.kind = tcd::mechanism_kind_from_string(get_or<std::string>(cfg, "kind", "linear"));
    spec.weight_min = get_or<double>(cfg, "weight_min", spec.weight_min);
    spec.weight_max = get_or<double>(cfg, "weight_max", spec.weight_max);
    spec.poly_coeff = get_or<double>(cfg, "poly_coeff", spec.poly_coeff);
    spec.mlp_hidden = get_or<int>(cfg, "mlp_hidden", spec.mlp_hidden);
    spec.root_low = get_or<double>(cfg, "root_low", spec.root_low);
    spec.root_high = get_or<double>(cfg, "root_high", spec.root_high);
    spec.noise_std = get_or<double>(cfg, "noise_std", spec.noise_std);
    return spec;
}

tcd::NoiseProfile parse_noise_profile(const json& cfg) {
    if (cfg.is_string()) {
        const auto name = cfg.get<std::string>();
        if (name.find(".json") != std::string::npos || name.find('/') != std::string::npos) {
            std::ifstream in(name);
            if (!in) throw ConfigError("cannot open noise profile: " + name);
            return parse_noise_profile(json::parse(in));
        }
        return tcd::noise_preset(name);
    }
    require_keys(cfg, "noise_profile",
                 {"name", "dropout_pct", "outlier_prob", "outlier_scale", "library_mu",
                  "library_sigma"});
    tcd::NoiseProfile p;
    p.name = get_or<std::string>(cfg, "name", "custom");
    p.dropout_pct = get_or<double>(cfg, "dropout_pct", 0.0);
    p.outlier_prob = get_or<double>(cfg, "outlier_prob", 0.0);
    p.outlier_scale = get_or<double>(cfg, "outlier_scale", 1.0);
    p.library_mu = get_or<double>(cfg, "library_mu", 0.0);
    p.library_sigma = get_or<double>(cfg, "library_sigma", 0.0);
    return p;
}

tcd::GrnConfig parse_grn(const json& cfg) {
    require_keys(cfg, "grn",
                 {"cell_types", "hill_coeff", "half_response", "interaction_min",
                  "interaction_max", "repressor_fraction", "basal_min", "basal_max", "decay",
                  "sde_dt", "burn_in_steps", "noise_amplitude", "fidelity", "noise_profile"});
    tcd::GrnConfig g;
    g.cell_types = get_or<int>(cfg, "cell_types", g.cell_types);
    g.hill_coeff = get_or<double>(cfg, "hill_coeff", g.hill_coeff);
    g.half_response = get_or<double>(cfg, "half_response", g.half_response);
    g.interaction_min = get_or<double>(cfg, "interaction_min", g.interaction_min);
    g.interaction_max = get_or<double>(cfg, "interaction_max", g.interaction_max);
    g.repressor_fraction = get_or<double>(cfg, "repressor_fraction", g.repressor_fraction);
    g.basal_min = get_or<double>(cfg, "basal_min", g.basal_min);
    g.basal_max = get_or<double>(cfg, "basal_max", g.basal_max);
    g.decay = get_or<double>(cfg, "decay", g.decay);
    g.sde_dt = get_or<double>(cfg, "sde_dt", g.sde_dt);
    g.burn_in_steps = get_or<int>(cfg, "burn_in_steps", g.burn_in_steps);
    g.noise_amplitude = get_or<double>(cfg, "noise_amplitude", g.noise_amplitude);
    g.fidelity = tcd::fidelity_from_string(get_or<std::string>(cfg, "fidelity", "high"));
    if (cfg.contains("noise_profile") && !cfg.at("noise_profile").is_null())
        g.noise = parse_noise_profile(cfg.at("noise_profile"));
    return g;
}

tcd::ModelConfig parse_model(const json& cfg) {
    require_keys(cfg, "model", {"layers", "embed_dim", "heads", "ff_hidden"});
    tcd::ModelConfig mc;
    mc.layers = get_or<int>(cfg, "layers", mc.layers);
    mc.embed_dim = get_or<int>(cfg, "embed_dim", mc.embed_dim);
    mc.heads = get_or<int>(cfg, "heads", mc.heads);
    mc.ff_hidden = get_or<int>(cfg, "ff_hidden", mc.ff_hidden);
    mc.validate();
    return mc;
}

tcd::InferenceConfig parse_inference(const json& cfg, std::uint64_t seed) {
    require_keys(cfg, "inference", {"n_sub", "m_sub", "ensemble"});
    tcd::InferenceConfig ic;
    ic.n_sub = get_or<int>(cfg, "n_sub", ic.n_sub);
    ic.m_sub = get_or<int>(cfg, "m_sub", ic.m_sub);
    ic.ensemble = get_or<int>(cfg, "ensemble", ic.ensemble);
    ic.seed = seed;
    return ic;
}

// ---- gen-graph ----------------------------------------------------------

int cmd_gen_graph(const json& cfg) {
    require_keys(cfg, "config", {"out", "seed", "graph"});
    const auto out = get_or<std::string>(cfg, "out", "");
    if (out.empty()) throw ConfigError("gen-graph: missing out");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    if (!cfg.contains("graph")) throw ConfigError("gen-graph: missing graph section");
    const auto g = build_graph(cfg.at("graph"), seed);
    tcd::save_graph_dir(g, parse_graph_spec(cfg.at("graph")), seed, out);
    std::cout << "graph: n=" << g.n() << " edges=" << g.edges().size() << " -> " << out << "\n";
    return 0;
}

// ---- gen-data -----------------------------------------------------------

void generate_one_dataset(const json& ds, std::uint64_t seed, const fs::path& out) {
    const auto generator = get_or<std::string>(ds, "generator", "scm");
    const int per_var = get_or<int>(ds, "per_var", 10);
    const int obs = get_or<int>(ds, "obs", 500);
    const auto normalize = get_or<std::string>(ds, "normalize", "none");
    if (!ds.contains("graph")) throw ConfigError("dataset: missing graph section");
    const auto graph = build_graph(ds.at("graph"), tcd::derive_seed(seed, 0x100u));

    tcd::ObservationSet observations;
    json provenance{{"generator", generator}, {"seed", seed}, {"normalize", normalize},
                    {"per_var", per_var}, {"obs", obs}, {"graph", ds.at("graph")}};
    if (generator == "scm") {
        const auto mech = ds.contains("mechanism") ? parse_mechanism(ds.at("mechanism"))
                                                   : tcd::MechanismSpec{};
        const auto scm = tcd::build_scm(graph, mech, tcd::derive_seed(seed, 0x101u));
        observations =
            tcd::make_intervention_suite(scm, per_var, obs, tcd::derive_seed(seed, 0x102u));
        provenance["mechanism"] = tcd::to_string(mech.kind);
    } else if (generator == "grn") {
        const auto grn = ds.contains("grn") ? parse_grn(ds.at("grn")) : tcd::GrnConfig{};
        observations =
            tcd::generate_grn_dataset(graph, grn, per_var, obs, tcd::derive_seed(seed, 0x103u));
        provenance["fidelity"] = tcd::to_string(grn.fidelity);
        if (grn.noise) provenance["noise_profile"] = grn.noise->name;
    } else {
        throw ConfigError("dataset.generator must be scm or grn");
    }

    if (normalize == "log2cpm") {
        observations = tcd::ObservationSet(
            observations.n, observations.m,
            tcd::cpm_normalize(observations.x, observations.n, observations.m),
            observations.mask);
    } else if (normalize == "standardize") {
        observations = tcd::ObservationSet(
            observations.n, observations.m,
            tcd::standardize_rows(observations.x, observations.n, observations.m),
            observations.mask);
    } else if (normalize != "none") {
        throw ConfigError("dataset.normalize must be none, log2cpm or standardize");
    }

    tcd::LabeledDataset labeled(std::move(observations), graph, provenance.dump());
    tcd::save_dataset(labeled, out);
}

int cmd_gen_data(const json& cfg) {
    require_keys(cfg, "config", {"out", "seed", "dataset", "count"});
    const auto out = get_or<std::string>(cfg, "out", "");
    if (out.empty()) throw ConfigError("gen-data: missing out");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    const int count = get_or<int>(cfg, "count", 1);
    if (!cfg.contains("dataset")) throw ConfigError("gen-data: missing dataset section");
    const auto& ds = cfg.at("dataset");
    require_keys(ds, "dataset",
                 {"generator", "graph", "per_var", "obs", "normalize", "mechanism", "grn"});

    if (count == 1) {
        generate_one_dataset(ds, seed, out);
        std::cout << "dataset -> " << out << "\n";
    } else {
        for (int k = 0; k < count; ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "sys_%03d", k);
            generate_one_dataset(ds, tcd::derive_seed(seed, 0x110u, k), fs::path(out) / name);
        }
        std::cout << count << " datasets -> " << out << "\n";
    }
    return 0;
}

// ---- train --------------------------------------------------------------

std::vector<fs::path> expand_dataset_paths(const json& list) {
    std::vector<fs::path> out;
    for (const auto& entry : list) {
        const fs::path p = entry.get<std::string>();
        if (fs::exists(p / "meta.json")) {
            out.push_back(p);
            continue;
        }
        // parent directory holding dataset subdirectories
        std::vector<fs::path> children;
        if (fs::is_directory(p))
            for (const auto& child : fs::directory_iterator(p))
                if (fs::exists(child.path() / "meta.json")) children.push_back(child.path());
        if (children.empty())
            throw ConfigError("no datasets found at " + p.string());
        std::sort(children.begin(), children.end());
        out.insert(out.end(), children.begin(), children.end());
    }
    return out;
}

std::vector<tcd::LabeledDataset> load_datasets(const json& list) {
    std::vector<tcd::LabeledDataset> out;
    for (const auto& p : expand_dataset_paths(list)) out.push_back(tcd::load_dataset(p));
    return out;
}

tcd::TrainConfig parse_train(const json& cfg, std::uint64_t seed) {
    require_keys(cfg, "train",
                 {"batch_size", "max_steps", "base_lr", "weight_decay", "eval_every",
                  "patience", "n_sub", "m_sub", "precision"});
    tcd::TrainConfig tc;
    tc.batch_size = get_or<int>(cfg, "batch_size", tc.batch_size);
    tc.max_steps = get_or<long>(cfg, "max_steps", tc.max_steps);
    tc.base_lr = get_or<double>(cfg, "base_lr", tc.base_lr);
    tc.weight_decay = get_or<double>(cfg, "weight_decay", tc.weight_decay);
    tc.eval_every = get_or<long>(cfg, "eval_every", tc.eval_every);
    tc.patience = get_or<long>(cfg, "patience", tc.patience);
    tc.n_sub = get_or<int>(cfg, "n_sub", tc.n_sub);
    tc.m_sub = get_or<int>(cfg, "m_sub", tc.m_sub);
    tc.seed = seed;
    return tc;
}

int cmd_train(const json& cfg) {
    require_keys(cfg, "config", {"out", "seed", "data", "model", "train"});
    const auto out = get_or<std::string>(cfg, "out", "");
    if (out.empty()) throw ConfigError("train: missing out");
    if (fs::exists(fs::path(out) / "config.json"))
        throw ConfigError("train: checkpoint already exists at " + out +
                          " (resume is not supported; pick a fresh out directory)");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    if (!cfg.contains("data")) throw ConfigError("train: missing data section");
    require_keys(cfg.at("data"), "data", {"train", "val"});
    const auto train_data = load_datasets(cfg.at("data").at("train"));
    const auto val_data = cfg.at("data").contains("val")
                              ? load_datasets(cfg.at("data").at("val"))
                              : std::vector<tcd::LabeledDataset>{};
    const auto mc = cfg.contains("model") ? parse_model(cfg.at("model")) : tcd::ModelConfig{};
    const auto tc = cfg.contains("train") ? parse_train(cfg.at("train"), seed)
                                          : tcd::TrainConfig{};
    const auto precision =
        cfg.contains("train") ? get_or<std::string>(cfg.at("train"), "precision", "f32") : "f32";

    fs::create_directories(out);
    std::ofstream log(fs::path(out) / "train_log.jsonl", std::ios::binary);
    if (precision == "f32") {
        const auto result = tcd::train<float>(train_data, mc, tc, val_data, &log);
        tcd::save_checkpoint(result.params, out);
        std::cout << "best_step=" << result.best_step << " best_val_auroc=" << result.best_metric
                  << " stop_step=" << result.stop_step << " -> " << out << "\n";
    } else if (precision == "f64") {
        const auto result = tcd::train<double>(train_data, mc, tc, val_data, &log);
        tcd::save_checkpoint(result.params, out);
        std::cout << "best_step=" << result.best_step << " best_val_auroc=" << result.best_metric
                  << " stop_step=" << result.stop_step << " -> " << out << "\n";
    } else {
        throw ConfigError("train.precision must be f32 or f64");
    }
    return 0;
}

// ---- infer ---------------------------------------------------------------

std::vector<int> pick_targets(const json& targets, const tcd::LabeledDataset& ds) {
    std::vector<int> out;
    if (targets.is_string() && targets.get<std::string>() == "valid") {
        for (int i = 0; i < ds.obs.n; ++i) {
            long pos = 0;
            for (int j = 0; j < ds.obs.n; ++j)
                if (j != i) pos += ds.labels[static_cast<std::size_t>(i) * ds.obs.n + j];
            if (pos > 0) out.push_back(i);
        }
        return out;
    }
    if (!targets.is_array()) throw ConfigError("infer.targets must be \"valid\" or a list");
    for (const auto& t : targets) out.push_back(t.get<int>());
    return out;
}

template <typename T>
void run_inference(const tcd::ModelParams<T>& params, const tcd::LabeledDataset& ds,
                   const std::vector<int>& targets, const tcd::InferenceConfig& ic,
                   const fs::path& out) {
    for (int target : targets) {
        const auto scores =
            tcd::infer(params, ds.obs, target,
                       {ic.n_sub, ic.m_sub, ic.ensemble,
                        tcd::derive_seed(ic.seed, 0x200u, static_cast<std::uint64_t>(target))});
        std::string csv = "variable,score,is_self\n";
        for (int j = 0; j < ds.obs.n; ++j)
            csv += std::to_string(j) + "," + fmt17(scores.s[j]) + "," +
                   (j == target ? "1" : "0") + "\n";
        char name[32];
        std::snprintf(name, sizeof(name), "target_%04d.csv", target);
        tcd::atomic_write(out / name, csv.data(), csv.size());
    }
}

int cmd_infer(const json& cfg) {
    require_keys(cfg, "config", {"out", "seed", "checkpoint", "dataset", "targets", "inference"});
    const auto out = get_or<std::string>(cfg, "out", "");
    const auto ckpt = get_or<std::string>(cfg, "checkpoint", "");
    const auto data_dir = get_or<std::string>(cfg, "dataset", "");
    if (out.empty() || ckpt.empty() || data_dir.empty())
        throw ConfigError("infer: out, checkpoint and dataset are required");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    const auto ds = tcd::load_dataset(data_dir);
    const auto targets =
        pick_targets(cfg.contains("targets") ? cfg.at("targets") : json("valid"), ds);
    const auto ic = cfg.contains("inference") ? parse_inference(cfg.at("inference"), seed)
                                              : tcd::InferenceConfig{200, 200, 50, seed};

    fs::create_directories(out);
    const auto info = tcd::peek_checkpoint(ckpt);
    if (info.dtype == "f32")
        run_inference(tcd::load_checkpoint<float>(ckpt), ds, targets, ic, out);
    else
        run_inference(tcd::load_checkpoint<double>(ckpt), ds, targets, ic, out);

    json meta{{"dataset", data_dir}, {"checkpoint", ckpt}, {"seed", seed},
              {"targets", targets},
              {"inference", {{"n_sub", ic.n_sub}, {"m_sub", ic.m_sub}, {"ensemble", ic.ensemble}}}};
    const auto text = meta.dump(2) + '\n';
    tcd::atomic_write(fs::path(out) / "scores_meta.json", text.data(), text.size());
    std::cout << targets.size() << " targets -> " << out << "\n";
    return 0;
}

// ---- eval ------------------------------------------------------------

std::map<int, std::vector<double>> load_score_dir(const fs::path& dir, int n) {
    std::map<int, std::vector<double>> scores;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("target_", 0) == 0 && name.find(".csv") != std::string::npos)
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        const auto csv = tcd::read_csv(file);
        std::vector<double> s(n, 0.0);
        int target = -1;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const int var = static_cast<int>(csv.num(r, 0));
            s.at(var) = csv.num(r, 1);
            if (csv.num(r, 2) != 0.0) target = var;
        }
        if (target < 0) throw std::runtime_error("no self-index flag in " + file.string());
        scores[target] = std::move(s);
    }
    if (scores.empty()) throw std::runtime_error("no target_*.csv files in " + dir.string());
    return scores;
}

int cmd_eval(const json& cfg) {
    require_keys(cfg, "config", {"out", "seed", "scores", "dataset", "baselines"});
    const auto out = get_or<std::string>(cfg, "out", "");
    const auto scores_dir = get_or<std::string>(cfg, "scores", "");
    const auto data_dir = get_or<std::string>(cfg, "dataset", "");
    if (out.empty() || scores_dir.empty() || data_dir.empty())
        throw ConfigError("eval: out, scores and dataset are required");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    std::set<std::string> baselines;
    if (cfg.contains("baselines"))
        for (const auto& b : cfg.at("baselines")) baselines.insert(b.get<std::string>());

    const auto ds = tcd::load_dataset(data_dir);
    const int n = ds.obs.n;
    const auto scores = load_score_dir(scores_dir, n);

    struct Method {
        std::string name;
        tcd::MetricReport report;
    };
    std::vector<Method> methods;
    const auto model_report = tcd::evaluate_targets(ds.graph, [&](int i) {
        const auto it = scores.find(i);
        if (it == scores.end())
            throw std::runtime_error("missing score file for target " + std::to_string(i));
        return it->second;
    });
    methods.push_back({"model", model_report});
    if (baselines.count("correlation"))
        methods.push_back({"correlation", tcd::evaluate_targets(ds.graph, [&](int i) {
                               return tcd::correlation_baseline(ds.obs.x, n, ds.obs.m, i);
                           })});
    if (baselines.count("random"))
        methods.push_back({"random", tcd::evaluate_targets(ds.graph, [&](int i) {
                               return tcd::random_baseline(n, i, seed);
                           })});

    fs::create_directories(out);
    // per-target CSV: one row per (method, target)
    std::string csv = "method,target,auroc,ap,f1\n";
    for (const auto& m : methods)
        for (const auto& t : m.report.per_target)
            csv += m.name + "," + std::to_string(t.target) + "," + fmt17(t.auroc) + "," +
                   fmt17(t.ap) + "," + fmt17(t.f1) + "\n";
    tcd::atomic_write(fs::path(out) / "per_target.csv", csv.data(), csv.size());

    // distance-stratified false negative rate for the model's matched-count
    // predictions
    std::map<int, std::vector<int>> predictions;
    const auto labels = ds.graph.cause_label_matrix();
    for (const auto& t : model_report.per_target) {
        std::vector<double> s;
        std::vector<std::uint8_t> l;
        std::vector<int> index_map;
        for (int j = 0; j < n; ++j) {
            if (j == t.target) continue;
            s.push_back(scores.at(t.target)[j]);
            l.push_back(labels[static_cast<std::size_t>(t.target) * n + j]);
            index_map.push_back(j);
        }
        std::vector<int> predicted;
        for (int pos : tcd::top_matched_indices(s, l)) predicted.push_back(index_map[pos]);
        predictions[t.target] = std::move(predicted);
    }
    const auto curve = tcd::fnr_by_distance(ds.graph, predictions);
    std::string dcsv = "distance,fnr,support\n";
    for (const auto& [d, fs_pair] : curve.buckets)
        dcsv += std::to_string(d) + "," + fmt17(fs_pair.first) + "," +
                std::to_string(fs_pair.second) + "\n";
    tcd::atomic_write(fs::path(out) / "fnr_distance.csv", dcsv.data(), dcsv.size());

    json report{{"dataset", data_dir}, {"scores", scores_dir}, {"seed", seed}};
    for (const auto& m : methods) {
        report["methods"][m.name] = {{"mean_auroc", m.report.mean_auroc},
                                     {"mean_ap", m.report.mean_ap},
                                     {"mean_f1", m.report.mean_f1},
                                     {"valid_targets", m.report.valid_targets},
                                     {"skipped_targets", m.report.skipped_targets}};
    }
    const auto text = report.dump(2) + '\n';
    tcd::atomic_write(fs::path(out) / "report.json", text.data(), text.size());
    std::cout << "model mean AUROC " << model_report.mean_auroc << " over "
              << model_report.valid_targets << " targets -> " << out << "\n";
    return 0;
}

// ---- bench ----------------------------------------------------------

template <typename T>
double dataset_mean_auroc(const tcd::ModelParams<T>& params,
                          const std::vector<tcd::LabeledDataset>& sets,
                          const tcd::InferenceConfig& ic) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        const auto& ds = sets[k];
        const auto report = tcd::evaluate_targets(ds.graph, [&](int i) {
            return tcd::infer(params, ds.obs, i,
                              {ic.n_sub, ic.m_sub, ic.ensemble,
                               tcd::derive_seed(ic.seed, 0x300u, k, i)})
                .s;
        });
        sum += report.mean_auroc * report.valid_targets;
        count += report.valid_targets;
    }
    return count > 0 ? sum / count : 0.0;
}

int cmd_bench(const json& cfg) {
    require_keys(cfg, "config",
                 {"out", "seed", "mode", "complexity", "sweep", "ablation"});
    const auto out = get_or<std::string>(cfg, "out", "");
    if (out.empty()) throw ConfigError("bench: missing out");
    const auto seed = get_or<std::uint64_t>(cfg, "seed", 0);
    const auto mode = get_or<std::string>(cfg, "mode", "complexity");
    fs::create_directories(out);

    if (mode == "complexity") {
        const auto& c = cfg.contains("complexity") ? cfg.at("complexity") : json::object();
        require_keys(c, "complexity",
                     {"n_grid", "t_grid", "n_fixed", "ensemble", "n_sub", "m_sub", "per_var",
                      "obs", "repeats", "model"});
        const auto mc = c.contains("model") ? parse_model(c.at("model")) : tcd::ModelConfig{};
        const auto params = tcd::init_params<float>(mc, tcd::derive_seed(seed, 0x301u));
        tcd::InferenceConfig ic;
        ic.n_sub = get_or<int>(c, "n_sub", 100);
        ic.m_sub = get_or<int>(c, "m_sub", 100);
        ic.ensemble = get_or<int>(c, "ensemble", 10);
        const int per_var = get_or<int>(c, "per_var", 10);
        const int obs = get_or<int>(c, "obs", 500);
        const int repeats = get_or<int>(c, "repeats", 3);

        std::vector<tcd::ComplexityCase> cases;
        if (c.contains("n_grid"))
            for (const auto& n : c.at("n_grid")) cases.push_back({n.get<int>(), ic.ensemble});
        const int n_fixed = get_or<int>(c, "n_fixed", 500);
        if (c.contains("t_grid"))
            for (const auto& t : c.at("t_grid")) cases.push_back({n_fixed, t.get<int>()});
        if (cases.empty()) throw ConfigError("bench complexity: empty grids");

        const auto rows = tcd::measure_complexity(params, cases, ic, per_var, obs, repeats, seed);
        std::string csv = "n,ensemble,seconds\n";
        for (const auto& r : rows)
            csv += std::to_string(r.n) + "," + std::to_string(r.ensemble) + "," +
                   fmt17(r.seconds) + "\n";
        tcd::atomic_write(fs::path(out) / "complexity.csv", csv.data(), csv.size());
        std::cout << "complexity table -> " << out << "\n";
        return 0;
    }

    if (mode == "ensemble" || mode == "input-size") {
        const auto& c = cfg.contains("sweep") ? cfg.at("sweep") : json::object();
        require_keys(c, "sweep", {"checkpoint", "datasets", "grid", "inference"});
        const auto ckpt = get_or<std::string>(c, "checkpoint", "");
        if (ckpt.empty() || !c.contains("datasets"))
            throw ConfigError("bench sweep: checkpoint and datasets are required");
        const auto sets = load_datasets(c.at("datasets"));
        const auto base = c.contains("inference") ? parse_inference(c.at("inference"), seed)
                                                  : tcd::InferenceConfig{200, 200, 8, seed};
        if (!c.contains("grid")) throw ConfigError("bench sweep: missing grid");
        const auto info = tcd::peek_checkpoint(ckpt);
        if (info.dtype != "f32" && info.dtype != "f64")
            throw ConfigError("bench sweep: bad checkpoint dtype");

        std::string csv = (mode == "ensemble" ? "ensemble" : std::string("n_sub")) +
                          ",mean_auroc\n";
        for (const auto& gval : c.at("grid")) {
            tcd::InferenceConfig ic = base;
            if (mode == "ensemble")
                ic.ensemble = gval.get<int>();
            else
                ic.n_sub = gval.get<int>();
            const double auc =
                info.dtype == "f32"
                    ? dataset_mean_auroc(tcd::load_checkpoint<float>(ckpt), sets, ic)
                    : dataset_mean_auroc(tcd::load_checkpoint<double>(ckpt), sets, ic);
            csv += std::to_string(gval.get<int>()) + "," + fmt17(auc) + "\n";
        }
        const auto name = mode == "ensemble" ? "ensemble_sweep.csv" : "input_size_sweep.csv";
        tcd::atomic_write(fs::path(out) / name, csv.data(), csv.size());
        std::cout << "sweep -> " << out << "\n";
        return 0;
    }

    if (mode == "ablation") {
        const auto& c = cfg.contains("ablation") ? cfg.at("ablation") : json::object();
        require_keys(c, "ablation",
                     {"train_sources", "test_sources", "model", "train", "inference",
                      "precision"});
        if (!c.contains("train_sources") || !c.contains("test_sources"))
            throw ConfigError("bench ablation: train_sources and test_sources are required");
        const auto mc = c.contains("model") ? parse_model(c.at("model")) : tcd::ModelConfig{};
        const auto tc = c.contains("train") ? parse_train(c.at("train"), seed)
                                            : tcd::TrainConfig{};
        const auto ic = c.contains("inference") ? parse_inference(c.at("inference"), seed)
                                                : tcd::InferenceConfig{200, 200, 8, seed};

        std::vector<std::string> test_names;
        std::vector<std::vector<tcd::LabeledDataset>> test_sets;
        for (const auto& [name, dirs] : c.at("test_sources").items()) {
            test_names.push_back(name);
            test_sets.push_back(load_datasets(dirs));
        }

        // AUROC matrix: one trained model per training source
        std::vector<std::string> train_names;
        std::vector<std::vector<double>> auroc_rows;
        for (const auto& [name, dirs] : c.at("train_sources").items()) {
            train_names.push_back(name);
            auto pool = load_datasets(dirs);
            if (pool.size() < 2)
                throw ConfigError("bench ablation: source " + name + " needs >= 2 datasets");
            // last dataset of the pool is held out for validation
            std::vector<tcd::LabeledDataset> val_pool;
            val_pool.push_back(std::move(pool.back()));
            pool.pop_back();
            tcd::TrainConfig tcs = tc;
            tcs.seed = tcd::derive_seed(seed, 0x310u, train_names.size());
            const auto result = tcd::train<float>(pool, mc, tcs, val_pool, nullptr);
            std::vector<double> row;
            for (std::size_t tix = 0; tix < test_sets.size(); ++tix)
                row.push_back(dataset_mean_auroc(result.params, test_sets[tix],
                                                 {ic.n_sub, ic.m_sub, ic.ensemble,
                                                  tcd::derive_seed(seed, 0x311u, tix)}));
            auroc_rows.push_back(std::move(row));
        }

        // relative score: 100 (p - 0.5) / (p_best - 0.5), column-wise best
        std::string csv = "train_source";
        for (const auto& name : test_names) csv += "," + name;
        csv += "\n";
        for (std::size_t r = 0; r < train_names.size(); ++r) {
            csv += train_names[r];
            for (std::size_t col = 0; col < test_names.size(); ++col) {
                double best = 0.5;
                for (const auto& row : auroc_rows) best = std::max(best, row[col]);
                csv += "," + fmt17(tcd::relative_auroc(auroc_rows[r][col], best, 0.5));
            }
            csv += "\n";
        }
        tcd::atomic_write(fs::path(out) / "ablation_relative_auroc.csv", csv.data(), csv.size());

        std::string raw = "train_source";
        for (const auto& name : test_names) raw += "," + name;
        raw += "\n";
        for (std::size_t r = 0; r < train_names.size(); ++r) {
            raw += train_names[r];
            for (double v : auroc_rows[r]) raw += "," + fmt17(v);
            raw += "\n";
        }
        tcd::atomic_write(fs::path(out) / "ablation_auroc.csv", raw.data(), raw.size());
        std::cout << "ablation grid -> " << out << "\n";
        return 0;
    }

    throw ConfigError("bench.mode must be complexity, ensemble, input-size or ablation");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"targeted cause discovery toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override, csv_in, svg_out, kind = "line", x_col, title;
    std::vector<std::string> y_cols;
    std::int64_t seed_override = -1;

    const auto add_config_cmd = [&](const char* name, const char* desc) {
        auto* cmd = app.add_subcommand(name, desc);
        cmd->add_option("--config", config_path, "JSON config path")->required();
        cmd->add_option("--seed", seed_override, "override config seed");
        cmd->add_option("--out", out_override, "override config output path");
        return cmd;
    };

    auto* gen_graph = add_config_cmd("gen-graph", "generate a causal graph directory");
    auto* gen_data = add_config_cmd("gen-data", "generate labeled datasets");
    auto* train = add_config_cmd("train", "train a cause-scoring model");
    auto* infer = add_config_cmd("infer", "ensembled local inference for targets");
    auto* eval = add_config_cmd("eval", "score predictions against ground truth");
    auto* bench = add_config_cmd("bench", "timing and ablation benchmarks");

    auto* plot = app.add_subcommand("plot", "render a CSV as a static SVG");
    plot->add_option("--csv", csv_in, "input CSV")->required();
    plot->add_option("--out", svg_out, "output SVG")->required();
    plot->add_option("--kind", kind, "line, bar or heatmap");
    plot->add_option("--x", x_col, "x column name");
    plot->add_option("--y", y_cols, "y column names");
    plot->add_option("--title", title, "plot title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (plot->parsed()) {
            tcd::plot_csv(csv_in, svg_out, tcd::plot_kind_from_string(kind), x_col, y_cols,
                          title);
            std::cout << "svg -> " << svg_out << "\n";
            return 0;
        }
        json cfg = load_config(config_path);
        if (seed_override >= 0) cfg["seed"] = static_cast<std::uint64_t>(seed_override);
        if (!out_override.empty()) cfg["out"] = out_override;
        if (gen_graph->parsed()) return cmd_gen_graph(cfg);
        if (gen_data->parsed()) return cmd_gen_data(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (infer->parsed()) return cmd_infer(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (bench->parsed()) return cmd_bench(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
