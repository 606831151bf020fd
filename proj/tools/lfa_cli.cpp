// Command-line front end: run one experiment, compare several, or emit a
// synthetic dataset.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lfa/lfa.hpp"

namespace {

using nlohmann::json;

struct GlobalOverrides {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir;
    bool has_seed = false, has_threads = false, has_out_dir = false;
    std::vector<std::string> sets;  // key.path=value patches
};

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw lfa::IoError("cannot open config file: " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw lfa::ConfigError("config file " + path + ": " + e.what());
    }
}

// Applies a "dotted.path=value" patch; the value is parsed as JSON when
// possible and taken as a raw string otherwise.
void apply_set(json& j, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos || eq == 0)
        throw lfa::ConfigError("--set expects key.path=value, got '" + expr +
                               "'");
    std::string pointer = "/" + expr.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const std::string raw = expr.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    j[json::json_pointer(pointer)] = value;
}

lfa::ExperimentConfig config_from_file(const std::string& path,
                                       const GlobalOverrides& g) {
    json j = load_json_file(path);
    for (const std::string& expr : g.sets) apply_set(j, expr);
    if (g.has_seed) j["seed"] = g.seed;
    if (g.has_threads) j["threads"] = g.threads;
    if (g.has_out_dir) j["out_dir"] = g.out_dir;
    return lfa::parse_config(j);
}

std::string dataset_label(const lfa::ExperimentConfig& cfg) {
    if (!cfg.data_file.empty())
        return std::filesystem::path(cfg.data_file).stem().string();
    const lfa::SynthSpec& s = *cfg.synth;
    return "synth" + std::to_string(s.n_rows) + "x" + std::to_string(s.n_cols) +
           "r" + std::to_string(s.rank) + "s" + std::to_string(s.seed);
}

std::string dataset_key(const lfa::ExperimentConfig& cfg) {
    if (!cfg.data_file.empty()) return "file:" + cfg.data_file;
    return "synth:" + json(*cfg.synth).dump();
}

int cmd_run(const std::string& config_path, const GlobalOverrides& g) {
    const lfa::ExperimentConfig cfg = config_from_file(config_path, g);
    const lfa::RunResult result = lfa::run_experiment(cfg);
    const lfa::EvalReport& r = result.report;
    std::printf("%s seed %llu: best val RMSE %.6f, test RMSE %.6f "
                "(%zu epochs, %zu passes)\n",
                r.model.c_str(), static_cast<unsigned long long>(r.seed),
                r.best_val_rmse, r.test_rmse, r.pretrain_history.size(),
                r.refine_history.size());
    if (!cfg.out_dir.empty()) {
        const lfa::ReportPaths paths =
            lfa::report_paths(cfg.out_dir, r.model, r.seed);
        std::printf("report: %s\n", paths.report_json.c_str());
    }
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::string& reference_name, const GlobalOverrides& g) {
    std::vector<std::string> models, dataset_keys, dataset_labels;
    struct Cell {
        int model = 0, dataset = 0;
        double rmse = 0.0;
    };
    std::vector<Cell> cells;

    for (const std::string& path : config_paths) {
        const lfa::ExperimentConfig cfg = config_from_file(path, g);
        const std::string model = lfa::model_name(cfg.model);
        const std::string key = dataset_key(cfg);

        int mi = int(std::find(models.begin(), models.end(), model) -
                     models.begin());
        if (mi == int(models.size())) models.push_back(model);
        int di = int(std::find(dataset_keys.begin(), dataset_keys.end(), key) -
                     dataset_keys.begin());
        if (di == int(dataset_keys.size())) {
            dataset_keys.push_back(key);
            dataset_labels.push_back(dataset_label(cfg));
        }
        for (const Cell& c : cells)
            if (c.model == mi && c.dataset == di)
                throw lfa::ConfigError("compare: duplicate model/dataset pair " +
                                       model + " on " + dataset_labels[size_t(di)]);

        std::fprintf(stderr, "running %s on %s (%s)...\n", model.c_str(),
                     dataset_labels[std::size_t(di)].c_str(), path.c_str());
        const lfa::RunResult run = lfa::run_experiment(cfg);
        cells.push_back({mi, di, run.report.test_rmse});
    }

    const std::size_t n_models = models.size();
    const std::size_t n_datasets = dataset_keys.size();
    std::vector<std::vector<double>> table(
        n_models, std::vector<double>(n_datasets,
                                      std::numeric_limits<double>::quiet_NaN()));
    for (const Cell& c : cells)
        table[std::size_t(c.model)][std::size_t(c.dataset)] = c.rmse;
    for (std::size_t m = 0; m < n_models; ++m)
        for (std::size_t d = 0; d < n_datasets; ++d)
            if (std::isnan(table[m][d]))
                throw lfa::ConfigError("compare: no run for model " +
                                       models[m] + " on dataset " +
                                       dataset_labels[d]);

    int reference = int(n_models) - 1;
    if (!reference_name.empty()) {
        const auto it = std::find(models.begin(), models.end(),
                                  lfa::model_name(lfa::parse_model(reference_name)));
        if (it == models.end())
            throw lfa::ConfigError("compare: reference model '" +
                                   reference_name + "' has no runs");
        reference = int(it - models.begin());
    }
    const lfa::RankSummary ranks = lfa::friedman_rank(table, reference);

    int name_w = 10;
    for (const std::string& m : models) name_w = std::max(name_w, int(m.size()));
    std::printf("%-*s", name_w, "model");
    for (const std::string& d : dataset_labels) std::printf("  %12s", d.c_str());
    std::printf("  %8s  %s\n", "F-rank", "Win/Loss");
    for (std::size_t m = 0; m < n_models; ++m) {
        std::printf("%-*s", name_w, models[m].c_str());
        for (std::size_t d = 0; d < n_datasets; ++d)
            std::printf("  %12.4f", table[m][d]);
        std::printf("  %8.4g", ranks.avg_rank[m]);
        if (int(m) == reference)
            std::printf("  --\n");
        else
            std::printf("  %d/%d\n", ranks.wins[m], ranks.losses[m]);
    }
    std::printf("(win/loss: datasets where reference %s does no worse / "
                "strictly worse)\n",
                models[std::size_t(reference)].c_str());

    if (g.has_out_dir) {
        std::filesystem::create_directories(g.out_dir);
        json out = {{"schema_version", 1},
                    {"models", models},
                    {"datasets", dataset_labels},
                    {"rmse", table},
                    {"f_rank", ranks.avg_rank},
                    {"wins", ranks.wins},
                    {"losses", ranks.losses},
                    {"reference", models[std::size_t(reference)]}};
        const std::string path =
            (std::filesystem::path(g.out_dir) / "compare.json").string();
        std::ofstream os(path);
        if (!os) throw lfa::IoError("cannot write " + path);
        os << out.dump(2) << '\n';
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

int cmd_synth(const lfa::SynthSpec& spec, const std::string& out_path) {
    const lfa::SynthResult result = lfa::synth_lowrank(spec);
    {
        std::ofstream os(out_path);
        if (!os) throw lfa::IoError("cannot write " + out_path);
        lfa::write_ratings(result.matrix, os);
    }
    const std::string spec_path = out_path + ".spec.json";
    {
        std::ofstream os(spec_path);
        if (!os) throw lfa::IoError("cannot write " + spec_path);
        os << json(spec).dump(2) << '\n';
    }
    std::printf("wrote %zu entries (%dx%d, rank %d) to %s\n",
                result.matrix.size(), spec.n_rows, spec.n_cols, spec.rank,
                out_path.c_str());
    std::printf("generator spec: %s\n", spec_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent factor analysis with swarm-refined factors"};
    app.require_subcommand(1);

    GlobalOverrides g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Override the master seed");
    auto* threads_opt =
        app.add_option("--threads", g.threads, "Override the thread count");
    auto* out_dir_opt =
        app.add_option("--out-dir", g.out_dir, "Override the output directory");

    auto* run = app.add_subcommand("run", "Run one experiment from a config file");
    run->fallthrough();
    std::string run_config;
    run->add_option("config", run_config, "JSON experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--set", g.sets,
                    "Override any config field as key.path=value "
                    "(e.g. --set hyper.eta=0.02)");

    auto* compare = app.add_subcommand(
        "compare", "Run several configs and print a combined RMSE/rank table");
    compare->fallthrough();
    std::vector<std::string> compare_configs;
    std::string reference_name;
    compare->add_option("configs", compare_configs, "JSON experiment configs")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--reference", reference_name,
                        "Win/loss reference model (default: last listed)");
    compare->add_option("--set", g.sets,
                        "Override any config field in every run");

    auto* synth = app.add_subcommand("synth", "Write a synthetic rating file");
    synth->fallthrough();
    lfa::SynthSpec spec;
    std::string synth_out = "synth.tsv";
    std::vector<double> clip_vals;
    synth->add_option("--rows", spec.n_rows, "Row entity count");
    synth->add_option("--cols", spec.n_cols, "Column entity count");
    synth->add_option("--rank", spec.rank, "Hidden factor rank");
    synth->add_option("--density", spec.density, "Fraction of known cells");
    synth->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma");
    synth->add_option("--clip", clip_vals, "Clamp values to [LO, HI]")
        ->expected(2);
    synth->add_option("--out", synth_out, "Output rating file");

    CLI11_PARSE(app, argc, argv);
    g.has_seed = seed_opt->count() > 0;
    g.has_threads = threads_opt->count() > 0;
    g.has_out_dir = out_dir_opt->count() > 0;

    try {
        if (run->parsed()) return cmd_run(run_config, g);
        if (compare->parsed()) return cmd_compare(compare_configs, reference_name, g);
        if (synth->parsed()) {
            if (g.has_seed) spec.seed = g.seed;
            if (!clip_vals.empty()) spec.clip = {clip_vals[0], clip_vals[1]};
            spec.validate();
            if (g.has_out_dir)
                synth_out = (std::filesystem::path(g.out_dir) / synth_out).string();
            return cmd_synth(spec, synth_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
