#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfa/adam_pso.hpp"
#include "lfa/errors.hpp"
#include "lfa/gradient.hpp"
#include "lfa/model.hpp"
#include "lfa/pso.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"
#include "lfa/refine.hpp"
#include "lfa/synth.hpp"

namespace lfa {

enum class Model {
    SgdLfa,
    AdamLfa,
    SgdMpso,
    SgdAdhpl,
    AdamMpso,
    AdamAdhpl,
};

inline const char* model_name(Model m) {
    switch (m) {
        case Model::SgdLfa: return "sgd-lfa";
        case Model::AdamLfa: return "adam-lfa";
        case Model::SgdMpso: return "sgd-mpso";
        case Model::SgdAdhpl: return "sgd-adhpl";
        case Model::AdamMpso: return "adam-mpso";
        case Model::AdamAdhpl: return "adam-adhpl";
    }
    throw ConfigError("model_name: unknown model");
}

/// Accepts the canonical names case-insensitively, with '+' as an alias for
/// '-' (e.g. "SGD+ADHPL" and "sgd-adhpl" both parse).
inline Model parse_model(const std::string& name) {
    std::string s;
    s.reserve(name.size());
    for (char ch : name)
        s.push_back(ch == '+' ? '-'
                              : char(std::tolower(static_cast<unsigned char>(ch))));
    for (Model m : {Model::SgdLfa, Model::AdamLfa, Model::SgdMpso,
                    Model::SgdAdhpl, Model::AdamMpso, Model::AdamAdhpl})
        if (s == model_name(m)) return m;
    throw ConfigError("unknown model '" + name +
                      "' (expected one of sgd-lfa, adam-lfa, sgd-mpso, "
                      "sgd-adhpl, adam-mpso, adam-adhpl)");
}

inline TrainMethod model_pretrain_method(Model m) {
    switch (m) {
        case Model::SgdLfa:
        case Model::SgdMpso:
        case Model::SgdAdhpl: return TrainMethod::Sgd;
        default: return TrainMethod::Adam;
    }
}

enum class RefineKind { None, Mpso, Adhpl };

inline RefineKind model_refine_kind(Model m) {
    switch (m) {
        case Model::SgdLfa:
        case Model::AdamLfa: return RefineKind::None;
        case Model::SgdMpso:
        case Model::AdamMpso: return RefineKind::Mpso;
        default: return RefineKind::Adhpl;
    }
}

/// Everything one experiment needs: data source, split, model selection,
/// per-stage configuration, seed, and output location. Mirrors the JSON
/// config file field-for-field.
struct ExperimentConfig {
    std::string data_file;           ///< rating file path; empty when synthetic
    std::optional<SynthSpec> synth;  ///< synthetic source; exactly one of the two
    Fractions fractions;
    Model model = Model::SgdAdhpl;
    Hyper hyper;
    AdamConfig adam;           ///< per-parameter Adam pre-trainer
    StoppingRule pretrain;
    PsoConfig pso;             ///< classical refiner
    AdamSwarmConfig adam_swarm;  ///< Adam-driven refiner
    RefineBudget refine;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir;  ///< empty disables file output

    void validate() const {
        if (data_file.empty() == !synth.has_value())
            throw ConfigError(
                "config: exactly one of data_file and synth must be set");
        if (synth) synth->validate();
        hyper.validate();
        adam.validate();
        pretrain.validate();
        pso.validate();
        adam_swarm.validate();
        refine.validate();
        if (threads < 1) throw ConfigError("config: threads must be >= 1");
    }
};

// --- JSON mirroring --------------------------------------------------------

inline void to_json(nlohmann::json& j, const Fractions& f) {
    j = {{"train", f.train}, {"validation", f.validation}, {"test", f.test}};
}
inline void from_json(const nlohmann::json& j, Fractions& f) {
    f.train = j.value("train", f.train);
    f.validation = j.value("validation", f.validation);
    f.test = j.value("test", f.test);
}

inline void to_json(nlohmann::json& j, const Hyper& h) {
    j = {{"lambda", h.lambda},
         {"eta", h.eta},
         {"f", h.f},
         {"init_range", h.init_range}};
}
inline void from_json(const nlohmann::json& j, Hyper& h) {
    h.lambda = j.value("lambda", h.lambda);
    h.eta = j.value("eta", h.eta);
    h.f = j.value("f", h.f);
    h.init_range = j.value("init_range", h.init_range);
}

inline void to_json(nlohmann::json& j, const AdamConfig& a) {
    j = {{"beta1", a.beta1},
         {"beta2", a.beta2},
         {"alpha", a.alpha},
         {"psi", a.psi},
         {"power_correction", a.power_correction}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& a) {
    a.beta1 = j.value("beta1", a.beta1);
    a.beta2 = j.value("beta2", a.beta2);
    a.alpha = j.value("alpha", a.alpha);
    a.psi = j.value("psi", a.psi);
    a.power_correction = j.value("power_correction", a.power_correction);
}

inline void to_json(nlohmann::json& j, const StoppingRule& s) {
    j = {{"max_epochs", s.max_epochs},
         {"patience", s.patience},
         {"min_delta", s.min_delta}};
}
inline void from_json(const nlohmann::json& j, StoppingRule& s) {
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.patience = j.value("patience", s.patience);
    s.min_delta = j.value("min_delta", s.min_delta);
}

inline void to_json(nlohmann::json& j, const PsoConfig& p) {
    j = {{"omega", p.omega},
         {"gamma1", p.gamma1},
         {"gamma2", p.gamma2},
         {"swarm_size", p.swarm_size},
         {"iters", p.iters},
         {"init_radius", p.init_radius},
         {"per_dimension_draws", p.per_dimension_draws}};
}
inline void from_json(const nlohmann::json& j, PsoConfig& p) {
    p.omega = j.value("omega", p.omega);
    p.gamma1 = j.value("gamma1", p.gamma1);
    p.gamma2 = j.value("gamma2", p.gamma2);
    p.swarm_size = j.value("swarm_size", p.swarm_size);
    p.iters = j.value("iters", p.iters);
    p.init_radius = j.value("init_radius", p.init_radius);
    p.per_dimension_draws = j.value("per_dimension_draws", p.per_dimension_draws);
}

inline void to_json(nlohmann::json& j, const AdamSwarmConfig& a) {
    j = {{"swarm_size", a.swarm_size},
         {"iters", a.iters},
         {"init_radius", a.init_radius},
         {"adam", a.adam}};
}
inline void from_json(const nlohmann::json& j, AdamSwarmConfig& a) {
    a.swarm_size = j.value("swarm_size", a.swarm_size);
    a.iters = j.value("iters", a.iters);
    a.init_radius = j.value("init_radius", a.init_radius);
    if (j.contains("adam")) j.at("adam").get_to(a.adam);
}

inline void to_json(nlohmann::json& j, const RefineBudget& r) {
    j = {{"max_passes", r.max_passes},
         {"patience", r.patience},
         {"min_delta", r.min_delta}};
}
inline void from_json(const nlohmann::json& j, RefineBudget& r) {
    r.max_passes = j.value("max_passes", r.max_passes);
    r.patience = j.value("patience", r.patience);
    r.min_delta = j.value("min_delta", r.min_delta);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"data_file", c.data_file},
         {"synth", nullptr},
         {"fractions", c.fractions},
         {"model", model_name(c.model)},
         {"hyper", c.hyper},
         {"adam", c.adam},
         {"pretrain", c.pretrain},
         {"pso", c.pso},
         {"adam_swarm", c.adam_swarm},
         {"refine", c.refine},
         {"seed", c.seed},
         {"threads", c.threads},
         {"out_dir", c.out_dir}};
    if (c.synth) j["synth"] = *c.synth;
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.data_file = j.value("data_file", c.data_file);
    if (j.contains("synth") && !j.at("synth").is_null())
        c.synth = j.at("synth").get<SynthSpec>();
    if (j.contains("fractions")) j.at("fractions").get_to(c.fractions);
    if (j.contains("model")) c.model = parse_model(j.at("model").get<std::string>());
    if (j.contains("hyper")) j.at("hyper").get_to(c.hyper);
    if (j.contains("adam")) j.at("adam").get_to(c.adam);
    if (j.contains("pretrain")) j.at("pretrain").get_to(c.pretrain);
    if (j.contains("pso")) j.at("pso").get_to(c.pso);
    if (j.contains("adam_swarm")) j.at("adam_swarm").get_to(c.adam_swarm);
    if (j.contains("refine")) j.at("refine").get_to(c.refine);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.out_dir = j.value("out_dir", c.out_dir);
}

namespace detail {

/// Rejects unrecognized keys so config typos fail loudly instead of being
/// silently ignored.
inline void check_config_keys(const nlohmann::json& j) {
    static const std::vector<std::string> root_keys = {
        "data_file", "synth",      "fractions", "model",   "hyper",
        "adam",      "pretrain",   "pso",       "adam_swarm", "refine",
        "seed",      "threads",    "out_dir"};
    static const std::vector<std::string> synth_keys = {
        "n_rows", "n_cols", "rank", "density", "noise_sigma", "clip", "seed"};
    static const std::vector<std::string> fractions_keys = {"train",
                                                            "validation",
                                                            "test"};
    static const std::vector<std::string> hyper_keys = {"lambda", "eta", "f",
                                                        "init_range"};
    static const std::vector<std::string> adam_keys = {
        "beta1", "beta2", "alpha", "psi", "power_correction"};
    static const std::vector<std::string> stop_keys = {"max_epochs",
                                                       "patience",
                                                       "min_delta"};
    static const std::vector<std::string> pso_keys = {
        "omega",      "gamma1", "gamma2",      "swarm_size",
        "iters",      "init_radius", "per_dimension_draws"};
    static const std::vector<std::string> adam_swarm_keys = {
        "swarm_size", "iters", "init_radius", "adam"};
    static const std::vector<std::string> refine_keys = {"max_passes",
                                                         "patience",
                                                         "min_delta"};

    const auto check = [](const nlohmann::json& obj, const std::string& path,
                          const std::vector<std::string>& allowed) {
        if (!obj.is_object())
            throw ConfigError("config: " + path + " must be an object");
        for (const auto& item : obj.items())
            if (std::find(allowed.begin(), allowed.end(), item.key()) ==
                allowed.end())
                throw ConfigError("config: unknown key '" + path + item.key() +
                                  "'");
    };

    check(j, "", root_keys);
    if (j.contains("synth") && !j.at("synth").is_null())
        check(j.at("synth"), "synth.", synth_keys);
    if (j.contains("fractions"))
        check(j.at("fractions"), "fractions.", fractions_keys);
    if (j.contains("hyper")) check(j.at("hyper"), "hyper.", hyper_keys);
    if (j.contains("adam")) check(j.at("adam"), "adam.", adam_keys);
    if (j.contains("pretrain")) check(j.at("pretrain"), "pretrain.", stop_keys);
    if (j.contains("pso")) check(j.at("pso"), "pso.", pso_keys);
    if (j.contains("adam_swarm")) {
        check(j.at("adam_swarm"), "adam_swarm.", adam_swarm_keys);
        if (j.at("adam_swarm").contains("adam"))
            check(j.at("adam_swarm").at("adam"), "adam_swarm.adam.", adam_keys);
    }
    if (j.contains("refine")) check(j.at("refine"), "refine.", refine_keys);
}

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parses a config file, rejecting malformed JSON and unknown keys; missing
/// keys keep their defaults.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    detail::check_config_keys(j);
    ExperimentConfig cfg = j.get<ExperimentConfig>();
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    return parse_config(j);
}

// --- reports ---------------------------------------------------------------

struct PhaseTimings {
    double load_s = 0.0;
    double pretrain_s = 0.0;
    double refine_s = 0.0;
    double eval_s = 0.0;

    friend bool operator==(const PhaseTimings&, const PhaseTimings&) = default;
};

inline void to_json(nlohmann::json& j, const PhaseTimings& t) {
    j = {{"load_s", t.load_s},
         {"pretrain_s", t.pretrain_s},
         {"refine_s", t.refine_s},
         {"eval_s", t.eval_s}};
}
inline void from_json(const nlohmann::json& j, PhaseTimings& t) {
    t.load_s = j.value("load_s", 0.0);
    t.pretrain_s = j.value("pretrain_s", 0.0);
    t.refine_s = j.value("refine_s", 0.0);
    t.eval_s = j.value("eval_s", 0.0);
}

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
    j = {{"epoch", r.epoch},
         {"train_rmse", r.train_rmse},
         {"val_rmse", r.val_rmse},
         {"seconds", r.seconds}};
}
inline void from_json(const nlohmann::json& j, EpochRecord& r) {
    j.at("epoch").get_to(r.epoch);
    j.at("train_rmse").get_to(r.train_rmse);
    j.at("val_rmse").get_to(r.val_rmse);
    r.seconds = j.value("seconds", 0.0);
}

inline void to_json(nlohmann::json& j, const PassRecord& r) {
    j = {{"pass", r.pass},
         {"train_rmse", r.train_rmse},
         {"val_rmse", r.val_rmse},
         {"seconds", r.seconds}};
}
inline void from_json(const nlohmann::json& j, PassRecord& r) {
    j.at("pass").get_to(r.pass);
    j.at("train_rmse").get_to(r.train_rmse);
    j.at("val_rmse").get_to(r.val_rmse);
    r.seconds = j.value("seconds", 0.0);
}

inline bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.train_rmse == b.train_rmse &&
           a.val_rmse == b.val_rmse && a.seconds == b.seconds;
}
inline bool operator==(const PassRecord& a, const PassRecord& b) {
    return a.pass == b.pass && a.train_rmse == b.train_rmse &&
           a.val_rmse == b.val_rmse && a.seconds == b.seconds;
}

/// Full record of one experiment: configuration snapshot, training
/// histories, headline metrics, and phase timings.
struct EvalReport {
    int schema_version = 1;
    std::string model;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::vector<EpochRecord> pretrain_history;
    std::vector<PassRecord> refine_history;
    double best_val_rmse = 0.0;
    double test_rmse = 0.0;
    PhaseTimings timings;
    std::string state_file;  ///< best-state snapshot path; empty if not written

    friend bool operator==(const EvalReport& a, const EvalReport& b) {
        return a.schema_version == b.schema_version && a.model == b.model &&
               a.seed == b.seed && a.config == b.config &&
               a.pretrain_history == b.pretrain_history &&
               a.refine_history == b.refine_history &&
               a.best_val_rmse == b.best_val_rmse &&
               a.test_rmse == b.test_rmse && a.timings == b.timings &&
               a.state_file == b.state_file;
    }
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = {{"schema_version", r.schema_version},
         {"model", r.model},
         {"seed", r.seed},
         {"config", r.config},
         {"pretrain_history", r.pretrain_history},
         {"refine_history", r.refine_history},
         {"best_val_rmse", r.best_val_rmse},
         {"test_rmse", r.test_rmse},
         {"timings", r.timings},
         {"state_file", r.state_file}};
}
inline void from_json(const nlohmann::json& j, EvalReport& r) {
    j.at("schema_version").get_to(r.schema_version);
    j.at("model").get_to(r.model);
    j.at("seed").get_to(r.seed);
    r.config = j.at("config");
    r.pretrain_history =
        j.at("pretrain_history").get<std::vector<EpochRecord>>();
    r.refine_history = j.at("refine_history").get<std::vector<PassRecord>>();
    j.at("best_val_rmse").get_to(r.best_val_rmse);
    j.at("test_rmse").get_to(r.test_rmse);
    j.at("timings").get_to(r.timings);
    j.at("state_file").get_to(r.state_file);
}

struct ReportPaths {
    std::string report_json;
    std::string history_tsv;
    std::string summary_txt;
    std::string state_bin;
};

inline std::string report_stem(const std::string& model, std::uint64_t seed) {
    return model + "_seed" + std::to_string(seed);
}

inline ReportPaths report_paths(const std::string& dir,
                                const std::string& model,
                                std::uint64_t seed) {
    const std::string base =
        (std::filesystem::path(dir) / report_stem(model, seed)).string();
    return {base + "_report.json", base + "_history.tsv",
            base + "_summary.txt", base + "_state.bin"};
}

/// The per-step history as a plot-ready TSV. Deliberately excludes the
/// wall-clock column so that reruns with one seed are byte-identical; the
/// timings live in the JSON report.
inline void write_history_tsv(const EvalReport& r, std::ostream& os) {
    os << "# phase\tstep\ttrain_rmse\tval_rmse\n";
    for (const EpochRecord& e : r.pretrain_history)
        os << "pretrain\t" << e.epoch << '\t' << detail::fmt_g17(e.train_rmse)
           << '\t' << detail::fmt_g17(e.val_rmse) << '\n';
    for (const PassRecord& p : r.refine_history)
        os << "refine\t" << p.pass << '\t' << detail::fmt_g17(p.train_rmse)
           << '\t' << detail::fmt_g17(p.val_rmse) << '\n';
}

inline void write_summary(const EvalReport& r, std::ostream& os) {
    os << "model          " << r.model << '\n'
       << "seed           " << r.seed << '\n'
       << "pretrain       " << r.pretrain_history.size() << " epochs\n"
       << "refine         " << r.refine_history.size() << " passes\n"
       << "best val RMSE  " << detail::fmt_g17(r.best_val_rmse) << '\n'
       << "test RMSE      " << detail::fmt_g17(r.test_rmse) << '\n'
       << "time (s)       load " << r.timings.load_s << ", pretrain "
       << r.timings.pretrain_s << ", refine " << r.timings.refine_s
       << ", eval " << r.timings.eval_s << '\n';
    if (!r.state_file.empty()) os << "state snapshot " << r.state_file << '\n';
}

/// Writes the JSON report, history TSV, and human-readable summary into
/// `dir` (created if missing). Filenames embed the model id and seed.
inline ReportPaths emit_report(const EvalReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const ReportPaths paths = report_paths(dir, r.model, r.seed);
    {
        std::ofstream os(paths.report_json);
        if (!os) throw IoError("cannot write " + paths.report_json);
        os << nlohmann::json(r).dump(2) << '\n';
    }
    {
        std::ofstream os(paths.history_tsv, std::ios::binary);
        if (!os) throw IoError("cannot write " + paths.history_tsv);
        write_history_tsv(r, os);
    }
    {
        std::ofstream os(paths.summary_txt);
        if (!os) throw IoError("cannot write " + paths.summary_txt);
        write_summary(r, os);
    }
    return paths;
}

// --- orchestration ---------------------------------------------------------

struct RunResult {
    EvalReport report;
    LatentState best_state;
    DataSplit split;
};

/// Runs one experiment end to end: load or synthesize, split, initialize,
/// pre-train, optionally refine, then score the best-validation snapshot on
/// the test split (computed exactly once). Deterministic per seed with
/// threads = 1; report files are written only when out_dir is set.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto elapsed = [](clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    EvalReport report;
    report.model = model_name(cfg.model);
    report.seed = cfg.seed;
    report.config = cfg;

    auto t0 = clock::now();
    HdiMatrix matrix = cfg.synth ? synth_lowrank(*cfg.synth).matrix
                                 : load_ratings_file(cfg.data_file).matrix;
    const SeedFanout fan{cfg.seed};
    DataSplit split =
        lfa::split(matrix, cfg.fractions, fan.derive(seed_stream_split));
    report.timings.load_s = elapsed(t0);

    t0 = clock::now();
    LatentState init = init_state(matrix.n_rows(), matrix.n_cols(),
                                  cfg.hyper.f, cfg.hyper.init_range,
                                  fan.derive(seed_stream_init));
    PretrainResult pre =
        pretrain(std::move(init), split, model_pretrain_method(cfg.model),
                 cfg.hyper, cfg.adam, cfg.pretrain, cfg.seed);
    report.pretrain_history = pre.history;
    report.timings.pretrain_s = elapsed(t0);

    LatentState best = std::move(pre.state);
    double best_val = pre.best_val_rmse;

    const RefineKind kind = model_refine_kind(cfg.model);
    if (kind != RefineKind::None) {
        t0 = clock::now();
        RefineResult ref =
            kind == RefineKind::Mpso
                ? mpso_refine(best, split, cfg.pso, cfg.hyper.lambda,
                              cfg.refine, cfg.seed, cfg.threads)
                : adhpl_refine(best, split, cfg.adam_swarm, cfg.hyper.lambda,
                               cfg.refine, cfg.seed, cfg.threads);
        report.refine_history = ref.history;
        best = std::move(ref.state);
        best_val = ref.best_val_rmse;
        report.timings.refine_s = elapsed(t0);
    }
    report.best_val_rmse = best_val;

    t0 = clock::now();
    if (split.test.size() == 0) throw EvalError("run: test split is empty");
    report.test_rmse = rmse(best, split.test);
    report.timings.eval_s = elapsed(t0);

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        report.state_file =
            report_paths(cfg.out_dir, report.model, report.seed).state_bin;
        save_state_file(best, report.state_file);
        emit_report(report, cfg.out_dir);
    }
    return {std::move(report), std::move(best), std::move(split)};
}

}  // namespace lfa
