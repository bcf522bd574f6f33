#include "clclsa/cli.hpp"

#include "clclsa/checkpoint.hpp"
#include "clclsa/data.hpp"
#include "clclsa/errors.hpp"
#include "clclsa/experiments.hpp"
#include "clclsa/report.hpp"
#include "clclsa/rng.hpp"
#include "clclsa/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace clclsa::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Bad input from the command line or config file; exit code 1.
class UsageError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

const std::vector<std::string> kCommands{"synth", "mask",   "train",  "eval",
                                         "sweep", "grid",   "ablate", "surface"};

bool stochastic(const std::string& command) { return command != "eval"; }

json model_section() {
    return json{{"preset", ""},           {"embed_dim", 32},  {"ae_hidden", {32, 16}},
                {"dropout_p", 0.5},       {"bn_momentum", 0.1}, {"bn_eps", 1e-5},
                {"completion", "cross_view"}};
}

json train_section() {
    json j = TrainConfig{};
    j.erase("seed"); // the top-level seed drives every stream
    return j;
}

json synth_section() {
    const SyntheticSpec s;
    return json{{"n", s.n},
                {"views", s.dims.size()},
                {"dim", s.dims.front()},
                {"dims", json::array()},
                {"classes", s.num_classes},
                {"signal_dim", s.signal_dim},
                {"snr", s.snr},
                {"separation", s.separation},
                {"view_signal", json::array()},
                {"split", 0.0}};
}

json experiment_section() {
    return json{{"dataset", ""},
                {"etas", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}},
                {"seeds", 1},
                {"train_fraction", 0.7},
                {"mask_test", true},
                {"policy", "uniform"},
                {"baseline", "none"},
                {"views", json::array()}};
}

json report_section() { return json{{"path", ""}, {"format", "csv"}}; }

void apply_preset(json& model) {
    const std::string name = model.at("preset").get<std::string>();
    if (name.empty()) return;
    ModelConfig p;
    try {
        p = preset_config(name);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    model["embed_dim"] = p.latent_dim();
    model["ae_hidden"] = p.ae_hidden;
    model["dropout_p"] = p.dropout_p;
}

json::json_pointer pointer_of(std::string dotted) {
    std::replace(dotted.begin(), dotted.end(), '.', '/');
    return json::json_pointer("/" + dotted);
}

std::string text_of(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::string get_str(const json& c, const char* key) { return c.at(key).get<std::string>(); }

std::uint64_t seed_of(const json& config) { return config.at("seed").get<std::uint64_t>(); }

std::vector<std::uint64_t> seed_list(const json& config) {
    const std::uint64_t base = seed_of(config);
    const auto count = config.at("experiment").at("seeds").get<std::size_t>();
    if (count == 0) throw UsageError("experiment.seeds must be at least 1");
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < count; ++k) seeds.push_back(base + k);
    return seeds;
}

// ---------------------------------------------------------------------------
// Config → library types

ModelConfig model_template(const json& m) {
    ModelConfig cfg;
    const std::string preset = get_str(m, "preset");
    if (!preset.empty()) cfg = preset_config(preset);
    const auto d = m.at("embed_dim").get<std::size_t>();
    cfg.embed_dims.assign(std::max<std::size_t>(cfg.input_dims.size(), 1), d);
    const auto hidden = m.at("ae_hidden").get<std::vector<std::size_t>>();
    if (hidden.size() != 2) throw UsageError("model.ae_hidden needs exactly two sizes");
    cfg.ae_hidden = {hidden[0], hidden[1]};
    cfg.dropout_p = m.at("dropout_p").get<double>();
    cfg.bn_momentum = m.at("bn_momentum").get<double>();
    cfg.bn_eps = m.at("bn_eps").get<double>();
    const std::string completion = get_str(m, "completion");
    if (completion == "cross_view") {
        cfg.completion = CompletionMode::CrossView;
    } else if (completion == "zero_fill") {
        cfg.completion = CompletionMode::ZeroFill;
    } else {
        throw UsageError("model.completion must be cross_view or zero_fill");
    }
    return cfg;
}

TrainConfig train_config(const json& config) {
    TrainConfig cfg;
    try {
        cfg = config.at("train").get<TrainConfig>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("train section: ") + e.what());
    }
    cfg.seed = seed_of(config);
    cfg.validate();
    return cfg;
}

SyntheticSpec synth_spec(const json& s, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n = s.at("n").get<std::size_t>();
    auto dims = s.at("dims").get<std::vector<std::size_t>>();
    if (dims.empty()) dims.assign(s.at("views").get<std::size_t>(), s.at("dim").get<std::size_t>());
    spec.dims = dims;
    spec.num_classes = s.at("classes").get<std::size_t>();
    spec.signal_dim = s.at("signal_dim").get<std::size_t>();
    spec.snr = s.at("snr").get<double>();
    spec.separation = s.at("separation").get<double>();
    spec.view_signal = s.at("view_signal").get<std::vector<double>>();
    spec.seed = seed;
    spec.validate();
    return spec;
}

ExperimentSetup experiment_setup(const json& config, const MultiOmicsDataset& ds,
                                 const std::string& dataset_name) {
    const json& e = config.at("experiment");
    ExperimentSetup s;
    s.dataset = get_str(e, "dataset").empty() ? dataset_name : get_str(e, "dataset");
    s.model = model_template(config.at("model"));
    if (!s.model.input_dims.empty()) adapt_config(s.model, ds); // shape check up front
    s.train = train_config(config);
    s.train_fraction = e.at("train_fraction").get<double>();
    s.mask_test = e.at("mask_test").get<bool>();
    s.policy = MissingPolicy::parse(get_str(e, "policy"));
    s.threads = config.at("threads").get<std::size_t>();
    const std::string baseline = get_str(e, "baseline");
    if (baseline == "none") {
        s.variant = "clclsa";
    } else if (baseline == "zero_fill") {
        s.variant = "zero_fill";
        s.model.completion = CompletionMode::ZeroFill;
    } else if (baseline == "complete_case") {
        s.variant = "complete_case";
        s.complete_case = true;
    } else {
        throw UsageError("experiment.baseline must be none, zero_fill or complete_case");
    }
    return s;
}

// ---------------------------------------------------------------------------
// Files and manifests

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out) throw IoError("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

json digest_inputs(const std::vector<fs::path>& paths) {
    json inputs = json::object();
    for (const auto& p : paths) {
        if (p.empty()) continue;
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json")
                    files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) inputs[f.string()] = file_digest(f);
        } else {
            inputs[p.string()] = file_digest(p);
        }
    }
    return inputs;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunContext {
    std::string command;
    std::vector<std::string> argv;
    json config;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::string started_at = utc_now();
};

void write_manifest(const RunContext& run, const fs::path& path, const json& seeds,
                    const json& inputs, const std::vector<fs::path>& artifacts) {
    std::vector<std::string> names;
    for (const auto& a : artifacts) names.push_back(a.string());
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
    const json manifest{{"command", run.command},
                        {"argv", run.argv},
                        {"config", run.config},
                        {"seeds", seeds},
                        {"inputs", inputs},
                        {"artifacts", names},
                        {"version", kVersion},
                        {"started_at", run.started_at},
                        {"duration_seconds", seconds}};
    write_text(path, manifest.dump(2) + "\n");
}

fs::path required_path(const json& config, const char* key) {
    const std::string p = get_str(config, key);
    if (p.empty()) throw UsageError(std::string("--") + key + " is required");
    return p;
}

MultiOmicsDataset load_or_generate(const json& config, std::string& name, std::vector<fs::path>& inputs) {
    const std::string data = get_str(config, "data");
    if (!data.empty()) {
        name = fs::path(data).filename().string();
        inputs.push_back(data);
        return load_dataset_dir(data);
    }
    name = "synthetic";
    return synth_generate(synth_spec(config.at("synth"), seed_of(config)));
}

void print_sweep(const std::string& label, const SweepResult& sweep) {
    for (const auto& p : sweep.points) {
        std::size_t failed = 0;
        for (const auto& t : p.trials) {
            if (t.status != "ok") {
                ++failed;
                std::cerr << "trial failed (" << label << ", eta " << p.eta << ", seed "
                          << (t.seed ? std::to_string(*t.seed) : "-") << "): " << t.message << "\n";
            }
        }
        std::printf("%s eta=%.2f acc_mean=%s acc_std=%s failed=%zu\n", label.c_str(), p.eta,
                    p.mean ? std::to_string(p.mean->acc).c_str() : "nan",
                    p.stddev ? std::to_string(p.stddev->acc).c_str() : "nan", failed);
    }
}

bool any_ok(const std::vector<TrialRow>& rows) {
    return std::any_of(rows.begin(), rows.end(), [](const TrialRow& r) { return r.status == "ok"; });
}

void emit_experiment(const RunContext& run, const std::vector<TrialRow>& rows,
                     const std::vector<std::uint64_t>& seeds, const std::vector<fs::path>& inputs) {
    const json& rep = run.config.at("report");
    const fs::path path = required_path(rep, "path");
    emit_report(rows, path, parse_report_format(get_str(rep, "format")));
    write_manifest(run, path.string() + ".run_manifest.json", seeds, digest_inputs(inputs), {path});
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const RunContext& run) {
    const json& c = run.config;
    const fs::path out = required_path(c, "out");
    const SyntheticSpec spec = synth_spec(c.at("synth"), seed_of(c));
    const MultiOmicsDataset ds = synth_generate(spec);
    const json extra{{"seed", spec.seed}, {"synthetic", c.at("synth")}};
    std::vector<fs::path> artifacts;
    const double fraction = c.at("synth").at("split").get<double>();
    if (fraction > 0.0) {
        auto [tr, te] = split(ds, SplitSpec{fraction, spec.seed, true});
        write_dataset(tr, out / "train", extra.dump());
        write_dataset(te, out / "test", extra.dump());
        artifacts = {out / "train", out / "test"};
    } else {
        write_dataset(ds, out, extra.dump());
        artifacts = {out};
    }
    write_manifest(run, out / "run_manifest.json", {spec.seed}, json::object(), artifacts);
    std::printf("wrote %zu subjects to %s\n", ds.num_subjects(), out.string().c_str());
    return kExitOk;
}

int cmd_mask(const RunContext& run) {
    const json& c = run.config;
    const fs::path data = required_path(c, "data");
    const fs::path out = required_path(c, "out");
    const MultiOmicsDataset ds = load_dataset_dir(data);
    MissingnessSpec spec;
    spec.eta = c.at("mask").at("eta").get<double>();
    spec.seed = seed_of(c);
    spec.policy = MissingPolicy::parse(get_str(c.at("mask"), "policy"));
    const MultiOmicsDataset masked = apply_missingness(ds, spec);
    const json extra{{"seed", spec.seed}, {"eta", spec.eta}, {"policy", spec.policy.to_string()}};
    write_dataset(masked, out, extra.dump());
    write_manifest(run, out / "run_manifest.json", {spec.seed}, digest_inputs({data}), {out});
    std::printf("masked %zu of %zu subjects\n", masked.mask.incomplete_count(), masked.num_subjects());
    return kExitOk;
}

int cmd_train(const RunContext& run) {
    const json& c = run.config;
    const fs::path data = required_path(c, "data");
    const fs::path out = required_path(c, "out");
    const std::string val_path = get_str(c, "validation");
    const MultiOmicsDataset ds = load_dataset_dir(data);
    std::optional<MultiOmicsDataset> val;
    if (!val_path.empty()) val = load_dataset_dir(val_path);
    const ModelConfig mc = adapt_config(model_template(c.at("model")), ds);
    const TrainConfig cfg = train_config(c);

    TrainResult r = train(ds, mc, cfg, val ? &*val : nullptr);

    fs::create_directories(out);
    write_text(out / "config.json", c.dump(2) + "\n");
    write_epoch_log_csv(r.logs, out / "epoch_log.csv");
    save_checkpoint(r.model, out / "checkpoint.json");
    write_manifest(run, out / "run_manifest.json", {cfg.seed}, digest_inputs({data, val_path}),
                   {out / "config.json", out / "epoch_log.csv", out / "checkpoint.json"});
    if (r.aborted) {
        std::cerr << "training aborted: " << r.diagnostic << "\n";
        return kExitFailure;
    }
    if (!r.logs.empty()) {
        const EpochLog& last = r.logs.back();
        std::printf("epochs=%zu loss=%.17g train_acc=%.17g\n", r.logs.size(), last.loss.total,
                    last.train_acc);
    }
    return kExitOk;
}

json metrics_json(const MetricsReport& m) {
    json j{{"acc", m.acc},
           {"weighted_f1", m.weighted_f1},
           {"macro_f1", m.macro_f1},
           {"confusion", m.confusion},
           {"n_subjects", m.n_subjects},
           {"dataset", m.dataset},
           {"eta", m.eta},
           {"config_hash", m.config_hash}};
    if (m.f1) j["f1"] = *m.f1;
    if (m.auc) j["auc"] = *m.auc;
    return j;
}

int cmd_eval(const RunContext& run) {
    const json& c = run.config;
    const fs::path ckpt = required_path(c, "checkpoint");
    const fs::path data = required_path(c, "data");
    Model model = load_checkpoint(ckpt);
    const MultiOmicsDataset ds = load_dataset_dir(data);
    MetricsReport m = evaluate(model, ds);
    m.dataset = data.filename().string();
    m.eta = ds.missing_rate();
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(json(model.config()).dump())));
    m.config_hash = hash;
    const std::string text = metrics_json(m).dump(2) + "\n";
    std::cout << text;
    const std::string out = get_str(c, "out");
    if (!out.empty()) {
        write_text(out, text);
        write_manifest(run, out + ".run_manifest.json", json::array(),
                       digest_inputs({ckpt, data}), {fs::path(out)});
    }
    return kExitOk;
}

int cmd_sweep(const RunContext& run) {
    const json& c = run.config;
    std::string name;
    std::vector<fs::path> inputs;
    const MultiOmicsDataset ds = load_or_generate(c, name, inputs);
    const ExperimentSetup setup = experiment_setup(c, ds, name);
    const auto seeds = seed_list(c);
    const auto etas = c.at("experiment").at("etas").get<std::vector<double>>();
    const auto subsets_text = c.at("experiment").at("views").get<std::vector<std::string>>();

    std::vector<TrialRow> rows;
    if (subsets_text.empty()) {
        const SweepResult sweep = missing_rate_sweep(ds, setup, etas, seeds);
        print_sweep(setup.variant, sweep);
        rows = report_rows(sweep);
    } else {
        std::vector<std::vector<std::size_t>> subsets;
        for (const auto& text : subsets_text) {
            std::vector<std::size_t> sub;
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, '+')) {
                try {
                    sub.push_back(std::stoul(item));
                } catch (const std::exception&) {
                    throw UsageError("experiment.views entries look like 0+2, got " + text);
                }
            }
            subsets.push_back(sub);
        }
        for (const auto& r : partial_omics_run(ds, subsets, setup, etas, seeds)) {
            print_sweep(r.sweep.points.front().trials.front().variant, r.sweep);
            const auto part = report_rows(r.sweep);
            rows.insert(rows.end(), part.begin(), part.end());
        }
    }
    emit_experiment(run, rows, seeds, inputs);
    return any_ok(rows) ? kExitOk : kExitFailure;
}

int cmd_grid(const RunContext& run) {
    const json& c = run.config;
    const fs::path data = required_path(c, "data");
    const fs::path out = required_path(c, "out");
    const std::string val_path = get_str(c, "validation");
    const MultiOmicsDataset ds = load_dataset_dir(data);
    std::optional<MultiOmicsDataset> val;
    if (!val_path.empty()) val = load_dataset_dir(val_path);
    const ModelConfig mc = adapt_config(model_template(c.at("model")), ds);
    const TrainConfig base = train_config(c);
    GridSpec grid;
    try {
        grid = c.at("grid").get<GridSpec>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("grid section: ") + e.what());
    }

    const GridResult r = grid_search(ds, val ? &*val : nullptr, mc, grid, base,
                                     c.at("threads").get<std::size_t>());

    fs::create_directories(out);
    write_text(out / "config.json", c.dump(2) + "\n");
    write_grid_summary_csv(r, out / "grid_summary.csv");
    std::vector<fs::path> artifacts{out / "config.json", out / "grid_summary.csv"};
    for (const auto& t : r.trials) {
        if (t.status != "ok") std::cerr << "trial failed: " << t.message << "\n";
    }
    if (r.best) {
        const GridTrial& best = r.trials[*r.best];
        json b{{"weights", best.weights}, {"metric", grid.metric}, {"value", *best.metric}};
        write_text(out / "best.json", b.dump(2) + "\n");
        artifacts.push_back(out / "best.json");
        std::printf("best lambda_al=%g lambda_co=%g lambda_cl=%g %s=%.17g\n", best.weights.lambda_al,
                    best.weights.lambda_co, best.weights.lambda_cl, grid.metric.c_str(), *best.metric);
    }
    write_manifest(run, out / "run_manifest.json", {base.seed}, digest_inputs({data, val_path}),
                   artifacts);
    return r.best ? kExitOk : kExitFailure;
}

int cmd_ablate(const RunContext& run) {
    const json& c = run.config;
    std::string name;
    std::vector<fs::path> inputs;
    const MultiOmicsDataset ds = load_or_generate(c, name, inputs);
    const ExperimentSetup setup = experiment_setup(c, ds, name);
    AblationSpec spec;
    const json& a = c.at("ablation");
    spec.variants = a.at("variants").get<std::vector<std::string>>();
    spec.etas = a.at("etas").get<std::vector<double>>();
    spec.lambda_co = a.at("lambda_co").get<double>();
    spec.seeds = seed_list(c);
    for (const auto& v : spec.variants) ablation_weights(v, setup.train.weights, spec.lambda_co);

    std::vector<TrialRow> rows;
    for (const auto& r : ablation_run(ds, spec, setup)) {
        print_sweep(r.variant, r.sweep);
        const auto part = report_rows(r.sweep);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    emit_experiment(run, rows, spec.seeds, inputs);
    return any_ok(rows) ? kExitOk : kExitFailure;
}

int cmd_surface(const RunContext& run) {
    const json& c = run.config;
    std::string name;
    std::vector<fs::path> inputs;
    const MultiOmicsDataset ds = load_or_generate(c, name, inputs);
    const ExperimentSetup setup = experiment_setup(c, ds, name);
    const json& s = c.at("surface");
    SurfaceSpec spec;
    const std::string fixed = get_str(s, "fixed");
    if (fixed == "al") {
        spec.fixed = Lambda::Al;
    } else if (fixed == "co") {
        spec.fixed = Lambda::Co;
    } else if (fixed == "cl") {
        spec.fixed = Lambda::Cl;
    } else {
        throw UsageError("surface.fixed must be al, co or cl");
    }
    spec.lambda_al = s.at("lambda_al").get<std::vector<double>>();
    spec.lambda_co = s.at("lambda_co").get<std::vector<double>>();
    spec.lambda_cl = s.at("lambda_cl").get<std::vector<double>>();
    spec.eta = s.at("eta").get<double>();
    spec.seeds = seed_list(c);
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }

    const auto rows = hyperparam_surface(ds, spec, setup);
    for (const auto& r : rows) {
        if (r.status != "ok") {
            std::cerr << "trial failed: " << r.message << "\n";
            continue;
        }
        std::printf("lambda_al=%g lambda_co=%g lambda_cl=%g seed=%llu acc=%.6f\n",
                    r.weights.lambda_al, r.weights.lambda_co, r.weights.lambda_cl,
                    static_cast<unsigned long long>(*r.seed), r.metrics->acc);
    }
    emit_experiment(run, rows, spec.seeds, inputs);
    return any_ok(rows) ? kExitOk : kExitFailure;
}

int run_command(const RunContext& run) {
    const std::string& c = run.command;
    if (c == "synth") return cmd_synth(run);
    if (c == "mask") return cmd_mask(run);
    if (c == "train") return cmd_train(run);
    if (c == "eval") return cmd_eval(run);
    if (c == "sweep") return cmd_sweep(run);
    if (c == "grid") return cmd_grid(run);
    if (c == "ablate") return cmd_ablate(run);
    return cmd_surface(run);
}

const std::map<std::string, std::string> kAliases{
    {"n", "synth.n"},         {"views", "synth.views"},   {"classes", "synth.classes"},
    {"eta", "mask.eta"},      {"epochs", "train.epochs"}, {"lr", "train.initial_lr"},
    {"preset", "model.preset"}, {"format", "report.format"}, {"report", "report.path"},
};

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
    if (j.is_object() && !j.empty()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            collect_leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else {
        out.push_back(prefix);
    }
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    // A run manifest can be fed back as a config to re-execute the run.
    if (j.is_object() && j.contains("command") && j.contains("config")) return j.at("config");
    return j;
}

} // namespace

json default_config(const std::string& command) {
    json c;
    if (stochastic(command)) c["seed"] = nullptr;
    if (command == "synth") {
        c["out"] = "";
        c["synth"] = synth_section();
    } else if (command == "mask") {
        c["data"] = "";
        c["out"] = "";
        c["mask"] = json{{"eta", 0.5}, {"policy", "uniform"}};
    } else if (command == "train" || command == "grid") {
        c["threads"] = 1;
        c["data"] = "";
        c["validation"] = "";
        c["out"] = "";
        c["model"] = model_section();
        c["train"] = train_section();
        if (command == "grid") c["grid"] = GridSpec{};
    } else if (command == "eval") {
        c["checkpoint"] = "";
        c["data"] = "";
        c["out"] = "";
    } else if (command == "sweep" || command == "ablate" || command == "surface") {
        c["threads"] = 1;
        c["data"] = "";
        c["synth"] = synth_section();
        c["model"] = model_section();
        c["train"] = train_section();
        c["experiment"] = experiment_section();
        c["report"] = report_section();
        if (command == "ablate") {
            const AblationSpec a;
            c["ablation"] = json{{"variants", a.variants}, {"etas", a.etas}, {"lambda_co", a.lambda_co}};
        }
        if (command == "surface") {
            const SurfaceSpec s;
            c["surface"] = json{{"fixed", "al"},
                                {"lambda_al", s.lambda_al},
                                {"lambda_co", s.lambda_co},
                                {"lambda_cl", s.lambda_cl},
                                {"eta", s.eta}};
        }
    } else {
        throw std::out_of_range("unknown command " + command);
    }
    return c;
}

namespace {

bool compatible(const json& base, const json& value) {
    if (base.is_null()) return value.is_null() || value.is_number_unsigned() ||
                               (value.is_number_integer() && value.get<long long>() >= 0);
    if (base.is_number_unsigned() || base.is_number_integer())
        return value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0);
    if (base.is_number_float()) return value.is_number();
    if (base.is_array()) return value.is_array();
    return base.type() == value.type();
}

void overlay_at(json& base, const json& patch, const std::string& prefix, bool top) {
    if (!patch.is_object()) throw UsageError("config: " + (prefix.empty() ? "document" : prefix) + " must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) {
            if (top) continue;
            throw UsageError("config: unknown key " + path);
        }
        json& slot = base[it.key()];
        if (slot.is_object() && !slot.empty()) {
            overlay_at(slot, it.value(), path, false);
        } else if (!compatible(slot, it.value())) {
            throw UsageError("config: " + path + " has the wrong type (expected like " + slot.dump() + ")");
        } else if (slot.is_number_float()) {
            slot = it.value().get<double>();
        } else {
            slot = it.value();
        }
    }
}

} // namespace

void overlay_config(json& base, const json& patch) { overlay_at(base, patch, "", true); }

std::vector<std::string> leaf_paths(const json& config) {
    std::vector<std::string> out;
    for (auto it = config.begin(); it != config.end(); ++it) collect_leaves(it.value(), it.key(), out);
    return out;
}

void set_dotted(json& config, const std::string& dotted, const std::string& text) {
    const json::json_pointer ptr = pointer_of(dotted);
    if (!config.contains(ptr)) throw UsageError("unknown setting " + dotted);
    json& slot = config[ptr];
    json value;
    if (slot.is_string()) {
        value = text;
    } else if (slot.is_array()) {
        if (!text.empty() && text.front() == '[') {
            value = json::parse(text, nullptr, false);
        } else {
            value = json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                json v = json::parse(item, nullptr, false);
                value.push_back(v.is_discarded() ? json(item) : v);
            }
        }
    } else {
        value = json::parse(text, nullptr, false);
    }
    if (value.is_discarded() || !compatible(slot, value)) {
        throw UsageError("--" + dotted + ": cannot use '" + text + "' (expected a value like " +
                         (slot.is_null() ? std::string("42") : slot.dump()) + ")");
    }
    slot = slot.is_number_float() ? json(value.get<double>()) : value;
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Multi-omics classification with incomplete views", "clclsa"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", kVersion);

    struct Sub {
        CLI::App* app = nullptr;
        std::string config_file;
        std::map<std::string, std::string> values;
    };
    std::map<std::string, Sub> subs;
    const std::map<std::string, std::string> descriptions{
        {"synth", "generate a synthetic multi-view dataset"},
        {"mask", "mark views missing at a given rate"},
        {"train", "train a model and write checkpoint and logs"},
        {"eval", "evaluate a checkpoint on a dataset"},
        {"sweep", "missing-rate sweep (optionally per view subset)"},
        {"grid", "grid search over the loss weights"},
        {"ablate", "loss-term ablation across missing rates"},
        {"surface", "hyperparameter surface with one weight fixed"}};
    for (const auto& name : kCommands) {
        Sub& s = subs[name];
        s.app = app.add_subcommand(name, descriptions.at(name));
        s.app->add_option("--config", s.config_file, "JSON config file (or a run manifest)");
        json defaults = default_config(name);
        if (defaults.contains("model")) apply_preset(defaults["model"]);
        for (const auto& path : leaf_paths(defaults)) {
            std::string names = "--" + path;
            for (const auto& [alias, target] : kAliases)
                if (target == path) names += ",--" + alias;
            s.app->add_option(names, s.values[path], "default " + text_of(defaults.at(pointer_of(path))));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    std::string command;
    for (const auto& [name, s] : subs)
        if (s.app->parsed()) command = name;
    Sub& sub = subs.at(command);

    RunContext run;
    run.command = command;
    for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
    try {
        json file = json::object();
        if (!sub.config_file.empty()) file = read_config_file(sub.config_file);
        json config = default_config(command);
        // The preset decides the model defaults that the file and flags refine.
        if (config.contains("model")) {
            if (file.contains("model") && file["model"].contains("preset"))
                config["model"]["preset"] = file["model"]["preset"];
            if (sub.app->count("--model.preset") > 0) config["model"]["preset"] = sub.values.at("model.preset");
            apply_preset(config["model"]);
        }
        overlay_config(config, file);
        for (const auto& [path, text] : sub.values) {
            if (sub.app->count("--" + path) > 0) set_dotted(config, path, text);
        }
        if (stochastic(command) && config.at("seed").is_null()) {
            throw UsageError("--seed is required for " + command);
        }
        run.config = config;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n\n" << sub.app->help();
        return kExitUsage;
    }

    try {
        return run_command(run);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << sub.app->help();
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace clclsa::cli
