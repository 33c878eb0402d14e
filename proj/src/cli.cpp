#include "simtune/cli.hpp"

#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "simtune/eval.hpp"
#include "simtune/gradcheck_suite.hpp"
#include "simtune/io.hpp"
#include "simtune/synthdata.hpp"
#include "simtune/trainer.hpp"

namespace simtune {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConfigParse:
        case ErrorKind::InvalidConfig:
        case ErrorKind::InvalidSpec:
        case ErrorKind::BatchTooLarge:
        case ErrorKind::NotEnoughIdentities:
        case ErrorKind::IdentityHasSingleImage:
        case ErrorKind::StepOutOfRange:
        case ErrorKind::KOutOfRange:
            return kExitConfig;
        case ErrorKind::MissingInput:
        case ErrorKind::Io:
            return kExitInput;
        case ErrorKind::NonFinite:
        case ErrorKind::NonFiniteGradient:
        case ErrorKind::NonFiniteEvaluation:
        case ErrorKind::DivergenceDetected:
            return kExitDivergence;
        default:
            return kExitFailure;
    }
}

namespace {

struct Flags {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
};

// Resolved configuration of one command. Path-valued keys are absolute and a
// --seed override is folded in, so the manifest alone reproduces the run.
struct Invocation {
    std::string command;
    fs::path config_path;
    json config;
    fs::path out;
    std::uint64_t seed = 0;
    json inputs = json::object();

    json manifest() const {
        return {{"command", command},
                {"config_path", config_path.string()},
                {"config", config},
                {"inputs", inputs},
                {"out", out.string()},
                {"seed", seed},
                {"version", kVersion}};
    }
};

std::set<std::string> keys_of(const json& j) {
    std::set<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
    return keys;
}

std::set<std::string> train_keys() { return keys_of(to_json(TrainConfig{})); }

Invocation load(const std::string& command, const Flags& flags, const std::set<std::string>& allowed,
                const std::vector<std::string>& path_keys) {
    Invocation inv;
    inv.command = command;
    inv.config_path = fs::absolute(flags.config).lexically_normal();
    json raw = read_json_file(inv.config_path);
    if (!raw.is_object()) throw Error(ErrorKind::ConfigParse, "config must be a JSON object");
    // A manifest written by an earlier run is accepted as a config.
    if (raw.contains("command") && raw.contains("config") && raw.contains("version")) {
        if (raw.at("command") != command) {
            throw Error(ErrorKind::InvalidConfig, "manifest was written by '" +
                                                      raw.at("command").get<std::string>() + "'");
        }
        raw = raw.at("config");
        if (!raw.is_object()) throw Error(ErrorKind::ConfigParse, "manifest config must be an object");
    }
    for (auto it = raw.begin(); it != raw.end(); ++it) {
        if (!allowed.contains(it.key())) {
            throw Error(ErrorKind::InvalidConfig, "unknown config key '" + it.key() + "' for " + command);
        }
    }
    const fs::path base = inv.config_path.parent_path();
    for (const std::string& key : path_keys) {
        if (!raw.contains(key)) continue;
        if (!raw.at(key).is_string()) throw Error(ErrorKind::ConfigParse, key + " must be a path string");
        fs::path p = raw.at(key).get<std::string>();
        if (p.is_relative()) p = base / p;
        raw[key] = p.lexically_normal().string();
        inv.inputs[key] = raw[key];
    }
    if (flags.seed) raw["seed"] = *flags.seed;
    try {
        inv.seed = raw.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    inv.config = std::move(raw);
    inv.out = fs::absolute(flags.out).lexically_normal();
    std::error_code ec;
    fs::create_directories(inv.out, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + inv.out.string() + ": " + ec.message());
    return inv;
}

fs::path require_path(const Invocation& inv, const std::string& key) {
    if (!inv.config.contains(key)) throw Error(ErrorKind::InvalidConfig, "config needs '" + key + "'");
    return inv.config.at(key).get<std::string>();
}

std::string string_key(const json& cfg, const std::string& key, const std::string& fallback) {
    try {
        return cfg.value(key, fallback);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
}

// Config minus keys that TrainConfig does not know about.
json train_subset(const json& cfg) {
    const auto keys = train_keys();
    json sub = json::object();
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (keys.contains(it.key())) sub[it.key()] = it.value();
    }
    return sub;
}

// The fine-tuning task follows the dataset unless the config names one.
TrainConfig fine_tune_config(const json& cfg, Task data_task) {
    json sub = train_subset(cfg);
    if (!sub.contains("task")) sub["task"] = std::string(to_string(data_task));
    return train_config_from_json(sub);
}

Protocol protocol_for(const json& cfg, Task task) {
    if (cfg.contains("protocol")) return protocol_from_string(string_key(cfg, "protocol", ""));
    return task == Task::Classification ? Protocol::Classification : Protocol::Verification;
}

void write_manifest(const Invocation& inv) { write_json_file(inv.out / "manifest.json", inv.manifest()); }

int cmd_gen_data(const Flags& flags, std::ostream& out) {
    std::set<std::string> allowed = keys_of(to_json(SyntheticSpec{}));
    allowed.insert("task");
    const Invocation inv = load("gen-data", flags, allowed, {});
    const Task task = task_from_string(string_key(inv.config, "task", "classification"));
    const SyntheticSpec spec = spec_from_json(inv.config);
    const DatasetSplits splits = generate(spec, task);
    write_dataset(splits, inv.out, inv.manifest());
    write_manifest(inv);
    out << "gen-data: " << splits.pretrain.size() << " pretrain, " << splits.finetune_id.size()
        << " finetune_id, " << splits.test_id.size() << " test_id, " << splits.test_ood.size()
        << " test_ood rows -> " << inv.out.string() << "\n";
    return kExitOk;
}

int cmd_pretrain(const Flags& flags, std::ostream& out) {
    std::set<std::string> allowed = train_keys();
    allowed.insert({"dataset", "hidden_dim", "embed_dim", "activation"});
    const Invocation inv = load("pretrain", flags, allowed, {"dataset"});
    const DatasetSplits splits = read_dataset(require_path(inv, "dataset"));
    json pc = inv.config;
    pc.erase("dataset");
    const PretrainConfig config = pretrain_config_from_json(pc);

    RunRecord rec;
    Model model;
    try {
        model = pretrain(splits.pretrain, config, &rec);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DivergenceDetected) throw;
        json doc = to_json(rec);
        doc["manifest"] = inv.manifest();
        write_json_file(inv.out / "pretrain_record.json", doc);
        write_text_file(inv.out / "pretrain_steps.csv", steps_csv(rec));
        write_manifest(inv);
        throw;
    }
    save_checkpoint(model, inv.out / "pretrained.json", inv.manifest());
    json doc = to_json(rec);
    doc["manifest"] = inv.manifest();
    write_json_file(inv.out / "pretrain_record.json", doc);
    write_text_file(inv.out / "pretrain_steps.csv", steps_csv(rec));
    write_manifest(inv);
    out << "pretrain: " << rec.steps.size() << " steps, final loss "
        << (rec.steps.empty() ? 0.0 : rec.steps.back().total_loss) << " -> " << inv.out.string() << "\n";
    return kExitOk;
}

int cmd_train(const Flags& flags, std::ostream& out, std::ostream& err) {
    std::set<std::string> allowed = train_keys();
    allowed.insert({"dataset", "pretrained", "split"});
    const Invocation inv = load("train", flags, allowed, {"dataset", "pretrained"});
    const DatasetSplits splits = read_dataset(require_path(inv, "dataset"));
    const Model pretrained = load_checkpoint(require_path(inv, "pretrained"));
    const TrainConfig config = fine_tune_config(inv.config, splits.task);
    const std::string split = string_key(inv.config, "split", "finetune_id");

    const RunRecord rec = run_training(pretrained, splits.split(split), config);
    save_checkpoint(rec.final_model, inv.out / "checkpoint.json", inv.manifest());
    json doc = to_json(rec);
    doc["manifest"] = inv.manifest();
    write_json_file(inv.out / "run_record.json", doc);
    write_text_file(inv.out / "steps.csv", steps_csv(rec));
    write_manifest(inv);
    if (rec.diverged) {
        err << "train: diverged: " << rec.failure << "\n";
        return kExitDivergence;
    }
    out << "train: " << rec.steps.size() << " steps on " << split << " -> " << inv.out.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
    const std::set<std::string> allowed = {"dataset", "checkpoint", "snapshot", "split",
                                           "protocol", "tag", "seed"};
    const Invocation inv = load("eval", flags, allowed, {"dataset", "checkpoint", "snapshot"});
    const DatasetSplits splits = read_dataset(require_path(inv, "dataset"));
    const fs::path checkpoint = require_path(inv, "checkpoint");
    const Model model = load_checkpoint(checkpoint);
    const fs::path snapshot_path = inv.config.contains("snapshot") ? require_path(inv, "snapshot") : checkpoint;
    const EncoderSnapshot snapshot(load_checkpoint(snapshot_path).vision);
    const std::string split = string_key(inv.config, "split", "test_ood");
    const std::string tag = string_key(inv.config, "tag", split == "test_ood" ? "OOD" : "ID");
    const Dataset& data = splits.split(split);

    MetricsReport report = evaluate(model, snapshot, data, protocol_for(inv.config, splits.task), tag);
    report.config["split"] = split;
    json doc = to_json(report);
    doc["manifest"] = inv.manifest();
    write_json_file(inv.out / "metrics.json", doc);
    write_text_file(inv.out / "metrics.csv", metrics_csv(report));
    write_text_file(inv.out / "embeddings.csv", embeddings_csv(forward_vision(model.vision, data.x), data.labels));
    write_manifest(inv);
    out << "eval (" << tag << ", " << split << "):";
    for (const auto& [name, value] : report.metrics) out << " " << name << "=" << value;
    out << "\n";
    return kExitOk;
}

int cmd_gradcheck(const Flags& flags, std::ostream& out, std::ostream& err) {
    const std::set<std::string> allowed = {"instances", "seed", "h", "corrupt"};
    const Invocation inv = load("gradcheck", flags, allowed, {});
    std::size_t instances = 100;
    double h = 1e-5;
    std::string corrupt;
    try {
        instances = inv.config.value("instances", instances);
        h = inv.config.value("h", h);
        corrupt = inv.config.value("corrupt", corrupt);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    const auto results = run_gradcheck(default_gradcheck_cases(), instances, inv.seed, h, corrupt);

    std::ostringstream csv;
    csv << "loss,instances,max_rel_err,passed\n";
    json rows = json::array();
    std::vector<std::string> failing;
    for (const GradcheckResult& r : results) {
        csv << r.name << ',' << r.instances << ',' << format_double(r.max_rel_err) << ',' << (r.passed ? 1 : 0)
            << '\n';
        rows.push_back({{"loss", r.name}, {"instances", r.instances}, {"max_rel_err", r.max_rel_err},
                        {"passed", r.passed}});
        if (!r.passed) failing.push_back(r.name);
    }
    write_text_file(inv.out / "gradcheck.csv", csv.str());
    write_json_file(inv.out / "gradcheck.json", {{"tolerance", kGradcheckTolerance},
                                                 {"results", rows},
                                                 {"manifest", inv.manifest()}});
    write_manifest(inv);
    for (const GradcheckResult& r : results) {
        out << (r.passed ? "ok   " : "FAIL ") << r.name << " max_rel_err=" << r.max_rel_err << "\n";
    }
    if (!failing.empty()) {
        err << "gradcheck: failing losses:";
        for (const auto& name : failing) err << " " << name;
        err << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}

struct SweepRow {
    double alpha = 0.0;
    MetricsReport id;
    MetricsReport ood;
    double probe_drift = 0.0;
    bool diverged = false;
};

int cmd_sweep(const Flags& flags, std::ostream& out, std::ostream& err) {
    std::set<std::string> allowed = train_keys();
    allowed.erase("alpha");
    allowed.insert({"dataset", "pretrained", "alphas", "protocol", "split"});
    const Invocation inv = load("sweep", flags, allowed, {"dataset", "pretrained"});
    std::vector<double> alphas;
    try {
        alphas = inv.config.at("alphas").get<std::vector<double>>();
    } catch (const json::out_of_range&) {
        throw Error(ErrorKind::InvalidConfig, "sweep needs an 'alphas' list");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    if (alphas.size() < 2) throw Error(ErrorKind::InvalidConfig, "sweep needs at least two alpha values");

    const DatasetSplits splits = read_dataset(require_path(inv, "dataset"));
    const Model pretrained = load_checkpoint(require_path(inv, "pretrained"));
    const TrainConfig base = fine_tune_config(inv.config, splits.task);
    const Protocol protocol = protocol_for(inv.config, splits.task);
    const std::string split = string_key(inv.config, "split", "finetune_id");
    const Dataset& train_data = splits.split(split);
    const EncoderSnapshot snapshot(pretrained.vision);
    const Matrix probe = probe_inputs(splits);

    // Runs share only read-only inputs, so they can proceed in parallel.
    std::vector<std::future<SweepRow>> jobs;
    for (double alpha : alphas) {
        TrainConfig config = base;
        config.alpha = alpha;
        config.validate();
        jobs.push_back(std::async(std::launch::async, [&, config] {
            const RunRecord rec = run_training(pretrained, train_data, config);
            SweepRow row;
            row.alpha = config.alpha;
            row.diverged = rec.diverged;
            row.id = evaluate(rec.final_model, snapshot, splits.test_id, protocol, "ID");
            row.ood = evaluate(rec.final_model, snapshot, splits.test_ood, protocol, "OOD");
            row.probe_drift = mean_drift(rec.final_model.vision, snapshot, probe);
            return row;
        }));
    }
    std::vector<SweepRow> rows;
    for (auto& job : jobs) rows.push_back(job.get());

    std::ostringstream csv;
    csv << "alpha";
    for (const auto& [name, v] : rows.front().id.metrics) csv << ",id_" << name;
    for (const auto& [name, v] : rows.front().ood.metrics) csv << ",ood_" << name;
    csv << ",probe_drift,diverged\n";
    json table = json::array();
    bool any_diverged = false;
    for (const SweepRow& r : rows) {
        csv << format_double(r.alpha);
        for (const auto& [name, v] : r.id.metrics) csv << ',' << format_double(v);
        for (const auto& [name, v] : r.ood.metrics) csv << ',' << format_double(v);
        csv << ',' << format_double(r.probe_drift) << ',' << (r.diverged ? 1 : 0) << '\n';
        table.push_back({{"alpha", r.alpha},
                         {"id", r.id.metrics},
                         {"ood", r.ood.metrics},
                         {"probe_drift", r.probe_drift},
                         {"diverged", r.diverged}});
        any_diverged = any_diverged || r.diverged;
    }
    write_text_file(inv.out / "sweep.csv", csv.str());
    write_json_file(inv.out / "sweep.json", {{"protocol", std::string(to_string(protocol))},
                                             {"rows", table},
                                             {"manifest", inv.manifest()}});
    write_manifest(inv);
    out << csv.str();
    if (any_diverged) {
        err << "sweep: at least one run diverged\n";
        return kExitDivergence;
    }
    return kExitOk;
}

void add_common(CLI::App* sub, Flags& flags) {
    sub->add_option("--config", flags.config, "JSON config (or a manifest.json from an earlier run)")
        ->required();
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "overrides the config seed");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"simtune: fine-tuning with a similarity-to-pretrained penalty"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1, 1);
    Flags flags;
    const char* const commands[][2] = {
        {"gen-data", "generate a synthetic dataset (dataset.csv, spec.json)"},
        {"pretrain", "train the reference encoder (pretrained.json)"},
        {"train", "fine-tune a pretrained checkpoint (checkpoint.json, steps.csv)"},
        {"eval", "evaluate a checkpoint on one split (metrics.csv, embeddings.csv)"},
        {"gradcheck", "compare analytic and finite-difference gradients (gradcheck.csv)"},
        {"sweep", "train and evaluate once per alpha (sweep.csv)"},
    };
    for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "gen-data") return cmd_gen_data(flags, out);
        if (command == "pretrain") return cmd_pretrain(flags, out);
        if (command == "train") return cmd_train(flags, out, err);
        if (command == "eval") return cmd_eval(flags, out);
        if (command == "gradcheck") return cmd_gradcheck(flags, out, err);
        return cmd_sweep(flags, out, err);
    } catch (const Error& e) {
        err << command << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << command << ": " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << "\n";
        return kExitFailure;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace simtune
