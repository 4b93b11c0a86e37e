#pragma once

// Command-line front end: generate | select | evaluate | report.
//
// Every flag can also be given in a JSON config file (--config) under a section
// named after the subcommand, with dashes in the flag name written as
// underscores. Flags on the command line win over the file. Unknown keys are
// rejected.
//
// Exit codes: 0 success, 1 config or validation error, 2 I/O error,
// 3 training failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/evaluate.hpp"
#include "minerva/ksg.hpp"
#include "minerva/minerva.hpp"
#include "minerva/report.hpp"
#include "minerva/statnet.hpp"
#include "minerva/synth.hpp"

namespace minerva::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 1, kIoError = 2, kTrainingFailure = 3 };

/// Parses "a..b" (inclusive) or "a,b,c".
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    auto number = [&](const std::string& s) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw ConfigError("bad seed '" + s + "' in --seeds " + text);
        }
        return static_cast<std::uint64_t>(std::stoull(s));
    };
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const std::uint64_t lo = number(text.substr(0, dots));
        const std::uint64_t hi = number(text.substr(dots + 2));
        if (hi < lo) {
            throw ConfigError("--seeds range " + text + " is empty");
        }
        for (std::uint64_t s = lo; s <= hi; ++s) {
            out.push_back(s);
        }
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        out.push_back(number(text.substr(start, comma - start)));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

namespace detail {

inline std::string scalar_text(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    if (v.is_number()) {
        return v.dump();
    }
    throw ConfigError("config values must be strings, numbers, booleans or arrays of those");
}

/// Feeds a config-file section into `app` for every option not already set on the command line.
inline void apply_section(CLI::App& app, const json& section, const std::string& name) {
    if (!section.is_object()) {
        throw ConfigError("config section '" + name + "' must be an object");
    }
    for (const auto& [key, value] : section.items()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        CLI::Option* opt = app.get_option_no_throw("--" + flag);
        if (opt == nullptr || flag == "config") {
            throw ConfigError("unknown key '" + key + "' in config section '" + name + "'");
        }
        if (opt->count() > 0 || value.is_null()) {
            continue;
        }
        if (value.is_array()) {
            for (const auto& e : value) {
                opt->add_result(scalar_text(e));
            }
        } else {
            opt->add_result(scalar_text(value));
        }
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
}

inline json load_config(const std::string& path, const std::string& command) {
    if (path.empty()) {
        return json::object();
    }
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config '" + path + "' must be a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key != "generate" && key != "select" && key != "evaluate" && key != "report") {
            throw ConfigError("unknown config section '" + key + "'");
        }
    }
    return doc.contains(command) ? doc.at(command) : json::object();
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; rethrows the first failure by index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < jobs; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace detail

// ---- generate -----------------------------------------------------------------

struct GenerateOptions {
    std::string experiment = "A";
    std::optional<std::size_t> d, m, k0, k1, n, d1, d2; ///< unset fields keep generator defaults
    std::vector<std::size_t> j, i;
    std::vector<double> alpha, beta;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string name;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& out) {
    synth::Generated gen;
    json spec_json;
    if (o.experiment == "A" || o.experiment == "a") {
        synth::ExpASpec s;
        s.d = o.d.value_or(s.d);
        s.m = o.m.value_or(s.m);
        s.k0 = o.k0 ? *o.k0 - 1 : s.k0;
        s.k1 = o.k1 ? *o.k1 - 1 : s.k1;
        s.n = o.n.value_or(s.n);
        s.seed = o.seed;
        if ((o.k0 && *o.k0 == 0) || (o.k1 && *o.k1 == 0)) {
            throw SpecError("experiment A: k0 and k1 are 1-based");
        }
        gen = synth::gen_experiment_a(s);
        spec_json = synth::to_json(s);
    } else if (o.experiment == "B" || o.experiment == "b") {
        synth::ExpBSpec s;
        s.d1 = o.d1.value_or(s.d1);
        s.d2 = o.d2.value_or(s.d2);
        s.m = o.m.value_or(s.m);
        s.n = o.n.value_or(s.n);
        auto to0 = [](const std::vector<std::size_t>& v) {
            std::vector<std::size_t> r;
            for (std::size_t x : v) {
                if (x == 0) {
                    throw SpecError("experiment B: feature indices are 1-based");
                }
                r.push_back(x - 1);
            }
            return r;
        };
        if (o.k0) {
            s.k0 = to0({*o.k0}).front();
        }
        if (o.k1) {
            s.k1 = to0({*o.k1}).front();
        }
        if (!o.j.empty()) {
            s.j_indices = to0(o.j);
        }
        if (!o.i.empty()) {
            s.i_indices = to0(o.i);
        }
        if (!o.alpha.empty()) {
            s.alpha = o.alpha;
        }
        if (!o.beta.empty()) {
            s.beta = o.beta;
        }
        s.seed = o.seed;
        gen = synth::gen_experiment_b(s);
        spec_json = synth::to_json(s);
    } else {
        throw ConfigError("--experiment must be A or B");
    }
    for (const auto& w : gen.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    const std::string name =
        o.name.empty() ? "experiment_" + std::string(1, static_cast<char>(std::tolower(o.experiment[0]))) + "_seed" +
                             std::to_string(o.seed)
                       : o.name;
    const std::filesystem::path dir(o.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    }
    const std::string csv = to_csv(gen.data);
    const std::string hash = hex64(fnv1a64(csv));
    write_text_file(dir / (name + ".csv"), csv);
    write_text_file(dir / (name + ".json"), synth::make_sidecar(spec_json, gen, hash).dump(2) + "\n");
    out << "wrote " << (dir / (name + ".csv")).string() << "\n";
    out << "hash " << hash << "\n";
    return kOk;
}

// ---- select -------------------------------------------------------------------

struct SelectOptions {
    std::string data;
    std::string sidecar; ///< default: the dataset path with a .json extension, if present
    std::string method = "minerva";
    std::uint64_t seed = 0;
    std::string seeds;
    std::size_t jobs = 0; ///< 0 = hardware concurrency
    std::string out;

    std::size_t hidden = 64;
    std::size_t blocks = 2;
    double clamp = 5.0;
    TrainConfig train;
    std::string optimizer = "adam";
    std::string weight_update = "proximal";

    ksg::KsgConfig ksg;
};

struct LoadedData {
    Dataset data;
    std::string hash;
    std::optional<std::vector<std::size_t>> truth; ///< 0-based
};

inline LoadedData load_dataset(const std::string& path, const std::string& sidecar_path) {
    if (path.empty()) {
        throw ConfigError("--data is required");
    }
    std::filesystem::path side = sidecar_path;
    if (side.empty()) {
        side = std::filesystem::path(path).replace_extension(".json");
        if (!std::filesystem::exists(side)) {
            side.clear();
        }
    }
    LoadedData out;
    std::vector<std::size_t> cards;
    json sc;
    if (!side.empty()) {
        try {
            sc = json::parse(read_text_file(side));
        } catch (const json::parse_error& e) {
            throw SchemaError("sidecar '" + side.string() + "' is not valid JSON: " + e.what());
        }
        if (sc.contains("cardinalities")) {
            cards = sc.at("cardinalities").get<std::vector<std::size_t>>();
        }
    }
    const std::string text = read_text_file(path);
    out.data = from_csv(text, cards);
    out.hash = dataset_hash(out.data);
    if (sc.is_object() && sc.contains("ground_truth")) {
        out.truth = report::zero_based(sc.at("ground_truth").get<std::vector<std::size_t>>(), out.data.feature_count());
    }
    return out;
}

inline json select_one(const SelectOptions& o, const LoadedData& ld, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    report::SelectionReport r;
    r.method = o.method;
    r.dataset = o.data;
    r.dataset_hash = ld.hash;
    r.seed = seed;
    r.truth = ld.truth;
    if (o.method == "minerva") {
        TrainConfig cfg = o.train;
        cfg.seed = seed;
        const NetworkSpec spec = NetworkSpec::for_dataset(ld.data, o.hidden, o.blocks, o.clamp);
        const SelectionResult res = select_features(ld.data, spec, cfg);
        r.selected = res.selected;
        r.weights = res.final_p;
        r.mi_trace = res.mi_trace;
        r.config = {{"method", "minerva"}, {"network", spec}, {"train", report::to_json(cfg)}};
    } else if (o.method == "ksg") {
        ksg::KsgConfig cfg = o.ksg;
        cfg.seed = seed;
        r.weights = ksg::ksg_scores(ld.data, cfg);
        r.selected = ksg::filter_scores(r.weights, cfg.threshold);
        r.config = {{"method", "ksg"}, {"ksg", report::to_json(cfg)}};
    } else {
        throw ConfigError("--method must be minerva or ksg");
    }
    r.config["data"] = o.data;
    r.wall_time_seconds = detail::seconds_since(t0);
    r.timestamp = report::utc_timestamp();
    json j = report::to_json(r);
    report::validate(j);
    return j;
}

inline int cmd_select(SelectOptions o, std::ostream& out) {
    if (o.optimizer == "adam") {
        o.train.optimizer = OptimizerKind::Adam;
    } else if (o.optimizer == "sgd") {
        o.train.optimizer = OptimizerKind::Sgd;
    } else {
        throw ConfigError("--optimizer must be adam or sgd");
    }
    if (o.weight_update == "proximal") {
        o.train.weight_update = WeightUpdate::Proximal;
    } else if (o.weight_update == "gradient") {
        o.train.weight_update = WeightUpdate::Gradient;
    } else {
        throw ConfigError("--weight-update must be proximal or gradient");
    }
    if (o.method != "minerva" && o.method != "ksg") {
        throw ConfigError("--method must be minerva or ksg");
    }
    o.train.validate();
    if (o.out.empty()) {
        throw ConfigError("--out is required");
    }
    const LoadedData ld = load_dataset(o.data, o.sidecar);
    const std::vector<std::uint64_t> seeds = o.seeds.empty() ? std::vector<std::uint64_t>{o.seed} : parse_seeds(o.seeds);

    std::vector<json> reports(seeds.size());
    const std::size_t jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
    detail::parallel_for(seeds.size(), jobs, [&](std::size_t i) { reports[i] = select_one(o, ld, seeds[i]); });

    for (const auto& r : reports) {
        out << r.at("method").get<std::string>() << " seed " << r.at("seed") << ": selected " << r.at("selected").dump();
        if (!r.at("classification").is_null()) {
            out << " (" << r.at("classification").get<std::string>() << ")";
        }
        out << "\n";
    }
    report::write(o.out, seeds.size() == 1 && o.seeds.empty() ? reports.front() : report::make_set(reports));
    return kOk;
}

// ---- evaluate -----------------------------------------------------------------

struct EvaluateOptions {
    std::string data;
    std::string sidecar;
    std::vector<std::size_t> selected; ///< 1-based
    std::string report;                ///< take the selected set from this selection report
    evaluate::KnnConfig knn;
    std::string out;
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
    if (o.out.empty()) {
        throw ConfigError("--out is required");
    }
    if (!o.report.empty() && !o.selected.empty()) {
        throw ConfigError("give either --selected or --report, not both");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const LoadedData ld = load_dataset(o.data, o.sidecar);
    report::MetricsContext ctx;
    ctx.dataset = o.data;
    ctx.dataset_hash = ld.hash;
    ctx.knn = o.knn;
    std::vector<std::size_t> chosen = o.selected;
    if (!o.report.empty()) {
        const json r = report::read(o.report);
        if (r.at("kind") != "selection") {
            throw ConfigError("--report must be a single-seed selection report");
        }
        if (r.at("dataset_hash") != ld.hash) {
            throw ConfigError("report was produced on a different dataset (hash " +
                              r.at("dataset_hash").get<std::string>() + ", data " + ld.hash + ")");
        }
        chosen = r.at("selected").get<std::vector<std::size_t>>();
        ctx.method = r.at("method").get<std::string>();
        ctx.knn.seed = r.at("seed").get<std::uint64_t>();
    }
    ctx.selected = report::zero_based(chosen, ld.data.feature_count());
    const evaluate::Metrics m = evaluate::evaluate_selection(ld.data, ctx.selected, ctx.knn);
    ctx.wall_time_seconds = detail::seconds_since(t0);
    ctx.timestamp = report::utc_timestamp();
    const json j = report::to_json(ctx, m);
    report::write(o.out, j);
    out << "R2 in-sample " << m.r2_in_sample << ", out-of-sample " << m.r2_out_of_sample << "\n";
    return kOk;
}

// ---- report -------------------------------------------------------------------

struct ReportOptions {
    std::vector<std::string> inputs;
    std::string out; ///< CSV path; the text table goes next to it with a .txt extension
};

inline int cmd_report(const ReportOptions& o, std::ostream& out) {
    std::vector<json> docs;
    for (const auto& path : o.inputs) {
        if (!path.empty()) { // a bare --inputs yields one empty value
            docs.push_back(report::read(path));
        }
    }
    if (docs.empty()) {
        throw ConfigError("no reports");
    }
    const auto rows = report::collate(docs);
    const std::string text = report::to_text(rows);
    if (!o.out.empty()) {
        write_text_file(o.out, report::to_csv(rows));
        write_text_file(std::filesystem::path(o.out).replace_extension(".txt"), text);
    }
    out << text;
    return kOk;
}

// ---- entry point --------------------------------------------------------------

/// Maps an exception thrown by a command to its exit code, printing the message.
inline int report_error(std::ostream& err) {
    try {
        throw;
    } catch (const TrainingError& e) {
        err << "training failed: " << e.what() << "\n";
        return kTrainingFailure;
    } catch (const NumericError& e) {
        err << "training failed: " << e.what() << "\n";
        return kTrainingFailure;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SpecError& e) {
        err << "spec error: " << e.what() << "\n";
        return kConfigError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Mutual-information feature selection"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;

    GenerateOptions gen;
    CLI::App* g = app.add_subcommand("generate", "Write a synthetic dataset and its sidecar");
    g->add_option("--config", config_path, "JSON config file");
    g->add_option("--experiment", gen.experiment, "A or B");
    g->add_option("--d", gen.d, "feature count (A)");
    g->add_option("--m", gen.m, "categories per discrete feature");
    g->add_option("--k0", gen.k0, "first switch feature, 1-based");
    g->add_option("--k1", gen.k1, "second switch feature, 1-based");
    g->add_option("--n", gen.n, "rows");
    g->add_option("--d1", gen.d1, "discrete feature count (B)");
    g->add_option("--d2", gen.d2, "continuous feature count (B)");
    g->add_option("--j", gen.j, "sine-branch features, 1-based (B)")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    g->add_option("--i", gen.i, "cosine-branch features, 1-based (B)")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    g->add_option("--alpha", gen.alpha, "sine coefficients (B)")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    g->add_option("--beta", gen.beta, "cosine coefficients (B)")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    g->add_option("--seed", gen.seed, "root seed");
    g->add_option("--out-dir", gen.out_dir, "output directory");
    g->add_option("--name", gen.name, "file stem (default experiment_<a|b>_seed<N>)");

    SelectOptions sel;
    std::optional<double> drift_target;
    std::optional<double> weight_lr;
    std::optional<double> stage2_lr;
    CLI::App* s = app.add_subcommand("select", "Run MINERVA or the KSG filter on a dataset");
    s->add_option("--config", config_path, "JSON config file");
    s->add_option("--data", sel.data, "dataset CSV");
    s->add_option("--sidecar", sel.sidecar, "sidecar JSON (default: <data>.json when present)");
    s->add_option("--method", sel.method, "minerva or ksg");
    s->add_option("--seed", sel.seed, "seed");
    s->add_option("--seeds", sel.seeds, "several seeds, a..b or a,b,c; runs concurrently");
    s->add_option("--jobs", sel.jobs, "worker threads for --seeds (0 = all cores)");
    s->add_option("--out", sel.out, "report JSON path");
    s->add_option("--hidden", sel.hidden, "hidden width");
    s->add_option("--blocks", sel.blocks, "residual blocks");
    s->add_option("--clamp", sel.clamp, "embedding soft-clamp bound");
    s->add_option("--learning-rate", sel.train.learning_rate, "stage-1 step size");
    s->add_option("--stage2-learning-rate", stage2_lr, "step size for the network in stage 2");
    s->add_option("--weight-learning-rate", weight_lr, "step size for p");
    s->add_option("--c1", sel.train.c1, "sparsity coefficient");
    s->add_option("--c2", sel.train.c2, "drift coefficient");
    s->add_option("--drift-target", drift_target, "a (default sqrt(d))");
    s->add_option("--threshold", sel.train.threshold, "eps for zeroing p");
    s->add_option("--batch-size", sel.train.batch_size, "batch size");
    s->add_option("--stage1-max-steps", sel.train.stage1_max_steps, "stage-1 step budget");
    s->add_option("--stage2-max-steps", sel.train.stage2_max_steps, "stage-2 step budget");
    s->add_option("--stage2-min-steps", sel.train.stage2_min_steps, "no early stop in stage 2 before this");
    s->add_option("--patience", sel.train.patience, "evaluations without improvement before stopping");
    s->add_option("--eval-every", sel.train.eval_every, "steps between held-out evaluations");
    s->add_option("--eval-batches", sel.train.eval_batches, "held-out batches per evaluation");
    s->add_option("--holdout-fraction", sel.train.holdout_fraction, "rows kept for evaluation");
    s->add_option("--clip-norm", sel.train.clip_norm, "global gradient-norm clip");
    s->add_option("--optimizer", sel.optimizer, "adam or sgd");
    s->add_option("--weight-update", sel.weight_update, "proximal or gradient");
    s->add_option("--k", sel.ksg.k, "KSG neighbours");
    s->add_option("--ksg-threshold", sel.ksg.threshold, "KSG selection threshold (nats)");
    s->add_option("--jitter-scale", sel.ksg.jitter_scale, "KSG tie-breaking jitter, relative to column range");

    EvaluateOptions ev;
    CLI::App* e = app.add_subcommand("evaluate", "Score a feature subset with a k-NN regressor");
    e->add_option("--config", config_path, "JSON config file");
    e->add_option("--data", ev.data, "dataset CSV");
    e->add_option("--sidecar", ev.sidecar, "sidecar JSON");
    e->add_option("--selected", ev.selected, "1-based feature indices")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    e->add_option("--report", ev.report, "selection report to take the subset from");
    e->add_option("--k", ev.knn.k, "neighbours");
    e->add_option("--train-fraction", ev.knn.train_fraction, "training share of the split");
    e->add_option("--seed", ev.knn.seed, "split seed");
    e->add_option("--out", ev.out, "metrics JSON path");

    ReportOptions rep;
    CLI::App* r = app.add_subcommand("report", "Collate reports into a table");
    r->add_option("--config", config_path, "JSON config file");
    r->add_option("--inputs", rep.inputs, "report and metrics files")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->expected(0, CLI::detail::expected_max_vector_size);
    r->add_option("--out", rep.out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex, out, err);
        return kConfigError;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        const json section = detail::load_config(config_path, active->get_name());
        detail::apply_section(*active, section, active->get_name());
        if (active == g) {
            return cmd_generate(gen, out);
        }
        if (active == s) {
            sel.train.drift_target = drift_target;
            if (weight_lr) {
                sel.train.weight_learning_rate = weight_lr;
            }
            if (stage2_lr) {
                sel.train.stage2_learning_rate = stage2_lr;
            }
            return cmd_select(sel, out);
        }
        if (active == e) {
            return cmd_evaluate(ev, out);
        }
        return cmd_report(rep, out);
    } catch (...) {
        return report_error(err);
    }
}

} // namespace minerva::cli
