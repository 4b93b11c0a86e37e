#pragma once

// Machine-readable run artifacts: selection reports, metrics documents, and the
// collated table built from a set of them.
//
// All feature indices in these documents are 1-based. Wall time and timestamp
// live under "metadata", which content_hash ignores.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/evaluate.hpp"
#include "minerva/ksg.hpp"
#include "minerva/minerva.hpp"

namespace minerva::report {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline std::vector<std::size_t> one_based(const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out(idx);
    for (auto& i : out) {
        ++i;
    }
    return out;
}

/// Converts 1-based indices to 0-based, rejecting anything outside 1..d.
inline std::vector<std::size_t> zero_based(const std::vector<std::size_t>& idx, std::size_t d) {
    std::vector<std::size_t> out;
    for (std::size_t i : idx) {
        if (i < 1 || i > d) {
            throw ConfigError("feature index " + std::to_string(i) + " outside 1.." + std::to_string(d));
        }
        out.push_back(i - 1);
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
        throw ConfigError("repeated feature index");
    }
    return out;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

// ---- config echo ------------------------------------------------------------

inline json to_json(const TrainConfig& c) {
    json j{{"learning_rate", c.learning_rate},
           {"c1", c.c1},
           {"c2", c.c2},
           {"drift_target", c.drift_target ? json(*c.drift_target) : json(nullptr)},
           {"threshold", c.threshold},
           {"batch_size", c.batch_size},
           {"stage1_max_steps", c.stage1_max_steps},
           {"stage2_max_steps", c.stage2_max_steps},
           {"patience", c.patience},
           {"seed", c.seed},
           {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
           {"weight_update", c.weight_update == WeightUpdate::Proximal ? "proximal" : "gradient"},
           {"weight_learning_rate", c.weight_learning_rate ? json(*c.weight_learning_rate) : json(nullptr)},
           {"stage2_learning_rate", c.stage2_learning_rate ? json(*c.stage2_learning_rate) : json(nullptr)},
           {"clip_norm", c.clip_norm},
           {"eval_every", c.eval_every},
           {"eval_batches", c.eval_batches},
           {"holdout_fraction", c.holdout_fraction},
           {"min_improvement", c.min_improvement},
           {"stage2_min_steps", c.stage2_min_steps}};
    return j;
}

inline json to_json(const ksg::KsgConfig& c) {
    return {{"k", c.k}, {"threshold", c.threshold}, {"jitter_scale", c.jitter_scale}, {"seed", c.seed}};
}

// ---- selection report -------------------------------------------------------

struct SelectionReport {
    std::string method; ///< "minerva" or "ksg"
    std::string dataset;
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::vector<std::size_t> selected; ///< 0-based
    std::vector<double> weights;       ///< final p (minerva) or per-feature scores (ksg)
    std::vector<TracePoint> mi_trace;
    std::optional<std::vector<std::size_t>> truth; ///< 0-based, when a sidecar was available
    json config = json::object();
    double wall_time_seconds = 0.0;
    std::string timestamp;
};

inline json to_json(const SelectionReport& r) {
    json trace = json::array();
    for (const auto& t : r.mi_trace) {
        trace.push_back({{"stage", t.stage}, {"step", t.step}, {"mi_nats", t.mi_nats}});
    }
    json j{{"schema_version", kSchemaVersion},
           {"kind", "selection"},
           {"method", r.method},
           {"dataset", r.dataset},
           {"dataset_hash", r.dataset_hash},
           {"seed", r.seed},
           {"selected", one_based(r.selected)},
           {"weights", r.weights},
           {"mi_trace", trace},
           {"config", r.config},
           {"metadata", {{"wall_time_seconds", r.wall_time_seconds}, {"timestamp", r.timestamp}}}};
    if (r.truth) {
        j["truth"] = one_based(*r.truth);
        j["classification"] = to_string(classify_selection(r.selected, *r.truth));
    } else {
        j["truth"] = nullptr;
        j["classification"] = nullptr;
    }
    return j;
}

// ---- schema checks ------------------------------------------------------------

namespace detail {

inline void require(const json& j, const std::string& key, bool ok, const std::string& what) {
    if (!ok) {
        throw SchemaError("report field '" + key + "' " + what);
    }
}

inline const json& field(const json& j, const std::string& key) {
    if (!j.is_object() || !j.contains(key)) {
        throw SchemaError("report is missing field '" + key + "'");
    }
    return j.at(key);
}

inline void index_array(const json& j, const std::string& key) {
    const json& v = field(j, key);
    require(j, key, v.is_array(), "must be an array");
    for (const auto& e : v) {
        require(j, key, e.is_number_unsigned() && e.get<std::size_t>() >= 1, "must hold 1-based indices");
    }
}

inline void common(const json& j, const char* kind) {
    const json& version = field(j, "schema_version");
    require(j, "schema_version", version.is_number_integer() && version.get<int>() == kSchemaVersion,
            "must be " + std::to_string(kSchemaVersion));
    require(j, "kind", field(j, "kind") == kind, std::string("must be \"") + kind + "\"");
    require(j, "dataset_hash", field(j, "dataset_hash").is_string(), "must be a string");
    require(j, "seed", field(j, "seed").is_number_unsigned(), "must be a non-negative integer");
    const json& meta = field(j, "metadata");
    require(j, "metadata", meta.is_object(), "must be an object");
}

} // namespace detail

/// Throws SchemaError unless `j` is a well-formed selection report.
inline void validate_selection(const json& j) {
    detail::common(j, "selection");
    const json& method = detail::field(j, "method");
    detail::require(j, "method", method == "minerva" || method == "ksg", "must be \"minerva\" or \"ksg\"");
    detail::require(j, "dataset", detail::field(j, "dataset").is_string(), "must be a string");
    detail::index_array(j, "selected");
    const json& weights = detail::field(j, "weights");
    detail::require(j, "weights", weights.is_array(), "must be an array");
    for (const auto& w : weights) {
        detail::require(j, "weights", w.is_number(), "must hold numbers");
    }
    const json& trace = detail::field(j, "mi_trace");
    detail::require(j, "mi_trace", trace.is_array(), "must be an array");
    for (const auto& t : trace) {
        detail::require(j, "mi_trace", t.is_object() && t.contains("step") && t.contains("mi_nats") &&
                                           t.at("step").is_number_unsigned() && t.at("mi_nats").is_number(),
                        "entries need integer 'step' and numeric 'mi_nats'");
    }
    detail::require(j, "config", detail::field(j, "config").is_object(), "must be an object");
    const json& truth = detail::field(j, "truth");
    const json& cls = detail::field(j, "classification");
    if (truth.is_null()) {
        detail::require(j, "classification", cls.is_null(), "must be null without truth");
    } else {
        detail::index_array(j, "truth");
        detail::require(j, "classification",
                        cls == "Exact" || cls == "NonExactTypeI" || cls == "NonExactTypeII",
                        "must be Exact, NonExactTypeI or NonExactTypeII");
    }
}

/// Throws SchemaError unless `j` is a well-formed metrics document.
inline void validate_metrics(const json& j) {
    detail::common(j, "metrics");
    detail::index_array(j, "selected");
    for (const char* key : {"r2_in_sample", "r2_out_of_sample"}) {
        detail::require(j, key, detail::field(j, key).is_number(), "must be a number");
    }
    for (const char* key : {"n_train", "n_test"}) {
        detail::require(j, key, detail::field(j, key).is_number_unsigned(), "must be a non-negative integer");
    }
    detail::require(j, "regressor", detail::field(j, "regressor").is_object(), "must be an object");
    const json& method = detail::field(j, "method");
    detail::require(j, "method", method.is_null() || method.is_string(), "must be a string or null");
}

/// A run over several seeds: {"schema_version", "kind": "selection_set", "reports": [...]}, seed order.
inline json make_set(std::vector<json> reports) {
    std::stable_sort(reports.begin(), reports.end(),
                     [](const json& a, const json& b) { return a.at("seed").get<std::uint64_t>() < b.at("seed").get<std::uint64_t>(); });
    return {{"schema_version", kSchemaVersion}, {"kind", "selection_set"}, {"reports", reports}};
}

/// Validates any document kind this module writes.
inline void validate(const json& j) {
    const std::string kind = j.is_object() && j.contains("kind") && j.at("kind").is_string()
                                 ? j.at("kind").get<std::string>()
                                 : std::string();
    if (kind == "selection") {
        validate_selection(j);
    } else if (kind == "metrics") {
        validate_metrics(j);
    } else if (kind == "selection_set") {
        const json& reports = detail::field(j, "reports");
        detail::require(j, "reports", reports.is_array(), "must be an array");
        for (const auto& r : reports) {
            validate_selection(r);
        }
    } else {
        throw SchemaError("unknown report kind '" + kind + "'");
    }
}

/// Hash of the document without its metadata, for reproducibility checks.
inline std::string content_hash(json j) {
    if (j.is_object()) {
        j.erase("metadata");
        if (j.contains("reports")) {
            for (auto& r : j["reports"]) {
                r.erase("metadata");
            }
        }
    }
    return hex64(fnv1a64(j.dump()));
}

/// Validates, then writes pretty-printed JSON.
inline void write(const std::filesystem::path& path, const json& j) {
    validate(j);
    write_text_file(path, j.dump(2) + "\n");
}

inline json read(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw SchemaError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    validate(j);
    return j;
}

// ---- metrics ------------------------------------------------------------------

struct MetricsContext {
    std::string dataset;
    std::string dataset_hash;
    std::optional<std::string> method; ///< method of the selection being evaluated, if known
    std::vector<std::size_t> selected; ///< 0-based
    evaluate::KnnConfig knn;
    double wall_time_seconds = 0.0;
    std::string timestamp;
};

inline json to_json(const MetricsContext& ctx, const evaluate::Metrics& m) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "metrics"},
            {"method", ctx.method ? json(*ctx.method) : json(nullptr)},
            {"dataset", ctx.dataset},
            {"dataset_hash", ctx.dataset_hash},
            {"seed", ctx.knn.seed},
            {"selected", one_based(ctx.selected)},
            {"regressor", {{"name", "knn"}, {"k", ctx.knn.k}, {"train_fraction", ctx.knn.train_fraction}}},
            {"r2_in_sample", m.r2_in_sample},
            {"r2_out_of_sample", m.r2_out_of_sample},
            {"n_train", m.n_train},
            {"n_test", m.n_test},
            {"warnings", m.warnings},
            {"metadata", {{"wall_time_seconds", ctx.wall_time_seconds}, {"timestamp", ctx.timestamp}}}};
}

// ---- collation ----------------------------------------------------------------

struct Row {
    std::string method;
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::vector<std::size_t> selected; ///< 1-based
    std::string classification;        ///< empty when unknown
    std::optional<double> r2_in_sample;
    std::optional<double> r2_out_of_sample;
};

/// One row per (method, dataset, seed), sorted by method then seed. Metrics
/// documents attach to the selection row with the same method, seed and
/// selected set; unmatched metrics become rows of their own.
inline std::vector<Row> collate(const std::vector<json>& documents) {
    if (documents.empty()) {
        throw ConfigError("no reports");
    }
    std::vector<json> selections;
    std::vector<json> metrics;
    for (const auto& d : documents) {
        validate(d);
        const std::string kind = d.at("kind");
        if (kind == "selection_set") {
            for (const auto& r : d.at("reports")) {
                selections.push_back(r);
            }
        } else if (kind == "selection") {
            selections.push_back(d);
        } else {
            metrics.push_back(d);
        }
    }
    std::string hash;
    for (const auto* group : {&selections, &metrics}) {
        for (const auto& d : *group) {
            const std::string h = d.at("dataset_hash");
            if (hash.empty()) {
                hash = h;
            } else if (h != hash) {
                throw ConfigError("reports disagree on the dataset hash (" + hash + " vs " + h + ")");
            }
        }
    }

    std::vector<Row> rows;
    for (const auto& s : selections) {
        Row r;
        r.method = s.at("method");
        r.dataset_hash = s.at("dataset_hash");
        r.seed = s.at("seed");
        r.selected = s.at("selected").get<std::vector<std::size_t>>();
        if (!s.at("classification").is_null()) {
            r.classification = s.at("classification");
        }
        rows.push_back(std::move(r));
    }
    for (const auto& m : metrics) {
        const std::string method = m.at("method").is_null() ? std::string("-") : m.at("method").get<std::string>();
        const auto selected = m.at("selected").get<std::vector<std::size_t>>();
        const std::uint64_t seed = m.at("seed");
        auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) {
            return r.method == method && r.seed == seed && r.selected == selected && !r.r2_out_of_sample;
        });
        if (it == rows.end()) {
            Row r;
            r.method = method;
            r.dataset_hash = m.at("dataset_hash");
            r.seed = seed;
            r.selected = selected;
            rows.push_back(std::move(r));
            it = rows.end() - 1;
        }
        it->r2_in_sample = m.at("r2_in_sample").get<double>();
        it->r2_out_of_sample = m.at("r2_out_of_sample").get<double>();
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return std::tie(a.method, a.seed) < std::tie(b.method, b.seed); });
    return rows;
}

namespace detail {
inline std::string join(const std::vector<std::size_t>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::string fixed(const std::optional<double>& v) {
    if (!v) {
        return "";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(4) << *v;
    return ss.str();
}
} // namespace detail

inline std::string to_csv(const std::vector<Row>& rows) {
    std::string out = "method,dataset_hash,seed,n_selected,selected,classification,r2_in_sample,r2_out_of_sample\n";
    for (const auto& r : rows) {
        out += r.method + "," + r.dataset_hash + "," + std::to_string(r.seed) + "," + std::to_string(r.selected.size()) +
               ",\"" + detail::join(r.selected, ' ') + "\"," + r.classification + "," + detail::fixed(r.r2_in_sample) +
               "," + detail::fixed(r.r2_out_of_sample) + "\n";
    }
    return out;
}

inline std::string to_text(const std::vector<Row>& rows) {
    std::ostringstream ss;
    ss << std::left << std::setw(9) << "method" << std::setw(6) << "seed" << std::setw(16) << "classification"
       << std::setw(9) << "R2 in" << std::setw(9) << "R2 out" << "selected\n";
    for (const auto& r : rows) {
        ss << std::left << std::setw(9) << r.method << std::setw(6) << r.seed << std::setw(16)
           << (r.classification.empty() ? "-" : r.classification) << std::setw(9)
           << (r.r2_in_sample ? detail::fixed(r.r2_in_sample) : "-") << std::setw(9)
           << (r.r2_out_of_sample ? detail::fixed(r.r2_out_of_sample) : "-") << detail::join(r.selected, ',') << "\n";
    }
    if (!rows.empty()) {
        ss << "dataset " << rows.front().dataset_hash << "\n";
    }
    return ss.str();
}

} // namespace minerva::report
