#pragma once

// Column-typed tables and their CSV representation.
//
// CSV header cells are `name:kind` with kind in {cat, float, target_cat,
// target_float}; exactly one target column is required. Categorical codes are
// 1-based in files and 0-based in memory. Floats are written in shortest
// round-trip form so the file bytes (and hence the dataset hash) are a pure
// function of the values.

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "minerva/errors.hpp"

namespace minerva {

enum class ColumnKind { Categorical, Float };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Float;
    std::size_t cardinality = 0; ///< vocabulary size; 0 for float columns
    std::vector<std::int32_t> codes; ///< categorical values, 0-based
    std::vector<double> values;      ///< float values

    bool is_categorical() const noexcept { return kind == ColumnKind::Categorical; }
    std::size_t size() const noexcept { return is_categorical() ? codes.size() : values.size(); }

    /// Numeric view of row `r` (the code itself for categorical columns).
    double numeric(std::size_t r) const {
        return is_categorical() ? static_cast<double>(codes[r]) : values[r];
    }

    std::vector<double> as_numeric() const {
        if (!is_categorical()) {
            return values;
        }
        return {codes.begin(), codes.end()};
    }

    static Column categorical(std::string name, std::size_t cardinality, std::vector<std::int32_t> codes) {
        return Column{std::move(name), ColumnKind::Categorical, cardinality, std::move(codes), {}};
    }

    static Column floating(std::string name, std::vector<double> values) {
        return Column{std::move(name), ColumnKind::Float, 0, {}, std::move(values)};
    }
};

struct Dataset {
    std::vector<Column> features;
    Column target;

    std::size_t rows() const noexcept { return target.size(); }
    std::size_t feature_count() const noexcept { return features.size(); }

    /// Throws DataError on ragged columns or out-of-vocabulary codes.
    void validate() const {
        const std::size_t n = rows();
        auto check = [n](const Column& c) {
            if (c.size() != n) {
                throw DataError("column '" + c.name + "' has " + std::to_string(c.size()) + " rows, expected " +
                                std::to_string(n));
            }
            if (c.is_categorical()) {
                if (c.cardinality == 0) {
                    throw DataError("categorical column '" + c.name + "' has zero cardinality");
                }
                for (std::size_t r = 0; r < n; ++r) {
                    if (c.codes[r] < 0 || static_cast<std::size_t>(c.codes[r]) >= c.cardinality) {
                        throw DataError("column '" + c.name + "' row " + std::to_string(r) + ": code " +
                                        std::to_string(c.codes[r] + 1) + " outside 1.." +
                                        std::to_string(c.cardinality));
                    }
                }
            } else {
                for (std::size_t r = 0; r < n; ++r) {
                    if (!std::isfinite(c.values[r])) {
                        throw DataError("column '" + c.name + "' row " + std::to_string(r) + ": non-finite value");
                    }
                }
            }
        };
        for (const auto& c : features) {
            check(c);
        }
        check(target);
    }

    /// Same columns, rows re-indexed by `rows`.
    Dataset subset_rows(const std::vector<std::size_t>& rows) const {
        auto pick = [&rows](const Column& c) {
            Column out{c.name, c.kind, c.cardinality, {}, {}};
            if (c.is_categorical()) {
                out.codes.reserve(rows.size());
                for (auto r : rows) {
                    out.codes.push_back(c.codes[r]);
                }
            } else {
                out.values.reserve(rows.size());
                for (auto r : rows) {
                    out.values.push_back(c.values[r]);
                }
            }
            return out;
        };
        Dataset out;
        for (const auto& c : features) {
            out.features.push_back(pick(c));
        }
        out.target = pick(target);
        return out;
    }

    /// Same rows, only the listed feature columns (in the given order).
    Dataset subset_features(const std::vector<std::size_t>& idx) const {
        Dataset out;
        for (auto i : idx) {
            out.features.push_back(features.at(i));
        }
        out.target = target;
        return out;
    }
};

namespace detail {

inline void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && s.front() == ' ') {
        s.remove_prefix(1);
    }
    return s;
}

} // namespace detail

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string to_csv(const Dataset& data) {
    data.validate();
    std::string out;
    auto header = [&out](const Column& c, bool target) {
        out += c.name;
        out += ':';
        out += target ? (c.is_categorical() ? "target_cat" : "target_float") : (c.is_categorical() ? "cat" : "float");
    };
    for (const auto& c : data.features) {
        header(c, false);
        out += ',';
    }
    header(data.target, true);
    out += '\n';
    auto cell = [&out](const Column& c, std::size_t r) {
        if (c.is_categorical()) {
            out += std::to_string(c.codes[r] + 1);
        } else {
            detail::append_double(out, c.values[r]);
        }
    };
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (const auto& c : data.features) {
            cell(c, r);
            out += ',';
        }
        cell(data.target, r);
        out += '\n';
    }
    return out;
}

/// Hash of the canonical CSV encoding, as 16 hex digits.
inline std::string dataset_hash(const Dataset& data) { return hex64(fnv1a64(to_csv(data))); }

/// Parse CSV text. `cardinalities` (one per categorical feature in column
/// order, then the target if categorical) overrides the vocabulary size inferred from the maximum code.
inline Dataset from_csv(std::string_view text, const std::vector<std::size_t>& cardinalities = {}) {
    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) {
                end = text.size();
            }
            line = detail::trim(text.substr(pos, end - pos));
            pos = end + 1;
            if (!line.empty()) {
                return true;
            }
        }
        return false;
    };

    std::string_view line;
    if (!next_line(line)) {
        throw SchemaError("empty CSV: missing header row");
    }
    struct Slot {
        Column col;
        bool target;
    };
    std::vector<Slot> slots;
    for (auto cell : detail::split(line, ',')) {
        cell = detail::trim(cell);
        const auto colon = cell.rfind(':');
        if (colon == std::string_view::npos) {
            throw SchemaError("header cell '" + std::string(cell) + "' is not of the form name:kind");
        }
        const std::string name(cell.substr(0, colon));
        const std::string_view kind = cell.substr(colon + 1);
        Slot s{Column{name, ColumnKind::Float, 0, {}, {}}, false};
        if (kind == "cat" || kind == "target_cat") {
            s.col.kind = ColumnKind::Categorical;
        } else if (kind != "float" && kind != "target_float") {
            throw SchemaError("column '" + name + "': unknown kind '" + std::string(kind) + "'");
        }
        s.target = kind.starts_with("target_");
        slots.push_back(std::move(s));
    }
    const auto n_targets = std::count_if(slots.begin(), slots.end(), [](const Slot& s) { return s.target; });
    if (n_targets == 0) {
        throw SchemaError("dataset has no target column (kind target_cat or target_float)");
    }
    if (n_targets > 1) {
        throw SchemaError("dataset has " + std::to_string(n_targets) + " target columns, expected 1");
    }

    std::size_t row = 0;
    while (next_line(line)) {
        auto cells = detail::split(line, ',');
        if (cells.size() != slots.size()) {
            throw DataError("row " + std::to_string(row + 1) + ": " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(slots.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto cell = detail::trim(cells[c]);
            Column& col = slots[c].col;
            if (col.is_categorical()) {
                long long v = 0;
                auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (ec != std::errc{} || p != cell.data() + cell.size() || v < 1) {
                    throw DataError("row " + std::to_string(row + 1) + ", column '" + col.name +
                                    "': expected a category code >= 1, got '" + std::string(cell) + "'");
                }
                col.codes.push_back(static_cast<std::int32_t>(v - 1));
            } else {
                double v = 0.0;
                auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (ec != std::errc{} || p != cell.data() + cell.size()) {
                    throw DataError("row " + std::to_string(row + 1) + ", column '" + col.name +
                                    "': expected a number, got '" + std::string(cell) + "'");
                }
                col.values.push_back(v);
            }
        }
        ++row;
    }

    std::size_t card_idx = 0;
    auto finalize = [&](Column& col) {
        if (!col.is_categorical()) {
            return;
        }
        std::size_t card = 0;
        for (auto v : col.codes) {
            card = std::max(card, static_cast<std::size_t>(v) + 1);
        }
        if (card_idx < cardinalities.size()) {
            if (cardinalities[card_idx] < card) {
                throw DataError("column '" + col.name + "': code " + std::to_string(card) +
                                " exceeds declared cardinality " + std::to_string(cardinalities[card_idx]));
            }
            card = cardinalities[card_idx];
        }
        col.cardinality = std::max<std::size_t>(card, 1);
        ++card_idx;
    };
    Dataset data;
    for (auto& s : slots) {
        if (!s.target) {
            finalize(s.col);
            data.features.push_back(std::move(s.col));
        }
    }
    for (auto& s : slots) {
        if (s.target) {
            finalize(s.col);
            data.target = std::move(s.col);
        }
    }
    data.validate();
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

inline Dataset load_csv(const std::filesystem::path& path, const std::vector<std::size_t>& cardinalities = {}) {
    return from_csv(read_text_file(path), cardinalities);
}

/// Categorical cardinalities in column order (target last), as stored in sidecars.
inline std::vector<std::size_t> categorical_cardinalities(const Dataset& data) {
    std::vector<std::size_t> out;
    for (const auto& c : data.features) {
        if (c.is_categorical()) {
            out.push_back(c.cardinality);
        }
    }
    if (data.target.is_categorical()) {
        out.push_back(data.target.cardinality);
    }
    return out;
}

} // namespace minerva
