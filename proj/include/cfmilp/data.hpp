#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cfmilp {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CsvParseError : public DataError {
public:
    CsvParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::vector<double> row_vector(std::size_t r) const {
        auto s = row(r);
        return {s.begin(), s.end()};
    }
    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows);
        for (std::size_t r = 0; r < rows; ++r)
            out[r] = (*this)(r, c);
        return out;
    }
};

enum class FeatureKind { Numeric, Categorical, Binary };

inline const char* to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::Numeric: return "numeric";
    case FeatureKind::Categorical: return "categorical";
    case FeatureKind::Binary: return "binary";
    }
    return "?";
}

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::vector<std::string> categories;
};

struct DatasetSchema {
    std::vector<FeatureSpec> features;
    std::string target;
    std::string positive_label;
    // Cell values treated as missing; rows containing one are dropped.
    std::vector<std::string> missing_tokens{""};

    void validate() const {
        std::set<std::string> seen;
        if (features.empty())
            throw SchemaError("schema has no features");
        for (const auto& f : features) {
            if (f.name.empty())
                throw SchemaError("feature with empty name");
            if (!seen.insert(f.name).second)
                throw SchemaError("duplicate feature name: " + f.name);
            if (f.kind == FeatureKind::Categorical) {
                if (f.categories.size() < 2)
                    throw SchemaError("categorical feature " + f.name + " needs at least 2 categories");
                std::set<std::string> cats(f.categories.begin(), f.categories.end());
                if (cats.size() != f.categories.size())
                    throw SchemaError("duplicate category in " + f.name);
            }
        }
        if (target.empty())
            throw SchemaError("schema has no target column");
        if (seen.count(target))
            throw SchemaError("target column " + target + " is also listed as a feature");
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].name == name)
                return i;
        throw SchemaError("unknown feature: " + name);
    }
};

inline FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "numeric")
        return FeatureKind::Numeric;
    if (s == "categorical")
        return FeatureKind::Categorical;
    if (s == "binary")
        return FeatureKind::Binary;
    throw SchemaError("unknown feature kind: " + s);
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
    DatasetSchema s;
    try {
        for (const auto& f : j.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.kind = feature_kind_from_string(f.at("kind").get<std::string>());
            if (f.contains("categories"))
                spec.categories = f.at("categories").get<std::vector<std::string>>();
            s.features.push_back(std::move(spec));
        }
        s.target = j.at("target").get<std::string>();
        s.positive_label = j.at("positive_label").get<std::string>();
        if (j.contains("missing_tokens"))
            s.missing_tokens = j.at("missing_tokens").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed schema: ") + e.what());
    }
    s.validate();
    return s;
}

inline nlohmann::json schema_to_json(const DatasetSchema& s) {
    nlohmann::json j;
    j["features"] = nlohmann::json::array();
    for (const auto& f : s.features) {
        nlohmann::json fj{{"name", f.name}, {"kind", to_string(f.kind)}};
        if (f.kind == FeatureKind::Categorical)
            fj["categories"] = f.categories;
        j["features"].push_back(fj);
    }
    j["target"] = s.target;
    j["positive_label"] = s.positive_label;
    j["missing_tokens"] = s.missing_tokens;
    return j;
}

inline DatasetSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open schema file " + path);
    try {
        return schema_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("schema " + path + " is not valid JSON: " + e.what());
    }
}

/// Parsed rows before encoding. Categorical values are stored as category
/// indices, binary values as 0/1, labels as raw strings.
struct RawDataset {
    DatasetSchema schema;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    std::size_t dropped = 0;

    std::size_t size() const { return rows.size(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Splits one CSV record. Quoted fields may contain commas and doubled quotes.
// Records spanning lines are not supported.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            if (!trim(cur).empty())
                throw CsvParseError(line_no, "unexpected quote inside field");
            cur.clear();
            quoted = was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur.push_back(c);
        }
    }
    if (quoted)
        throw CsvParseError(line_no, "unterminated quoted field");
    out.push_back(was_quoted ? cur : trim(cur));
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty())
        return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

} // namespace detail

/// Parses CSV text (header row first) against `schema`. Rows with any
/// missing cell are dropped and counted.
inline RawDataset parse_csv(std::istream& in, const DatasetSchema& schema) {
    schema.validate();
    RawDataset ds;
    ds.schema = schema;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
            line.erase(0, 3);
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (detail::trim(line).empty())
            continue;
        header = detail::split_csv_line(line, line_no);
        break;
    }
    if (header.empty())
        throw CsvParseError(line_no, "missing header row");

    const std::size_t nf = schema.features.size();
    std::vector<std::size_t> feature_col(nf, header.size());
    std::size_t target_col = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == schema.target) {
            target_col = c;
            continue;
        }
        for (std::size_t f = 0; f < nf; ++f)
            if (schema.features[f].name == header[c])
                feature_col[f] = c;
    }
    for (std::size_t f = 0; f < nf; ++f)
        if (feature_col[f] == header.size())
            throw SchemaError("column " + schema.features[f].name + " missing from CSV header");
    if (target_col == header.size())
        throw SchemaError("target column " + schema.target + " missing from CSV header");

    std::vector<std::unordered_map<std::string, std::size_t>> cat_index(nf);
    for (std::size_t f = 0; f < nf; ++f)
        for (std::size_t k = 0; k < schema.features[f].categories.size(); ++k)
            cat_index[f][schema.features[f].categories[k]] = k;
    auto is_missing = [&](const std::string& v) {
        return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), v) !=
               schema.missing_tokens.end();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (detail::trim(line).empty())
            continue;
        auto cells = detail::split_csv_line(line, line_no);
        if (cells.size() != header.size())
            throw CsvParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                             std::to_string(cells.size()));
        bool missing = is_missing(cells[target_col]);
        for (std::size_t f = 0; f < nf && !missing; ++f)
            missing = is_missing(cells[feature_col[f]]);
        if (missing) {
            ++ds.dropped;
            continue;
        }
        std::vector<double> row(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            const auto& spec = schema.features[f];
            const auto& cell = cells[feature_col[f]];
            switch (spec.kind) {
            case FeatureKind::Categorical: {
                auto it = cat_index[f].find(cell);
                if (it == cat_index[f].end())
                    throw SchemaError("line " + std::to_string(line_no) + ": unknown category '" + cell +
                                      "' for feature " + spec.name);
                row[f] = static_cast<double>(it->second);
                break;
            }
            case FeatureKind::Binary: {
                double v;
                if (!detail::parse_double(cell, v) || (v != 0.0 && v != 1.0))
                    throw CsvParseError(line_no, "binary feature " + spec.name + " has value '" + cell + "'");
                row[f] = v;
                break;
            }
            case FeatureKind::Numeric: {
                double v;
                if (!detail::parse_double(cell, v))
                    throw CsvParseError(line_no, "numeric feature " + spec.name + " has value '" + cell + "'");
                row[f] = v;
                break;
            }
            }
        }
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(cells[target_col]);
    }
    return ds;
}

inline RawDataset load_csv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open CSV file " + path);
    return parse_csv(in, schema);
}

/// Links an original feature to its contiguous block of encoded columns.
struct FeatureGroup {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::size_t first = 0;
    std::size_t width = 1;
    std::vector<std::string> categories;
};

struct EncodingMap {
    std::vector<FeatureGroup> groups;
    std::vector<std::string> column_names;
    std::size_t width() const { return column_names.size(); }

    /// Encoded columns that are neither one-hot nor binary.
    std::vector<std::size_t> numeric_columns() const {
        std::vector<std::size_t> out;
        for (const auto& g : groups)
            if (g.kind == FeatureKind::Numeric)
                out.push_back(g.first);
        return out;
    }
};

struct EncodedDataset {
    Matrix x;
    std::vector<int> y; // +1 accepted, -1 rejected
    EncodingMap map;

    std::size_t size() const { return x.rows; }
};

inline EncodingMap make_encoding_map(const DatasetSchema& schema) {
    EncodingMap map;
    std::size_t col = 0;
    for (const auto& f : schema.features) {
        FeatureGroup g{f.name, f.kind, col, 1, f.categories};
        if (f.kind == FeatureKind::Categorical) {
            g.width = f.categories.size();
            for (const auto& c : f.categories)
                map.column_names.push_back(f.name + "=" + c);
        } else {
            map.column_names.push_back(f.name);
        }
        col += g.width;
        map.groups.push_back(std::move(g));
    }
    return map;
}

inline std::vector<double> encode_row(const EncodingMap& map, std::span<const double> raw) {
    std::vector<double> out(map.width(), 0.0);
    for (std::size_t f = 0; f < map.groups.size(); ++f) {
        const auto& g = map.groups[f];
        if (g.kind == FeatureKind::Categorical)
            out[g.first + static_cast<std::size_t>(raw[f])] = 1.0;
        else
            out[g.first] = raw[f];
    }
    return out;
}

/// One-hot encodes categoricals, copies numeric and binary values, and maps
/// the schema's positive label to +1 and everything else to -1.
inline EncodedDataset encode(const RawDataset& raw) {
    EncodedDataset ds;
    ds.map = make_encoding_map(raw.schema);
    ds.x = Matrix(raw.size(), ds.map.width());
    ds.y.resize(raw.size());
    for (std::size_t r = 0; r < raw.size(); ++r) {
        auto enc = encode_row(ds.map, raw.rows[r]);
        std::copy(enc.begin(), enc.end(), ds.x.row(r).begin());
        ds.y[r] = raw.labels[r] == raw.schema.positive_label ? 1 : -1;
    }
    return ds;
}

/// Inverse of encode_row: original values as strings.
inline std::vector<std::string> decode_row(const EncodingMap& map, std::span<const double> encoded) {
    std::vector<std::string> out;
    for (const auto& g : map.groups) {
        if (g.kind == FeatureKind::Categorical) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < g.width; ++k)
                if (encoded[g.first + k] > encoded[g.first + best])
                    best = k;
            out.push_back(g.categories[best]);
        } else {
            std::ostringstream s;
            s.precision(17);
            s << encoded[g.first];
            out.push_back(s.str());
        }
    }
    return out;
}

inline EncodedDataset subset(const EncodedDataset& ds, std::span<const std::size_t> idx) {
    EncodedDataset out;
    out.map = ds.map;
    out.x = Matrix(idx.size(), ds.x.cols);
    out.y.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        auto src = ds.x.row(idx[k]);
        std::copy(src.begin(), src.end(), out.x.row(k).begin());
        out.y[k] = ds.y[idx[k]];
    }
    return out;
}

/// Population mean and standard deviation per column; columns outside the
/// scaled set keep mean 0 and std 1 so apply() is the identity there.
struct StandardScaler {
    std::vector<double> means;
    std::vector<double> stds;
    std::vector<std::size_t> scaled_columns;

    std::size_t width() const { return means.size(); }

    std::vector<double> apply(std::span<const double> x) const {
        if (x.size() != means.size())
            throw DataError("scaler width " + std::to_string(means.size()) + " does not match instance width " +
                            std::to_string(x.size()));
        std::vector<double> out(x.size());
        for (std::size_t d = 0; d < x.size(); ++d)
            out[d] = (x[d] - means[d]) / stds[d];
        return out;
    }
};

inline StandardScaler fit_scaler(const Matrix& x, std::span<const std::size_t> columns,
                                 const std::vector<std::string>& column_names = {}) {
    StandardScaler s;
    s.means.assign(x.cols, 0.0);
    s.stds.assign(x.cols, 1.0);
    if (x.rows == 0)
        throw DataError("cannot fit a scaler on an empty matrix");
    for (std::size_t c : columns) {
        if (c >= x.cols)
            throw DataError("scaled column " + std::to_string(c) + " out of range");
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r)
            mean += x(r, c);
        mean /= static_cast<double>(x.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r)
            var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(x.rows);
        const double sd = std::sqrt(var);
        if (!(sd > 0.0)) {
            const std::string name = c < column_names.size() ? column_names[c] : "#" + std::to_string(c);
            throw DataError("degenerate column " + name + ": zero variance");
        }
        s.means[c] = mean;
        s.stds[c] = sd;
        s.scaled_columns.push_back(c);
    }
    return s;
}

inline std::vector<double> apply_scaler(const StandardScaler& s, std::span<const double> x) { return s.apply(x); }

inline Matrix apply_scaler(const StandardScaler& s, const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto v = s.apply(x.row(r));
        std::copy(v.begin(), v.end(), out.row(r).begin());
    }
    return out;
}

/// Deterministic 64-bit generator with a portable bounded-integer draw;
/// std distributions are implementation-defined, so they are avoided where
/// results must be reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    std::uint64_t next() { return eng_(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double normal() {
        // Box-Muller; discards the second variate to stay stateless.
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 eng_;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Shuffles row indices under `seed`; the first floor(ratio * n) go to train.
inline SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split ratio must lie in (0, 1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
    SplitIndices out;
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return out;
}

inline std::pair<EncodedDataset, EncodedDataset> split(const EncodedDataset& ds, double ratio, std::uint64_t seed) {
    auto s = split_indices(ds.size(), ratio, seed);
    return {subset(ds, s.train), subset(ds, s.test)};
}

inline void write_encoded_csv(std::ostream& out, const EncodedDataset& ds) {
    for (const auto& name : ds.map.column_names)
        out << name << ",";
    out << "label\n";
    out.precision(17);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.x.cols; ++c)
            out << ds.x(r, c) << ",";
        out << ds.y[r] << "\n";
    }
}

} // namespace cfmilp
