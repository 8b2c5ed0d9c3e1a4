#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfmilp/data.hpp"
#include "cfmilp/stats.hpp"

namespace cfmilp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Direction { Free, Increase, Decrease };

inline Direction direction_from_string(const std::string& s) {
    if (s == "free")
        return Direction::Free;
    if (s == "increase")
        return Direction::Increase;
    if (s == "decrease")
        return Direction::Decrease;
    throw ConfigError("unknown direction '" + s + "' (expected free, increase or decrease)");
}

inline const char* to_string(Direction d) {
    switch (d) {
    case Direction::Free: return "free";
    case Direction::Increase: return "increase";
    case Direction::Decrease: return "decrease";
    }
    return "?";
}

struct FeatureRule {
    bool mutable_ = true;
    Direction direction = Direction::Free;
};

struct ActionConfig {
    std::size_t grid_size = 10;
    std::size_t max_changes = 4;
    std::map<std::string, FeatureRule> features;

    void validate() const {
        if (grid_size < 2)
            throw ConfigError("grid_size must be at least 2");
        if (max_changes < 1)
            throw ConfigError("max_changes must be at least 1");
    }
};

inline ActionConfig action_config_from_json(const nlohmann::json& j) {
    ActionConfig c;
    try {
        c.grid_size = j.value("grid_size", c.grid_size);
        c.max_changes = j.value("max_changes", c.max_changes);
        if (j.contains("features")) {
            for (const auto& [name, f] : j.at("features").items()) {
                FeatureRule r;
                r.mutable_ = f.value("mutable", true);
                r.direction = direction_from_string(f.value("direction", std::string("free")));
                c.features[name] = r;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed action config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json action_config_to_json(const ActionConfig& c) {
    nlohmann::json j{{"grid_size", c.grid_size}, {"max_changes", c.max_changes}};
    j["features"] = nlohmann::json::object();
    for (const auto& [name, r] : c.features)
        j["features"][name] = {{"mutable", r.mutable_}, {"direction", to_string(r.direction)}};
    return j;
}

/// One actionable original feature. Numeric and binary dimensions carry
/// real offsets; categorical dimensions carry target category ids.
struct ActionDimension {
    std::string name;
    std::size_t group = 0;
    bool categorical = false;
    bool mutable_ = true;
    Direction direction = Direction::Free;
    std::vector<double> candidates;
    std::vector<double> values; // numeric only: the grid value x-bar_d + a_{d,i} lands on
    std::size_t zero = 0;

    std::size_t size() const { return candidates.size(); }
};

struct ActionSpace {
    std::vector<double> origin; // encoded x-bar
    EncodingMap map;
    std::vector<ActionDimension> dims;
    std::size_t max_changes = 4;

    std::size_t num_candidates() const {
        std::size_t s = 0;
        for (const auto& d : dims)
            s += d.size();
        return s;
    }

    /// Product of candidate counts, saturating at `cap + 1`.
    std::size_t combinations(std::size_t cap) const {
        std::size_t p = 1;
        for (const auto& d : dims) {
            if (p > cap / std::max<std::size_t>(1, d.size()))
                return cap + 1;
            p *= d.size();
        }
        return p;
    }

    /// Encoded-column changes made by candidate i of dimension d.
    std::vector<std::pair<std::size_t, double>> displacement(std::size_t d, std::size_t i) const {
        const auto& dim = dims[d];
        const auto& g = map.groups[dim.group];
        if (i == dim.zero)
            return {};
        if (!dim.categorical)
            return {{g.first, dim.candidates[i]}};
        const auto to = static_cast<std::size_t>(dim.candidates[i]);
        const auto from = static_cast<std::size_t>(dim.candidates[dim.zero]);
        return {{g.first + from, -1.0}, {g.first + to, 1.0}};
    }

    /// x-bar + a for a choice of one candidate index per dimension.
    std::vector<double> apply(std::span<const std::size_t> choice) const {
        if (choice.size() != dims.size())
            throw std::invalid_argument("action choice has wrong length");
        std::vector<double> x = origin;
        for (std::size_t d = 0; d < dims.size(); ++d) {
            if (!dims[d].categorical) {
                x[map.groups[dims[d].group].first] = dims[d].values[choice[d]];
                continue;
            }
            for (const auto& [col, delta] : displacement(d, choice[d]))
                x[col] += delta;
        }
        return x;
    }

    std::size_t changes(std::span<const std::size_t> choice) const {
        std::size_t c = 0;
        for (std::size_t d = 0; d < dims.size(); ++d)
            c += choice[d] != dims[d].zero;
        return c;
    }

    std::vector<std::size_t> zero_choice() const {
        std::vector<std::size_t> c(dims.size());
        for (std::size_t d = 0; d < dims.size(); ++d)
            c[d] = dims[d].zero;
        return c;
    }

    /// Per-feature displacement for reporting: the offset for numeric
    /// dimensions, the target category for categorical ones.
    nlohmann::json describe(std::span<const std::size_t> choice) const {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t d = 0; d < dims.size(); ++d) {
            if (choice[d] == dims[d].zero)
                continue;
            const auto& dim = dims[d];
            if (dim.categorical)
                j[dim.name] = map.groups[dim.group].categories[static_cast<std::size_t>(dim.candidates[choice[d]])];
            else
                j[dim.name] = dim.candidates[choice[d]];
        }
        return j;
    }
};

/// Nearest-rank quantiles at probabilities g / (G - 1), g = 0..G-1,
/// deduplicated and ascending.
inline std::vector<double> quantile_grid(std::vector<double> column, std::size_t grid_size) {
    if (column.empty())
        throw DataError("cannot build a quantile grid from an empty column");
    std::sort(column.begin(), column.end());
    const auto n = static_cast<double>(column.size());
    std::vector<double> out;
    for (std::size_t g = 0; g < grid_size; ++g) {
        const double p = static_cast<double>(g) / static_cast<double>(grid_size - 1);
        const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p * n - 1e-12)));
        out.push_back(column[std::min(column.size(), rank) - 1]);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline ActionSpace build_action_space(std::span<const double> origin, const EncodedDataset& train,
                                      const ActionConfig& cfg) {
    cfg.validate();
    if (origin.size() != train.map.width())
        throw std::invalid_argument("instance width does not match the encoding");
    if (train.size() == 0)
        throw DataError("cannot build an action space from an empty training set");
    for (const auto& [name, rule] : cfg.features) {
        bool known = false;
        for (const auto& g : train.map.groups)
            known = known || g.name == name;
        if (!known)
            throw ConfigError("action config names unknown feature " + name);
    }
    ActionSpace space;
    space.origin.assign(origin.begin(), origin.end());
    space.map = train.map;
    space.max_changes = cfg.max_changes;
    for (std::size_t f = 0; f < train.map.groups.size(); ++f) {
        const auto& g = train.map.groups[f];
        ActionDimension dim;
        dim.name = g.name;
        dim.group = f;
        dim.categorical = g.kind == FeatureKind::Categorical;
        if (auto it = cfg.features.find(g.name); it != cfg.features.end()) {
            dim.mutable_ = it->second.mutable_;
            dim.direction = it->second.direction;
        }
        if (dim.categorical) {
            if (dim.direction != Direction::Free)
                throw ConfigError("categorical feature " + g.name + " cannot have a direction");
            std::size_t current = 0;
            for (std::size_t k = 0; k < g.width; ++k)
                if (origin[g.first + k] > origin[g.first + current])
                    current = k;
            if (dim.mutable_) {
                for (std::size_t k = 0; k < g.width; ++k)
                    dim.candidates.push_back(static_cast<double>(k));
                dim.zero = current;
            } else {
                dim.candidates = {static_cast<double>(current)};
                dim.zero = 0;
            }
        } else {
            const double xbar = origin[g.first];
            std::vector<double> values{xbar};
            if (dim.mutable_) {
                for (double v : quantile_grid(train.x.column(g.first), cfg.grid_size)) {
                    if (v == xbar || (dim.direction == Direction::Increase && v < xbar) ||
                        (dim.direction == Direction::Decrease && v > xbar))
                        continue;
                    values.push_back(v);
                }
            }
            std::sort(values.begin(), values.end());
            dim.zero = static_cast<std::size_t>(std::find(values.begin(), values.end(), xbar) - values.begin());
            for (double v : values)
                dim.candidates.push_back(v == xbar ? 0.0 : v - xbar);
            dim.values = std::move(values);
        }
        if (dim.candidates.empty())
            throw ConfigError("feature " + g.name + " has no candidate actions");
        space.dims.push_back(std::move(dim));
    }
    return space;
}

/// c[n][p] for flat candidate index p, row totals C[n] and the big-M bound.
struct MilpConstants {
    std::vector<std::size_t> offset; // first flat index of each dimension
    std::vector<std::vector<double>> c;
    std::vector<double> C;
    double M = 0.0;

    std::size_t flat(std::size_t d, std::size_t i) const { return offset[d] + i; }
    std::size_t num_references() const { return C.size(); }
};

/// Delta restricted to one action dimension's encoded columns.
inline double dimension_distance(const ActionSpace& space, const DeltaMetric& metric, std::size_t d, std::size_t i,
                                 std::span<const double> ref) {
    const auto& g = space.map.groups[space.dims[d].group];
    if (!space.dims[d].categorical)
        return metric.component(g.first, space.dims[d].values[i], ref[g.first]);
    double s = 0.0;
    auto disp = space.displacement(d, i);
    for (std::size_t k = 0; k < g.width; ++k) {
        const std::size_t col = g.first + k;
        double v = space.origin[col];
        for (const auto& [c, delta] : disp)
            if (c == col)
                v += delta;
        s += metric.component(col, v, ref[col]);
    }
    return s;
}

inline MilpConstants precompute_constants(const ActionSpace& space, const Matrix& references, const DeltaMetric& metric) {
    if (references.cols != space.map.width() || metric.dim() != space.map.width())
        throw std::invalid_argument("reference set, metric and action space widths differ");
    MilpConstants k;
    std::size_t p = 0;
    for (const auto& d : space.dims) {
        k.offset.push_back(p);
        p += d.size();
    }
    k.c.assign(references.rows, std::vector<double>(p, 0.0));
    k.C.assign(references.rows, 0.0);
    for (std::size_t n = 0; n < references.rows; ++n) {
        auto ref = references.row(n);
        for (std::size_t d = 0; d < space.dims.size(); ++d) {
            double best = 0.0;
            for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
                const double v = dimension_distance(space, metric, d, i, ref);
                k.c[n][k.flat(d, i)] = v;
                best = std::max(best, v);
            }
            k.C[n] += best;
        }
        k.M = std::max(k.M, k.C[n]);
    }
    return k;
}

/// Visits every choice with at most `budget` changed dimensions, in
/// lexicographic order of candidate indices. Stops early if `fn` returns false.
inline void for_each_action(const ActionSpace& space, std::size_t budget,
                            const std::function<bool(const std::vector<std::size_t>&)>& fn) {
    const std::size_t D = space.dims.size();
    std::vector<std::size_t> choice(D, 0);
    while (true) {
        if (space.changes(choice) <= budget && !fn(choice))
            return;
        std::size_t d = D;
        while (d > 0) {
            --d;
            if (++choice[d] < space.dims[d].size())
                break;
            choice[d] = 0;
            if (d == 0)
                return;
        }
        if (D == 0)
            return;
    }
}

} // namespace cfmilp
