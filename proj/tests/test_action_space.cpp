#include <gtest/gtest.h>

#include <random>

#include "cfmilp/action_space.hpp"

using namespace cfmilp;

namespace {

EncodedDataset numeric_train(const std::vector<std::vector<double>>& rows) {
    EncodedDataset ds;
    const std::size_t D = rows.front().size();
    for (std::size_t d = 0; d < D; ++d) {
        ds.map.groups.push_back({"f" + std::to_string(d), FeatureKind::Numeric, d, 1, {}});
        ds.map.column_names.push_back("f" + std::to_string(d));
    }
    ds.x = Matrix(rows.size(), D);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t d = 0; d < D; ++d)
            ds.x(r, d) = rows[r][d];
    ds.y.assign(rows.size(), 1);
    return ds;
}

// Two numeric columns around a three-way categorical.
EncodedDataset mixed_train(std::size_t n, std::uint64_t seed) {
    DatasetSchema s;
    s.features = {{"a", FeatureKind::Numeric, {}}, {"c", FeatureKind::Categorical, {"x", "y", "z"}}, {"b", FeatureKind::Numeric, {}}};
    s.target = "t";
    s.positive_label = "1";
    RawDataset raw;
    raw.schema = s;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 10);
    for (std::size_t r = 0; r < n; ++r) {
        raw.rows.push_back({std::round(u(rng)), static_cast<double>(rng() % 3), u(rng)});
        raw.labels.push_back(r % 2 ? "1" : "0");
    }
    return encode(raw);
}

} // namespace

TEST(QuantileGrid, NearestRank) {
    EXPECT_EQ(quantile_grid({3, 1, 2}, 10), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(quantile_grid({5, 5, 5}, 10), (std::vector<double>{5}));
    std::vector<double> col;
    for (int i = 1; i <= 100; ++i) col.push_back(i);
    // ranks ceil(100 g / 4) for g = 0..4
    EXPECT_EQ(quantile_grid(col, 5), (std::vector<double>{1, 25, 50, 75, 100}));
}

TEST(BuildActionSpace, OffsetsDirectionAndImmutables) {
    auto train = numeric_train({{1, 1, 1}, {2, 2, 2}, {3, 3, 3}});
    ActionConfig cfg;
    cfg.features["f1"] = {true, Direction::Increase};
    cfg.features["f2"] = {false, Direction::Free};
    std::vector<double> xbar{2, 2, 2};
    auto space = build_action_space(xbar, train, cfg);
    EXPECT_EQ(space.dims[0].candidates, (std::vector<double>{-1, 0, 1}));
    EXPECT_EQ(space.dims[0].zero, 1u);
    EXPECT_EQ(space.dims[1].candidates, (std::vector<double>{0, 1}));
    EXPECT_EQ(space.dims[2].candidates, (std::vector<double>{0}));
    EXPECT_EQ(space.num_candidates(), 6u);
}

TEST(BuildActionSpace, UnknownFeatureAndBadDirection) {
    auto train = mixed_train(30, 1);
    ActionConfig cfg;
    cfg.features["nope"] = {};
    EXPECT_THROW(build_action_space(train.x.row(0), train, cfg), ConfigError);
    cfg.features.clear();
    cfg.features["c"] = {true, Direction::Increase};
    EXPECT_THROW(build_action_space(train.x.row(0), train, cfg), ConfigError);
}

TEST(BuildActionSpace, CategoricalDimension) {
    auto train = mixed_train(60, 2);
    auto space = build_action_space(train.x.row(0), train, {});
    const auto& cat = space.dims[1];
    EXPECT_TRUE(cat.categorical);
    EXPECT_EQ(cat.candidates, (std::vector<double>{0, 1, 2}));
    EXPECT_EQ(train.x(0, 1 + cat.zero), 1.0);
    const std::size_t other = (cat.zero + 1) % 3;
    auto choice = space.zero_choice();
    choice[1] = other;
    auto cf = space.apply(choice);
    EXPECT_EQ(cf[1 + other], 1.0);
    EXPECT_EQ(cf[1 + cat.zero], 0.0);
    EXPECT_EQ(cf[1] + cf[2] + cf[3], 1.0);
    EXPECT_EQ(space.changes(choice), 1u);
    ActionConfig frozen;
    frozen.features["c"] = {false, Direction::Free};
    auto fixed = build_action_space(train.x.row(0), train, frozen);
    EXPECT_EQ(fixed.dims[1].size(), 1u);
}

TEST(BuildActionSpace, InvariantsOnRandomSpaces) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto train = mixed_train(40, seed);
        ActionConfig cfg;
        cfg.grid_size = 3 + seed % 5;
        cfg.features["a"] = {true, seed % 2 ? Direction::Increase : Direction::Decrease};
        std::vector<double> xbar = train.x.row_vector(seed % 40);
        auto space = build_action_space(xbar, train, cfg);
        for (std::size_t d = 0; d < space.dims.size(); ++d) {
            const auto& dim = space.dims[d];
            ASSERT_LT(dim.zero, dim.size());
            EXPECT_TRUE(space.displacement(d, dim.zero).empty());
            if (dim.categorical) continue;
            EXPECT_EQ(dim.candidates[dim.zero], 0.0);
            const auto col = train.x.column(space.map.groups[dim.group].first);
            const double lo = *std::min_element(col.begin(), col.end());
            const double hi = *std::max_element(col.begin(), col.end());
            for (std::size_t i = 0; i < dim.size(); ++i) {
                const double a = dim.candidates[i];
                EXPECT_NEAR(dim.values[i], dim.values[dim.zero] + a, 1e-12);
                if (i == dim.zero) continue;
                auto choice = space.zero_choice();
                choice[d] = i;
                const double moved = space.apply(choice)[space.map.groups[dim.group].first];
                EXPECT_GE(moved, lo);
                EXPECT_LE(moved, hi);
                if (dim.direction == Direction::Increase) EXPECT_GT(a, 0.0);
                if (dim.direction == Direction::Decrease) EXPECT_LT(a, 0.0);
            }
        }
    }
}

TEST(Constants, HandArithmetic) {
    // 1-D, s = 1, x-bar = 0, A = {0, 2}, x1 = 1: c = {1, 1}, C_1 = 1
    auto train = numeric_train({{0}, {1}, {2}});
    ActionConfig cfg;
    cfg.grid_size = 2;
    auto space = build_action_space(std::vector<double>{0}, train, cfg);
    ASSERT_EQ(space.dims[0].candidates, (std::vector<double>{0, 2}));
    Matrix refs(1, 1, 1.0);
    auto k = precompute_constants(space, refs, DeltaMetric{{1.0}});
    EXPECT_EQ(k.c[0], (std::vector<double>{1, 1}));
    EXPECT_EQ(k.C[0], 1.0);
    EXPECT_EQ(k.M, 1.0);
}

TEST(Constants, SingletonSpaceGivesPlainDistance) {
    auto train = mixed_train(30, 5);
    ActionConfig cfg;
    for (const auto& g : train.map.groups) cfg.features[g.name] = {false, Direction::Free};
    auto space = build_action_space(train.x.row(3), train, cfg);
    auto metric = fit_delta_metric(train.x);
    auto refs = gather_rows(train.x, std::vector<std::size_t>{0, 7, 9});
    auto k = precompute_constants(space, refs, metric);
    for (std::size_t n = 0; n < 3; ++n)
        EXPECT_NEAR(k.C[n], metric(train.x.row(3), refs.row(n)), 1e-12);
}

TEST(Constants, MatchEnumerationOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto train = mixed_train(25, seed + 100);
        ActionConfig cfg;
        cfg.grid_size = 4;
        cfg.max_changes = 3;
        auto space = build_action_space(train.x.row(1), train, cfg);
        ASSERT_LE(space.combinations(10000), 10000u);
        auto metric = fit_delta_metric(train.x);
        auto refs = gather_rows(train.x, std::vector<std::size_t>{2, 3, 4, 5});
        auto k = precompute_constants(space, refs, metric);
        for (std::size_t n = 0; n < refs.rows; ++n) {
            double worst = 0.0;
            for_each_action(space, space.dims.size(), [&](const std::vector<std::size_t>& choice) {
                worst = std::max(worst, metric(space.apply(choice), refs.row(n)));
                double sum = 0.0;
                for (std::size_t d = 0; d < choice.size(); ++d) sum += k.c[n][k.flat(d, choice[d])];
                EXPECT_NEAR(sum, metric(space.apply(choice), refs.row(n)), 1e-12);
                return true;
            });
            EXPECT_NEAR(k.C[n], worst, 1e-12);
            EXPECT_LE(k.C[n], k.M);
            for (double v : k.c[n]) EXPECT_GE(v, 0.0);
        }
    }
}

TEST(ForEachAction, BudgetAndOrder) {
    auto train = numeric_train({{0, 0}, {1, 1}, {2, 2}});
    ActionConfig cfg;
    cfg.grid_size = 3;
    auto space = build_action_space(std::vector<double>{1, 1}, train, cfg);
    std::vector<std::vector<std::size_t>> seen;
    for_each_action(space, 1, [&](const auto& c) { seen.push_back(c); return true; });
    // 9 combinations minus the 4 that change both
    EXPECT_EQ(seen.size(), 5u);
    EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
}
