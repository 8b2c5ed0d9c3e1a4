#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "cfmilp/data.hpp"

using namespace cfmilp;

namespace {

DatasetSchema toy_schema() {
    DatasetSchema s;
    s.features = {{"income", FeatureKind::Numeric, {}},
                  {"color", FeatureKind::Categorical, {"R", "G", "B"}},
                  {"age", FeatureKind::Numeric, {}}};
    s.target = "approved";
    s.positive_label = "yes";
    return s;
}

RawDataset parse(const std::string& text, const DatasetSchema& s) {
    std::istringstream in(text);
    return parse_csv(in, s);
}

} // namespace

TEST(LoadCsv, DropsRowsWithMissingCells) {
    auto ds = parse("income,color,age,approved\n"
                    "10,R,30,yes\n"
                    "12,,31,no\n"
                    "\"14\",G,32,no\n"
                    "16,B,33,yes\n",
                    toy_schema());
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dropped, 1u);
    EXPECT_DOUBLE_EQ(ds.rows[1][0], 14.0);
    EXPECT_DOUBLE_EQ(ds.rows[1][1], 1.0);
}

TEST(LoadCsv, UnknownCategoryIsSchemaError) {
    EXPECT_THROW(parse("income,color,age,approved\n10,Z,30,yes\n", toy_schema()), SchemaError);
}

TEST(LoadCsv, MalformedRowReportsLine) {
    try {
        parse("income,color,age,approved\n10,R,30,yes\n11,R,yes\n", toy_schema());
        FAIL() << "expected parse error";
    } catch (const CsvParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse("income,color,age,approved\nabc,R,30,yes\n", toy_schema()), CsvParseError);
    EXPECT_THROW(parse("income,color,age,approved\n1,\"R,30,yes\n", toy_schema()), CsvParseError);
}

TEST(LoadCsv, QuotedFieldsAndHeaderOrder) {
    DatasetSchema s;
    s.features = {{"note", FeatureKind::Categorical, {"a,b", "c\"d"}}, {"v", FeatureKind::Numeric, {}}};
    s.target = "y";
    s.positive_label = "1";
    auto ds = parse("y,v,note\n1,2.5,\"a,b\"\n0,3,\"c\"\"d\"\n", s);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_DOUBLE_EQ(ds.rows[0][0], 0.0);
    EXPECT_DOUBLE_EQ(ds.rows[0][1], 2.5);
    EXPECT_DOUBLE_EQ(ds.rows[1][0], 1.0);
}

TEST(Schema, Invariants) {
    auto s = toy_schema();
    s.features.push_back({"income", FeatureKind::Numeric, {}});
    EXPECT_THROW(s.validate(), SchemaError);
    s = toy_schema();
    s.target = "age";
    EXPECT_THROW(s.validate(), SchemaError);
    s = toy_schema();
    s.features[1].categories = {"R"};
    EXPECT_THROW(s.validate(), SchemaError);
    auto j = schema_to_json(toy_schema());
    auto back = schema_from_json(j);
    EXPECT_EQ(schema_to_json(back), j);
}

TEST(Encode, OneHotAndWidth) {
    auto raw = parse("income,color,age,approved\n10,G,30,yes\n11,R,40,no\n", toy_schema());
    auto enc = encode(raw);
    EXPECT_EQ(enc.map.width(), 5u);
    EXPECT_EQ(enc.x(0, 1), 0.0);
    EXPECT_EQ(enc.x(0, 2), 1.0);
    EXPECT_EQ(enc.x(0, 3), 0.0);
    EXPECT_EQ(enc.y[0], 1);
    EXPECT_EQ(enc.y[1], -1);
    EXPECT_EQ(enc.map.numeric_columns(), (std::vector<std::size_t>{0, 4}));
}

TEST(Encode, RoundTripAndGroupSums) {
    std::ostringstream csv;
    csv << "income,color,age,approved\n";
    const char* colors[] = {"R", "G", "B"};
    for (int i = 0; i < 60; ++i)
        csv << (i * 7 % 13) << "," << colors[i % 3] << "," << (20 + i) << "," << (i % 2 ? "yes" : "no") << "\n";
    auto raw = parse(csv.str(), toy_schema());
    auto enc = encode(raw);
    for (std::size_t r = 0; r < enc.size(); ++r) {
        const auto& g = enc.map.groups[1];
        double sum = 0;
        for (std::size_t k = 0; k < g.width; ++k) sum += enc.x(r, g.first + k);
        EXPECT_EQ(sum, 1.0);
        auto dec = decode_row(enc.map, enc.x.row(r));
        EXPECT_EQ(dec[1], colors[r % 3]);
        EXPECT_EQ(std::stod(dec[0]), raw.rows[r][0]);
    }
}

TEST(Encode, GermanSchemaWidth) {
    auto schema = load_schema(std::string(CFMILP_SOURCE_DIR) + "/schemas/german_credit.json");
    std::size_t numeric = 0, categorical = 0, cats = 0;
    for (const auto& f : schema.features) {
        if (f.kind == FeatureKind::Categorical) {
            ++categorical;
            cats += f.categories.size();
        } else {
            ++numeric;
        }
    }
    EXPECT_EQ(numeric, 7u);
    EXPECT_EQ(categorical, 13u);
    EXPECT_EQ(make_encoding_map(schema).width(), numeric + cats);
}

TEST(Scaler, CenteringAndPopulationStd) {
    Matrix m(3, 2);
    m(0, 0) = 2; m(1, 0) = 4; m(2, 0) = 6;
    m(0, 1) = 1; m(1, 1) = 1; m(2, 1) = 1;
    std::vector<std::size_t> cols{0};
    auto s = fit_scaler(m, cols);
    EXPECT_DOUBLE_EQ(s.apply(std::vector<double>{4, 7})[0], 0.0);
    // hand: mean 4, population variance (4 + 0 + 4) / 3, so (6 - 4) / sqrt(8/3) = sqrt(3/2)
    EXPECT_NEAR(s.apply(std::vector<double>{6, 7})[0], 1.2247448713915890, 1e-15);
    EXPECT_DOUBLE_EQ(s.apply(std::vector<double>{6, 7})[1], 7.0);
    EXPECT_EQ(s.means[1], 0.0);
    EXPECT_EQ(s.stds[1], 1.0);
}

TEST(Scaler, ZeroVarianceColumnIsNamed) {
    Matrix m(3, 2, 1.0);
    std::vector<std::size_t> cols{1};
    try {
        fit_scaler(m, cols, {"a", "flat"});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    }
}

TEST(Scaler, MeanMapsToZero) {
    Matrix m(50, 3);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t c = 0; c < 3; ++c) m(r, c) = std::sin(static_cast<double>(r * 3 + c)) * (c + 1) + c;
    std::vector<std::size_t> cols{0, 2};
    auto s = fit_scaler(m, cols);
    std::vector<double> mean(3, 0.0);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t c = 0; c < 3; ++c) mean[c] += m(r, c) / 50.0;
    auto z = s.apply(mean);
    EXPECT_NEAR(z[0], 0.0, 1e-12);
    EXPECT_NEAR(z[2], 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(z[1], mean[1]);
}

TEST(Split, RatioFloorAndDeterminism) {
    auto a = split_indices(100, 0.75, 3);
    EXPECT_EQ(a.train.size(), 75u);
    EXPECT_EQ(a.test.size(), 25u);
    auto b = split_indices(100, 0.75, 3);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    auto c = split_indices(100, 0.75, 4);
    EXPECT_NE(a.train, c.train);
    std::vector<bool> seen(100, false);
    for (auto i : a.train) seen[i] = true;
    for (auto i : a.test) {
        EXPECT_FALSE(seen[i]);
        seen[i] = true;
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool v) { return v; }));
    auto one = split_indices(1, 0.75, 0);
    EXPECT_EQ(one.train.size(), 0u);
    EXPECT_EQ(one.test.size(), 1u);
    EXPECT_THROW(split_indices(10, 1.0, 0), std::invalid_argument);
}

TEST(Encode, DumpCsvHasHeader) {
    auto raw = parse("income,color,age,approved\n10,G,30,yes\n", toy_schema());
    std::ostringstream out;
    write_encoded_csv(out, encode(raw));
    EXPECT_EQ(out.str(), "income,color=R,color=G,color=B,age,label\n10,0,1,0,30,1\n");
}
