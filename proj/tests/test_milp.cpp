#include <gtest/gtest.h>

#include "cfmilp/milp.hpp"
#include "support/lp_reparser.hpp"

using namespace cfmilp;

TEST(MilpModel, BinaryBoundsAreUnit) {
    MilpModel m;
    auto b = m.add_binary("b");
    EXPECT_EQ(m.variable(b).lower, 0.0);
    EXPECT_EQ(m.variable(b).upper, 1.0);
    EXPECT_EQ(m.variable(b).kind, VarKind::Binary);
}

TEST(MilpModel, RejectsUnknownVariableInRow) {
    MilpModel m;
    m.add_continuous("x", 0, 1);
    EXPECT_THROW(m.add_constraint({{7, 1.0}}, Comparator::LessEq, 1.0), ModelError);
}

TEST(MilpModel, RejectsDuplicateNamesAndBadBounds) {
    MilpModel m;
    m.add_continuous("x", 0, 1);
    EXPECT_THROW(m.add_binary("x"), ModelError);
    EXPECT_THROW(m.add_continuous("y", 2, 1), ModelError);
    EXPECT_THROW(m.add_constraint({{0, 1.0}}, Comparator::LessEq, kInf), ModelError);
}

TEST(MilpModel, EmptyObjectiveIsConstantZero) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 1);
    auto rep = evaluate(m, {0.5});
    EXPECT_TRUE(rep.feasible);
    EXPECT_EQ(rep.objective, 0.0);
    m.set_objective({}, 0.0);
    EXPECT_EQ(evaluate(m, {1.0}).objective, 0.0);
    (void)x;
}

TEST(MilpModel, FamilyCountsAndMergedTerms) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 10);
    m.add_constraint({{x, 1.0}, {x, 2.0}}, Comparator::GreaterEq, 1.0, "lb");
    m.add_constraint({{x, 1.0}, {x, -1.0}}, Comparator::LessEq, 0.0, "lb");
    EXPECT_EQ(m.family_count("lb"), 2u);
    ASSERT_EQ(m.constraints()[0].terms.size(), 1u);
    EXPECT_DOUBLE_EQ(m.constraints()[0].terms[0].coef, 3.0);
    EXPECT_TRUE(m.constraints()[1].terms.empty());
}

namespace {
MilpModel two_var_model() {
    // min x + 2y  s.t. x + y >= 1, x <= 0.25, x,y in [0, 1]; optimum x=0.25, y=0.75 -> 1.75
    MilpModel m;
    auto x = m.add_continuous("x", 0, 1);
    auto y = m.add_continuous("y", 0, 1);
    m.add_constraint({{x, 1}, {y, 1}}, Comparator::GreaterEq, 1.0, "cover");
    m.add_constraint({{x, 1}}, Comparator::LessEq, 0.25, "cap");
    m.set_objective({{x, 1}, {y, 2}});
    return m;
}
} // namespace

TEST(Evaluate, FeasibleOptimumMatchesHandValue) {
    auto m = two_var_model();
    auto rep = evaluate(m, {0.25, 0.75});
    EXPECT_TRUE(rep.feasible);
    EXPECT_DOUBLE_EQ(rep.objective, 1.75);
}

TEST(Evaluate, ReportsWorstViolation) {
    auto m = two_var_model();
    auto rep = evaluate(m, {0.25, 0.25}); // cover row short by 0.5
    EXPECT_FALSE(rep.feasible);
    EXPECT_DOUBLE_EQ(rep.worst_violation, 0.5);
    EXPECT_EQ(rep.worst_item, "cover_0");
}

TEST(Evaluate, ToleranceBoundary) {
    auto m = two_var_model();
    auto rep = evaluate(m, {0.25, 0.75 - 1e-7});
    EXPECT_TRUE(rep.feasible);
    EXPECT_NEAR(rep.worst_violation, 1e-7, 1e-12);
}

TEST(Evaluate, MissingVariablesIsError) {
    auto m = two_var_model();
    EXPECT_THROW(evaluate(m, {0.25}), ModelError);
}

TEST(Evaluate, BinaryIntegrality) {
    MilpModel m;
    m.add_binary("b");
    EXPECT_FALSE(evaluate(m, {0.5}).feasible);
    EXPECT_TRUE(evaluate(m, {1.0}).feasible);
}

TEST(ExportLp, SkeletonAndDeterminism) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 10);
    auto b = m.add_binary("b");
    m.add_constraint({{x, 1.0}}, Comparator::GreaterEq, 1.0, "low", "lowx");
    m.add_constraint({{x, 1.0}, {b, -10.0}}, Comparator::LessEq, 0.0, "link");
    m.set_objective({{x, 1.0}});
    const auto text = export_lp(m);
    EXPECT_NE(text.find("Minimize"), std::string::npos);
    EXPECT_NE(text.find("Subject To"), std::string::npos);
    EXPECT_NE(text.find("lowx: 1 x >= 1"), std::string::npos);
    EXPECT_NE(text.find("Bounds"), std::string::npos);
    EXPECT_NE(text.find("0 <= x <= 10"), std::string::npos);
    auto bin = text.find("Binaries");
    ASSERT_NE(bin, std::string::npos);
    EXPECT_NE(text.find(" b\n", bin), std::string::npos);
    EXPECT_EQ(text, export_lp(m));
}

TEST(ExportLp, SeventeenSignificantDigits) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 1);
    m.add_constraint({{x, 0.1}}, Comparator::LessEq, 1.0 / 3.0);
    const auto text = export_lp(m);
    EXPECT_NE(text.find("0.10000000000000001 x <= 0.33333333333333331"), std::string::npos);
}

TEST(ExportLp, ReparsedModelIsEquivalent) {
    MilpModel m;
    auto x = m.add_continuous("x", -kInf, 4);
    auto y = m.add_continuous("y", -kInf, kInf);
    auto b = m.add_binary("b");
    m.add_constraint({{x, 1.5}, {y, -2.0}, {b, 3.0}}, Comparator::Equal, 0.5, "eq");
    m.add_constraint({{y, 1.0}}, Comparator::GreaterEq, -3.0);
    m.set_objective({{x, -1.0}, {y, 0.25}}, 2.0);
    auto back = testsupport::parse_lp(export_lp(m));
    ASSERT_EQ(back.num_variables(), m.num_variables() + 1); // plus the constant carrier
    std::map<std::string, double> named{{"x", 1.0}, {"y", 0.5}, {"b", 1.0}, {"constant", 1.0}};
    for (double bx : {0.0, 1.0}) {
        named["b"] = bx;
        named["x"] = (0.5 + 2.0 * 0.5 - 3.0 * bx) / 1.5; // satisfies the equality
        auto a = testsupport::assignment_by_name(m, named);
        auto a2 = testsupport::assignment_by_name(back, named);
        EXPECT_NEAR(evaluate(m, a).objective, evaluate(back, a2).objective, 1e-12);
        EXPECT_EQ(evaluate(m, a).feasible, evaluate(back, a2).feasible);
    }
    EXPECT_EQ(back.variable(*back.find("b")).kind, VarKind::Binary);
    EXPECT_EQ(back.variable(*back.find("y")).lower, -kInf);
}
