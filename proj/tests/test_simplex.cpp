#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "cfmilp/simplex.hpp"

using namespace cfmilp;

TEST(SolveLp, CoverRow) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 1);
    auto y = m.add_continuous("y", 0, 1);
    m.add_constraint({{x, 1}, {y, 1}}, Comparator::GreaterEq, 1.0);
    m.set_objective({{x, 1}, {y, 1}});
    auto r = solve_lp(m);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.objective, 1.0, 1e-12);
}

TEST(SolveLp, InfeasiblePair) {
    MilpModel m;
    auto x = m.add_continuous("x", -kInf, kInf);
    m.add_constraint({{x, 1}}, Comparator::GreaterEq, 2.0);
    m.add_constraint({{x, 1}}, Comparator::LessEq, 1.0);
    EXPECT_EQ(solve_lp(m).status, LpStatus::Infeasible);
}

TEST(SolveLp, Unbounded) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, kInf);
    auto y = m.add_continuous("y", 0, kInf);
    m.add_constraint({{x, 1}, {y, -1}}, Comparator::LessEq, 1.0);
    m.set_objective({{x, -1}});
    EXPECT_EQ(solve_lp(m).status, LpStatus::Unbounded);
}

TEST(SolveLp, DegenerateRedundantRowsTerminate) {
    // Many copies of the same facets through the optimal vertex.
    MilpModel m;
    auto x = m.add_continuous("x", 0, kInf);
    auto y = m.add_continuous("y", 0, kInf);
    auto z = m.add_continuous("z", 0, kInf);
    for (int k = 0; k < 30; ++k) {
        m.add_constraint({{x, 1}, {y, 1}, {z, 1}}, Comparator::LessEq, 1.0);
        m.add_constraint({{x, 1.0 + k}, {y, 1}}, Comparator::LessEq, 1.0);
        m.add_constraint({{x, 1}, {z, 2.0}}, Comparator::LessEq, 1.0);
        m.add_constraint({{x, 1}, {y, 1}, {z, 1}}, Comparator::GreaterEq, 0.0);
    }
    m.set_objective({{x, -1}, {y, -1}, {z, -1}});
    auto r = solve_lp(m);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.objective, -1.0, 1e-9);
}

TEST(SolveLp, EqualityAndFreeVariables) {
    // min y s.t. y = 2x - 3, x in [1, 5], y free -> y = -1 at x = 1
    MilpModel m;
    auto x = m.add_continuous("x", 1, 5);
    auto y = m.add_continuous("y", -kInf, kInf);
    m.add_constraint({{y, 1}, {x, -2}}, Comparator::Equal, -3.0);
    m.set_objective({{y, 1}});
    auto r = solve_lp(m);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.objective, -1.0, 1e-9);
    EXPECT_NEAR(r.x[0], 1.0, 1e-9);
}

TEST(SolveLp, EmptyRowsAreDropped) {
    MilpModel m;
    auto x = m.add_continuous("x", 0, 1);
    m.add_constraint({}, Comparator::LessEq, 1.0);
    m.set_objective({{x, 1}});
    EXPECT_EQ(solve_lp(m).status, LpStatus::Optimal);
    m.add_constraint({}, Comparator::GreaterEq, 1.0);
    EXPECT_EQ(solve_lp(m).status, LpStatus::Infeasible);
}

namespace {

// Vertex enumeration over all n-subsets of active hyperplanes (rows and
// bounds). Valid because every variable is boxed.
double vertex_oracle(const MilpModel& m) {
    const std::size_t n = m.num_variables();
    struct Plane { std::vector<double> a; double b; };
    std::vector<Plane> planes;
    for (const auto& row : m.constraints()) {
        Plane p{std::vector<double>(n, 0.0), row.rhs};
        for (const auto& t : row.terms) p.a[t.var] = t.coef;
        planes.push_back(p);
    }
    for (std::size_t j = 0; j < n; ++j) {
        Plane lo{std::vector<double>(n, 0.0), m.variable(j).lower};
        lo.a[j] = 1;
        Plane hi{std::vector<double>(n, 0.0), m.variable(j).upper};
        hi.a[j] = 1;
        planes.push_back(lo);
        planes.push_back(hi);
    }
    double best = kInf;
    std::vector<std::size_t> pick(n);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t depth, std::size_t from) {
        if (depth == n) {
            Eigen::MatrixXd A(n, n);
            Eigen::VectorXd b(n);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) A(r, c) = planes[pick[r]].a[c];
                b(r) = planes[pick[r]].b;
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
            if (lu.rank() < static_cast<Eigen::Index>(n)) return;
            Eigen::VectorXd x = lu.solve(b);
            std::vector<double> xv(x.data(), x.data() + n);
            auto rep = evaluate(m, xv, 1e-8);
            if (rep.feasible) best = std::min(best, rep.objective);
            return;
        }
        for (std::size_t k = from; k < planes.size(); ++k) {
            pick[depth] = k;
            rec(depth + 1, k + 1);
        }
    };
    rec(0, 0);
    return best;
}

MilpModel random_lp(std::mt19937_64& rng, std::size_t n, std::size_t rows) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    MilpModel m;
    for (std::size_t j = 0; j < n; ++j) m.add_continuous("x" + std::to_string(j), -1.0 - u(rng) * 0.5 - 0.5, 1.0 + u(rng) * 0.5 + 0.5);
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<Term> terms;
        for (std::size_t j = 0; j < n; ++j) terms.push_back({j, u(rng)});
        const int kind = static_cast<int>(rng() % 3);
        const double rhs = u(rng) * 0.5;
        m.add_constraint(std::move(terms), kind == 0 ? Comparator::LessEq : kind == 1 ? Comparator::GreaterEq : Comparator::Equal,
                         rhs);
    }
    std::vector<Term> obj;
    for (std::size_t j = 0; j < n; ++j) obj.push_back({j, u(rng)});
    m.set_objective(std::move(obj));
    return m;
}

} // namespace

TEST(SolveLp, MatchesVertexEnumerationOnRandomBoxedLps) {
    std::mt19937_64 rng(7);
    int optimal = 0, infeasible = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 2;
        auto m = random_lp(rng, n, 1 + rng() % 4);
        const double oracle = vertex_oracle(m);
        auto primal = solve_lp(m);
        DenseSimplex warm(m);
        auto dual = warm.reoptimize();
        if (oracle == kInf) {
            EXPECT_EQ(primal.status, LpStatus::Infeasible) << "trial " << trial;
            EXPECT_EQ(dual.status, LpStatus::Infeasible) << "trial " << trial;
            ++infeasible;
            continue;
        }
        ASSERT_EQ(primal.status, LpStatus::Optimal) << "trial " << trial;
        ASSERT_EQ(dual.status, LpStatus::Optimal) << "trial " << trial;
        EXPECT_NEAR(primal.objective, oracle, 1e-7) << "trial " << trial;
        EXPECT_NEAR(dual.objective, oracle, 1e-7) << "trial " << trial;
        EXPECT_TRUE(evaluate(m, primal.x).feasible);
        ++optimal;
    }
    EXPECT_GT(optimal, 100);
    EXPECT_GT(infeasible, 5);
}

TEST(DenseSimplex, ReoptimizeAfterBoundChanges) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto m = random_lp(rng, 3, 3);
        DenseSimplex lp(m);
        lp.solve();
        // Tighten a box and compare against a cold solve of the modified model.
        const VarId j = rng() % 3;
        const double lo = m.variable(j).lower * 0.3, hi = m.variable(j).upper * 0.3;
        lp.set_bounds(j, lo, hi);
        auto warm = lp.reoptimize();
        MilpModel cold = m;
        cold.set_bounds(j, lo, hi);
        auto ref = solve_lp(cold);
        ASSERT_EQ(warm.status, ref.status) << "trial " << trial;
        if (ref.status == LpStatus::Optimal) {
            EXPECT_NEAR(warm.objective, ref.objective, 1e-8);
            EXPECT_NEAR(warm.objective, vertex_oracle(cold), 1e-7);
        }
    }
}
