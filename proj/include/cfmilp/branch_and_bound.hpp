#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cfmilp/milp.hpp"
#include "cfmilp/simplex.hpp"

namespace cfmilp {

struct SolverParams {
    double time_limit = 1200.0; // seconds
    double rel_gap = 1e-6;
    double int_tol = 1e-6;
    std::size_t node_limit = 10'000'000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(time_limit > 0.0))
            throw std::invalid_argument("solver time limit must be positive");
        if (!(rel_gap > 0.0 && rel_gap < 1.0) || !(int_tol > 0.0 && int_tol < 1.0))
            throw std::invalid_argument("solver tolerances must lie in (0, 1)");
    }
};

namespace detail {

struct BbNode {
    double bound;
    std::size_t depth;
    std::size_t seq;
    std::vector<std::pair<VarId, std::int8_t>> fixes;
};

// Best bound first; deeper nodes, then older nodes, break ties.
struct BbNodeOrder {
    bool operator()(const BbNode& a, const BbNode& b) const {
        if (a.bound != b.bound)
            return a.bound > b.bound;
        if (a.depth != b.depth)
            return a.depth < b.depth;
        return a.seq > b.seq;
    }
};

} // namespace detail

/// Branch-and-bound over LP relaxations: most-fractional branching (lowest
/// id on ties), best-bound node selection, dual simplex warm starts.
inline MilpSolution solve_milp(const MilpModel& model, const SolverParams& params = {}) {
    params.validate();
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto deadline = start + std::chrono::duration_cast<clock::duration>(
                                      std::chrono::duration<double>(params.time_limit));

    MilpSolution sol;
    DenseSimplex lp(model);
    lp.set_deadline(deadline);

    std::vector<VarId> binaries;
    for (VarId j = 0; j < model.num_variables(); ++j)
        if (model.variable(j).kind == VarKind::Binary)
            binaries.push_back(j);
    // -1 = free, otherwise the value the binary is fixed to in the engine.
    std::vector<std::int8_t> applied(model.num_variables(), -1);
    std::vector<std::int8_t> wanted(model.num_variables(), -1);

    auto apply = [&](const std::vector<std::pair<VarId, std::int8_t>>& fixes) {
        for (VarId j : binaries)
            wanted[j] = -1;
        for (const auto& [j, v] : fixes)
            wanted[j] = v;
        for (VarId j : binaries) {
            if (wanted[j] == applied[j])
                continue;
            const auto& var = model.variable(j);
            if (wanted[j] < 0)
                lp.set_bounds(j, var.lower, var.upper);
            else
                lp.set_bounds(j, wanted[j], wanted[j]);
            applied[j] = wanted[j];
        }
    };

    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
    double pruned_bound = kInf;
    auto cutoff_reached = [&](double bound) {
        if (!std::isfinite(sol.objective))
            return false;
        if (sol.objective - bound > params.rel_gap * std::max(1.0, std::abs(sol.objective)))
            return false;
        pruned_bound = std::min(pruned_bound, bound);
        return true;
    };

    std::priority_queue<detail::BbNode, std::vector<detail::BbNode>, detail::BbNodeOrder> open;
    std::size_t seq = 0;
    open.push(detail::BbNode{-kInf, 0, seq++, {}});
    bool stopped = false;
    bool unbounded = false;

    while (!open.empty()) {
        if (clock::now() > deadline || sol.nodes >= params.node_limit) {
            stopped = true;
            break;
        }
        detail::BbNode node = open.top();
        open.pop();
        if (cutoff_reached(node.bound))
            continue;
        ++sol.nodes;
        apply(node.fixes);
        LpResult res = lp.reoptimize();
        sol.lp_iterations += res.iterations;
        if (res.status == LpStatus::TimeLimit) {
            open.push(std::move(node));
            stopped = true;
            break;
        }
        if (res.status == LpStatus::Unbounded) {
            unbounded = true;
            break;
        }
        if (res.status != LpStatus::Optimal)
            continue;
        if (cutoff_reached(res.objective))
            continue;

        VarId branch_var = model.num_variables();
        double best_frac = params.int_tol;
        for (VarId j : binaries) {
            const double f = std::abs(res.x[j] - std::round(res.x[j]));
            if (f > best_frac) {
                best_frac = f;
                branch_var = j;
            }
        }
        if (branch_var == model.num_variables()) {
            // Integral within tolerance. Snap binaries and, if any moved,
            // re-solve the continuous part with the binaries fixed.
            bool snapped = true;
            auto fixes = node.fixes;
            for (VarId j : binaries) {
                const double r = std::round(res.x[j]);
                if (res.x[j] != r)
                    snapped = false;
                if (wanted[j] < 0)
                    fixes.emplace_back(j, static_cast<std::int8_t>(r));
            }
            if (!snapped) {
                apply(fixes);
                LpResult fixed = lp.reoptimize();
                sol.lp_iterations += fixed.iterations;
                if (fixed.status != LpStatus::Optimal)
                    continue;
                res = std::move(fixed);
            }
            for (VarId j : binaries)
                res.x[j] = std::round(res.x[j]);
            if (res.objective < sol.objective) {
                sol.objective = res.objective;
                sol.values = std::move(res.x);
            }
            continue;
        }
        auto down = node.fixes;
        down.emplace_back(branch_var, 0);
        auto up = std::move(node.fixes);
        up.emplace_back(branch_var, 1);
        open.push(detail::BbNode{res.objective, node.depth + 1, seq++, std::move(down)});
        open.push(detail::BbNode{res.objective, node.depth + 1, seq++, std::move(up)});
    }

    sol.wall_time = elapsed();
    const bool have = std::isfinite(sol.objective);
    if (unbounded) {
        sol.status = SolveStatus::Unbounded;
        sol.best_bound = -kInf;
    } else if (stopped) {
        sol.status = have ? SolveStatus::FeasibleTimeLimit : SolveStatus::NoSolutionTimeLimit;
        double bound = have ? std::min(sol.objective, pruned_bound) : kInf;
        while (!open.empty()) {
            bound = std::min(bound, open.top().bound);
            open.pop();
        }
        sol.best_bound = bound;
    } else {
        sol.status = have ? SolveStatus::Optimal : SolveStatus::Infeasible;
        sol.best_bound = have ? std::min(sol.objective, pruned_bound) : kInf;
    }
    return sol;
}

} // namespace cfmilp
