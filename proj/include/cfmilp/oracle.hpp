#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfmilp/action_space.hpp"
#include "cfmilp/classifiers.hpp"
#include "cfmilp/formulations.hpp"
#include "cfmilp/stats.hpp"

namespace cfmilp {

inline constexpr std::size_t kOracleCap = 1'000'000;

struct OracleResult {
    bool found = false;
    std::vector<std::size_t> choice;
    std::vector<double> counterfactual;
    double objective = kInf;
    double md_term = 0.0;
    double lof_term = 0.0;
    std::size_t evaluated = 0;
};

/// Exhaustive search over actions with at most K changes: cost
/// |U a|_1 + lambda * q1(x-bar + a), validity by direct prediction. Ties keep
/// the lexicographically first choice.
inline OracleResult brute_force_oracle(const ActionSpace& space, const Classifier& clf, const ExplainContext& ctx,
                                       double lambda, double margin = 0.0, std::size_t cap = kOracleCap) {
    const std::size_t total = space.combinations(cap);
    if (total > cap)
        throw std::length_error("action space exceeds the enumeration cap of " + std::to_string(cap));
    OracleResult best;
    for_each_action(space, space.max_changes, [&](const std::vector<std::size_t>& choice) {
        ++best.evaluated;
        auto cf = space.apply(choice);
        if (decision_value(clf, cf) < margin)
            return true;
        const double md = ctx.md.l1(space.origin, cf);
        const double lof = lambda * q1_surrogate(ctx.lof1, cf).value;
        const double obj = md + lof;
        if (!best.found || obj < best.objective - 1e-12 * std::max(1.0, std::abs(best.objective))) {
            best.found = true;
            best.choice = choice;
            best.counterfactual = std::move(cf);
            best.objective = obj;
            best.md_term = md;
            best.lof_term = lof;
        }
        return true;
    });
    return best;
}

} // namespace cfmilp
