#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfmilp/action_space.hpp"
#include "cfmilp/branch_and_bound.hpp"
#include "cfmilp/classifiers.hpp"
#include "cfmilp/milp.hpp"
#include "cfmilp/stats.hpp"

namespace cfmilp {

enum class Formulation { Original, Reduced };

inline const char* to_string(Formulation f) { return f == Formulation::Original ? "original" : "reduced"; }

inline Formulation formulation_from_string(const std::string& s) {
    if (s == "original")
        return Formulation::Original;
    if (s == "reduced")
        return Formulation::Reduced;
    throw ConfigError("unknown formulation '" + s + "' (expected original or reduced)");
}

/// Raised when explain is asked about an instance the classifier already accepts.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FormulationHandles {
    Formulation kind = Formulation::Reduced;
    std::vector<std::vector<VarId>> pi; // [dimension][candidate]
    std::vector<VarId> delta;           // one per encoded column
    std::vector<VarId> mu;
    std::vector<VarId> rho;
    std::optional<VarId> t;
    std::vector<std::vector<VarId>> leaf; // [tree][node], forests only; unused entries are kNoVar
    static constexpr VarId kNoVar = static_cast<VarId>(-1);
};

namespace detail {

inline void check_shapes(const ActionSpace& space, const MilpConstants& k, const Eigen::MatrixXd& U,
                         const LofContext& lof) {
    const auto D = static_cast<Eigen::Index>(space.map.width());
    if (U.rows() != D || U.cols() != D)
        throw std::invalid_argument("factor U does not match the encoded width");
    if (lof.k != 1)
        throw std::invalid_argument("the MILP cost needs a k = 1 reference context");
    if (k.C.size() != lof.size())
        throw std::invalid_argument("constant table and reference set sizes differ");
    if (k.offset.size() != space.dims.size())
        throw std::invalid_argument("constant table does not match the action space");
}

} // namespace detail

/// Action one-hot rows, l1-Mahalanobis envelope, nearest indicator,
/// reachability bounds, change budget and the objective.
inline FormulationHandles build_cost_common(MilpModel& model, const ActionSpace& space, const MilpConstants& k,
                                            const Eigen::MatrixXd& U, double lambda, const LofContext& lof) {
    detail::check_shapes(space, k, U, lof);
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("lambda must be finite and non-negative");
    FormulationHandles h;
    const std::size_t D = space.map.width(), N = lof.size();

    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        std::vector<VarId> ids;
        std::vector<Term> row;
        for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
            ids.push_back(model.add_binary("pi_" + std::to_string(d) + "_" + std::to_string(i)));
            row.push_back({ids.back(), 1.0});
        }
        model.add_constraint(std::move(row), Comparator::Equal, 1.0, "action_onehot");
        h.pi.push_back(std::move(ids));
    }

    for (std::size_t r = 0; r < D; ++r)
        h.delta.push_back(model.add_continuous("delta_" + std::to_string(r), 0.0, kInf));
    // delta_r >= +-(U a)_r with a = sum_{d,i} displacement(d,i) pi_{d,i}
    std::vector<std::vector<Term>> ua(D);
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
            auto disp = space.displacement(d, i);
            if (disp.empty())
                continue;
            for (std::size_t r = 0; r < D; ++r) {
                double coef = 0.0;
                for (const auto& [col, delta] : disp)
                    coef += U(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) * delta;
                if (coef != 0.0)
                    ua[r].push_back({h.pi[d][i], coef});
            }
        }
    for (std::size_t r = 0; r < D; ++r) {
        for (double sign : {1.0, -1.0}) {
            std::vector<Term> row{{h.delta[r], -1.0}};
            for (const auto& t : ua[r])
                row.push_back({t.var, sign * t.coef});
            model.add_constraint(std::move(row), Comparator::LessEq, 0.0, "md_envelope");
        }
    }

    std::vector<Term> pick;
    for (std::size_t n = 0; n < N; ++n) {
        h.mu.push_back(model.add_binary("mu_" + std::to_string(n)));
        h.rho.push_back(model.add_continuous("rho_" + std::to_string(n), 0.0, kInf));
        pick.push_back({h.mu.back(), 1.0});
    }
    model.add_constraint(std::move(pick), Comparator::Equal, 1.0, "nearest_indicator");
    for (std::size_t n = 0; n < N; ++n)
        model.add_constraint({{h.rho[n], 1.0}, {h.mu[n], -lof.kdist[n]}}, Comparator::GreaterEq, 0.0, "rho_floor");
    for (std::size_t n = 0; n < N; ++n) {
        // rho_n >= sum c pi - C_n (1 - mu_n)
        std::vector<Term> row{{h.rho[n], 1.0}, {h.mu[n], -k.C[n]}};
        for (std::size_t d = 0; d < space.dims.size(); ++d)
            for (std::size_t i = 0; i < space.dims[d].size(); ++i)
                row.push_back({h.pi[d][i], -k.c[n][k.flat(d, i)]});
        model.add_constraint(std::move(row), Comparator::GreaterEq, -k.C[n], "rho_reach");
    }

    // sum_d (1 - pi_{d,zero}) <= K over mutable dimensions
    std::vector<Term> budget;
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        if (space.dims[d].size() > 1)
            budget.push_back({h.pi[d][space.dims[d].zero], -1.0});
    model.add_constraint(std::move(budget), Comparator::LessEq,
                         static_cast<double>(space.max_changes) - static_cast<double>(budget.size()), "max_changes");

    std::vector<Term> obj;
    for (auto v : h.delta)
        obj.push_back({v, 1.0});
    for (std::size_t n = 0; n < N; ++n)
        obj.push_back({h.rho[n], lambda * lof.lrd[n]});
    model.set_objective(std::move(obj));
    return h;
}

/// All N^2 ordered pairs, the diagonal included.
inline void add_nearest_original(MilpModel& model, FormulationHandles& h, const MilpConstants& k) {
    h.kind = Formulation::Original;
    const std::size_t N = h.mu.size();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < N; ++m) {
            std::vector<Term> row{{h.mu[n], k.C[n]}};
            for (std::size_t d = 0; d < h.pi.size(); ++d)
                for (std::size_t i = 0; i < h.pi[d].size(); ++i)
                    row.push_back({h.pi[d][i], k.c[n][k.flat(d, i)] - k.c[m][k.flat(d, i)]});
            model.add_constraint(std::move(row), Comparator::LessEq, k.C[n], "nearest",
                                 "nearest_" + std::to_string(n) + "_" + std::to_string(m));
        }
}

/// t in [0, M] with sum c pi - M (1 - mu_n) <= t <= sum c pi for every n.
inline void add_nearest_reduced(MilpModel& model, FormulationHandles& h, const MilpConstants& k) {
    h.kind = Formulation::Reduced;
    h.t = model.add_continuous("t", 0.0, k.M);
    const std::size_t N = h.mu.size();
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<Term> upper{{h.mu[n], k.M}, {*h.t, -1.0}};
        std::vector<Term> lower{{*h.t, 1.0}};
        for (std::size_t d = 0; d < h.pi.size(); ++d)
            for (std::size_t i = 0; i < h.pi[d].size(); ++i) {
                const double c = k.c[n][k.flat(d, i)];
                upper.push_back({h.pi[d][i], c});
                lower.push_back({h.pi[d][i], -c});
            }
        model.add_constraint(std::move(upper), Comparator::LessEq, k.M, "nearest",
                             "nearest_" + std::to_string(n) + "_hi");
        model.add_constraint(std::move(lower), Comparator::LessEq, 0.0, "nearest",
                             "nearest_" + std::to_string(n) + "_lo");
    }
}

/// sum_d w_d (x-bar_d + a_d) + b >= margin on raw encoded features.
inline void add_validity_linear(MilpModel& model, const FormulationHandles& h, const ActionSpace& space,
                                std::span<const double> w, double b, double margin = 0.0) {
    check_width(w.size(), space.map.width());
    double constant = b;
    for (std::size_t c = 0; c < w.size(); ++c)
        constant += w[c] * space.origin[c];
    std::vector<Term> row;
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
            double coef = 0.0;
            for (const auto& [col, delta] : space.displacement(d, i))
                coef += w[col] * delta;
            row.push_back({h.pi[d][i], coef});
        }
    model.add_constraint(std::move(row), Comparator::GreaterEq, margin - constant, "validity");
}

/// Linear validity in scaled space: the offset a_d enters as a_d / sigma_d
/// and x-bar enters through the scaler.
inline void add_validity_scaled_svm(MilpModel& model, const FormulationHandles& h, const ActionSpace& space,
                                    std::span<const double> w, double b, const StandardScaler& scaler,
                                    double margin = 0.0) {
    check_width(w.size(), space.map.width());
    const auto scaled = scaler.apply(space.origin);
    double constant = b;
    for (std::size_t c = 0; c < w.size(); ++c)
        constant += w[c] * scaled[c];
    std::vector<Term> row;
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
            double coef = 0.0;
            for (const auto& [col, delta] : space.displacement(d, i))
                coef += w[col] * delta / scaler.stds[col];
            row.push_back({h.pi[d][i], coef});
        }
    model.add_constraint(std::move(row), Comparator::GreaterEq, margin - constant, "validity");
}

namespace detail {

struct Interval {
    double lo = -kInf; // exclusive
    double hi = kInf;  // inclusive
    bool contains(double v) const { return v > lo && v <= hi; }
};

// Value of encoded column `col` after candidate i of dimension d.
inline double moved_value(const ActionSpace& space, std::size_t d, std::size_t i, std::size_t col) {
    const auto& dim = space.dims[d];
    if (!dim.categorical)
        return dim.values[i];
    double v = space.origin[col];
    for (const auto& [c, delta] : space.displacement(d, i))
        if (c == col)
            v += delta;
    return v;
}

} // namespace detail

/// Leaf indicators per tree, path compatibility rows per action dimension,
/// and sum_{t,l} p_{t,l} phi_{t,l} >= (0.5 + margin) T.
inline void add_validity_forest(MilpModel& model, FormulationHandles& h, const Forest& forest,
                                const ActionSpace& space, double margin = 0.0) {
    check_width(forest.width, space.map.width());
    std::vector<std::size_t> dim_of_column(space.map.width());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const auto& g = space.map.groups[space.dims[d].group];
        for (std::size_t k = 0; k < g.width; ++k)
            dim_of_column[g.first + k] = d;
    }
    std::vector<Term> vote;
    h.leaf.assign(forest.trees.size(), {});
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& tree = forest.trees[t];
        h.leaf[t].assign(tree.nodes.size(), FormulationHandles::kNoVar);
        std::vector<Term> one;
        // depth-first walk carrying per-column intervals
        struct Frame {
            std::size_t node;
            std::map<std::size_t, detail::Interval> bounds;
        };
        std::vector<Frame> stack{{0, {}}};
        while (!stack.empty()) {
            Frame f = std::move(stack.back());
            stack.pop_back();
            const auto& node = tree.nodes[f.node];
            if (node.feature >= 0) {
                const auto col = static_cast<std::size_t>(node.feature);
                Frame right{static_cast<std::size_t>(node.right), f.bounds};
                right.bounds[col].lo = std::max(right.bounds[col].lo, node.threshold);
                f.bounds[col].hi = std::min(f.bounds[col].hi, node.threshold);
                f.node = static_cast<std::size_t>(node.left);
                stack.push_back(std::move(right));
                stack.push_back(std::move(f));
                continue;
            }
            const VarId phi = model.add_binary("phi_" + std::to_string(t) + "_" + std::to_string(f.node));
            h.leaf[t][f.node] = phi;
            one.push_back({phi, 1.0});
            vote.push_back({phi, node.prob});
            std::map<std::size_t, std::vector<std::size_t>> cols_by_dim;
            for (const auto& [col, iv] : f.bounds)
                cols_by_dim[dim_of_column[col]].push_back(col);
            bool reachable = true;
            for (const auto& [d, cols] : cols_by_dim) {
                std::vector<Term> row{{phi, 1.0}};
                for (std::size_t i = 0; i < space.dims[d].size(); ++i) {
                    bool ok = true;
                    for (auto col : cols)
                        ok = ok && f.bounds.at(col).contains(detail::moved_value(space, d, i, col));
                    if (ok)
                        row.push_back({h.pi[d][i], -1.0});
                }
                if (row.size() == 1)
                    reachable = false;
                else if (row.size() <= space.dims[d].size())
                    model.add_constraint(std::move(row), Comparator::LessEq, 0.0, "leaf_path");
            }
            if (!reachable)
                model.set_bounds(phi, 0.0, 0.0);
        }
        model.add_constraint(std::move(one), Comparator::Equal, 1.0, "leaf_onehot");
    }
    model.add_constraint(std::move(vote), Comparator::GreaterEq,
                         (0.5 + margin) * static_cast<double>(forest.trees.size()), "validity");
}

inline void add_validity(MilpModel& model, FormulationHandles& h, const Classifier& clf, const ActionSpace& space,
                         double margin = 0.0) {
    if (const auto* lm = std::get_if<LinearModel>(&clf)) {
        if (lm->scaler)
            add_validity_scaled_svm(model, h, space, lm->weights, lm->intercept, *lm->scaler, margin);
        else
            add_validity_linear(model, h, space, lm->weights, lm->intercept, margin);
    } else {
        add_validity_forest(model, h, std::get<Forest>(clf), space, margin);
    }
}

/// Read-only statistics shared by every explanation of one run.
struct ExplainContext {
    MahalanobisContext md;
    LofContext lof1; // k = 1 over the reference set X
};

struct ExplainOptions {
    double lambda = 0.01;
    Formulation formulation = Formulation::Reduced;
    SolverParams solver;
    double margin = 0.0;
};

struct BuiltModel {
    MilpModel model;
    FormulationHandles handles;
    MilpConstants constants;
};

inline BuiltModel build_model(const ActionSpace& space, const Classifier& clf, const ExplainContext& ctx,
                              const ExplainOptions& opt) {
    BuiltModel b;
    b.constants = precompute_constants(space, ctx.lof1.points, ctx.lof1.metric);
    b.handles = build_cost_common(b.model, space, b.constants, ctx.md.upper, opt.lambda, ctx.lof1);
    if (opt.formulation == Formulation::Original)
        add_nearest_original(b.model, b.handles, b.constants);
    else
        add_nearest_reduced(b.model, b.handles, b.constants);
    add_validity(b.model, b.handles, clf, space, opt.margin);
    return b;
}

struct Explanation {
    SolveStatus status = SolveStatus::Infeasible;
    Formulation formulation = Formulation::Reduced;
    std::vector<std::size_t> choice;
    std::vector<double> counterfactual;
    nlohmann::json action;
    double objective = kInf;
    double md_term = 0.0;  // sum of delta
    double lof_term = 0.0; // lambda * sum lrd rho
    std::size_t n_star = 0;
    double t_value = 0.0; // reduced form only
    double decision = 0.0;
    bool valid = false;          // classifier accepts the counterfactual
    bool model_feasible = false; // solver values pass evaluate()
    double q1 = 0.0;             // recomputed from the counterfactual
    double md_l1 = 0.0;          // |U a|_1 recomputed
    std::size_t nodes = 0;
    std::size_t lp_iterations = 0;
    double time_s = 0.0;
    double build_time_s = 0.0;
    double best_bound = -kInf;
    std::map<std::string, std::size_t> constraint_counts;
    std::size_t total_rows = 0;

    bool found() const { return status == SolveStatus::Optimal || status == SolveStatus::FeasibleTimeLimit; }
    bool proven() const { return status == SolveStatus::Optimal; }
};

inline Explanation decode(const BuiltModel& b, const MilpSolution& sol, const ActionSpace& space,
                          const Classifier& clf, const ExplainContext& ctx, double lambda) {
    Explanation e;
    e.status = sol.status;
    e.formulation = b.handles.kind;
    e.nodes = sol.nodes;
    e.lp_iterations = sol.lp_iterations;
    e.time_s = sol.wall_time;
    e.best_bound = sol.best_bound;
    e.constraint_counts = b.model.family_counts();
    e.total_rows = b.model.num_constraints();
    if (!sol.has_solution())
        return e;
    const auto& x = sol.values;
    e.objective = sol.objective;
    e.choice.resize(space.dims.size());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < space.dims[d].size(); ++i)
            if (x[b.handles.pi[d][i]] > x[b.handles.pi[d][best]])
                best = i;
        e.choice[d] = best;
    }
    for (std::size_t n = 0; n < b.handles.mu.size(); ++n)
        if (x[b.handles.mu[n]] > x[b.handles.mu[e.n_star]])
            e.n_star = n;
    for (auto v : b.handles.delta)
        e.md_term += x[v];
    for (std::size_t n = 0; n < b.handles.rho.size(); ++n)
        e.lof_term += lambda * ctx.lof1.lrd[n] * x[b.handles.rho[n]];
    if (b.handles.t)
        e.t_value = x[*b.handles.t];
    e.counterfactual = space.apply(e.choice);
    e.action = space.describe(e.choice);
    e.decision = decision_value(clf, e.counterfactual);
    e.valid = e.decision >= 0.0;
    e.model_feasible = evaluate(b.model, x).feasible;
    e.q1 = q1_surrogate(ctx.lof1, e.counterfactual).value;
    e.md_l1 = ctx.md.l1(space.origin, e.counterfactual);
    return e;
}

/// Builds, solves and decodes one counterfactual. Throws PreconditionError
/// when the classifier already accepts x-bar.
inline Explanation explain(const ActionSpace& space, const Classifier& clf, const ExplainContext& ctx,
                           const ExplainOptions& opt) {
    if (predict(clf, space.origin) == 1)
        throw PreconditionError("instance is already accepted by the classifier (decision value " +
                                std::to_string(decision_value(clf, space.origin)) + ")");
    const auto t0 = std::chrono::steady_clock::now();
    BuiltModel b = build_model(space, clf, ctx, opt);
    const double build = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const MilpSolution sol = solve_milp(b.model, opt.solver);
    Explanation e = decode(b, sol, space, clf, ctx, opt.lambda);
    e.build_time_s = build;
    return e;
}

inline nlohmann::json explanation_to_json(const Explanation& e, bool with_timing = true) {
    nlohmann::json j;
    j["status"] = to_string(e.status);
    j["formulation"] = to_string(e.formulation);
    j["constraint_counts"] = e.constraint_counts;
    j["total_rows"] = e.total_rows;
    j["nodes"] = e.nodes;
    if (with_timing)
        j["time_s"] = e.time_s;
    if (!e.found())
        return j;
    j["action"] = e.action;
    j["counterfactual"] = e.counterfactual;
    j["objective"] = e.objective;
    j["md_term"] = e.md_term;
    j["lof_term"] = e.lof_term;
    j["n_star"] = e.n_star;
    j["decision_value"] = e.decision;
    j["valid"] = e.valid;
    return j;
}

} // namespace cfmilp
