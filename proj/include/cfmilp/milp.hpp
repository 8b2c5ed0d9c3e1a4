#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cfmilp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Absolute feasibility tolerance used when checking solutions against a model.
inline constexpr double kFeasibilityTol = 1e-6;

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class VarKind { Binary, Continuous };
enum class Comparator { LessEq, Equal, GreaterEq };

using VarId = std::size_t;

struct Variable {
    std::string name;
    VarKind kind = VarKind::Continuous;
    double lower = 0.0;
    double upper = kInf;
};

struct Term {
    VarId var;
    double coef;
};

struct Constraint {
    std::string name;
    std::string family;
    std::vector<Term> terms;
    Comparator cmp = Comparator::LessEq;
    double rhs = 0.0;
};

struct Objective {
    std::vector<Term> terms;
    double constant = 0.0;
};

/// Minimization MILP with sparse rows. Variable ids are dense and stable.
class MilpModel {
public:
    VarId add_binary(const std::string& name) { return add_variable(name, VarKind::Binary, 0.0, 1.0); }

    VarId add_continuous(const std::string& name, double lower, double upper) {
        return add_variable(name, VarKind::Continuous, lower, upper);
    }

    void add_constraint(std::vector<Term> terms, Comparator cmp, double rhs,
                        std::string family = "misc", std::string name = {}) {
        if (!std::isfinite(rhs))
            throw ModelError("constraint right-hand side must be finite");
        for (const auto& t : terms) {
            if (t.var >= vars_.size())
                throw ModelError("constraint references unknown variable id " + std::to_string(t.var));
            if (!std::isfinite(t.coef))
                throw ModelError("non-finite coefficient on variable " + vars_[t.var].name);
        }
        if (name.empty())
            name = family + "_" + std::to_string(family_counts_[family]);
        if (!row_names_.emplace(name, rows_.size()).second)
            throw ModelError("duplicate constraint name: " + name);
        ++family_counts_[family];
        rows_.push_back(Constraint{std::move(name), std::move(family), merge(std::move(terms)), cmp, rhs});
    }

    void set_objective(std::vector<Term> terms, double constant = 0.0) {
        for (const auto& t : terms)
            if (t.var >= vars_.size())
                throw ModelError("objective references unknown variable id " + std::to_string(t.var));
        objective_ = Objective{merge(std::move(terms)), constant};
    }

    void set_bounds(VarId id, double lower, double upper) {
        check_id(id);
        if (lower > upper)
            throw ModelError("lower bound exceeds upper bound for " + vars_[id].name);
        vars_[id].lower = lower;
        vars_[id].upper = upper;
    }

    const std::vector<Variable>& variables() const { return vars_; }
    const std::vector<Constraint>& constraints() const { return rows_; }
    const Objective& objective() const { return objective_; }
    const Variable& variable(VarId id) const {
        check_id(id);
        return vars_[id];
    }
    std::size_t num_variables() const { return vars_.size(); }
    std::size_t num_constraints() const { return rows_.size(); }

    std::size_t family_count(const std::string& family) const {
        auto it = family_counts_.find(family);
        return it == family_counts_.end() ? 0 : it->second;
    }
    const std::map<std::string, std::size_t>& family_counts() const { return family_counts_; }

    std::optional<VarId> find(const std::string& name) const {
        auto it = var_names_.find(name);
        if (it == var_names_.end())
            return std::nullopt;
        return it->second;
    }

private:
    VarId add_variable(const std::string& name, VarKind kind, double lower, double upper) {
        if (name.empty())
            throw ModelError("variable name must not be empty");
        if (std::isnan(lower) || std::isnan(upper) || lower > upper)
            throw ModelError("invalid bounds for variable " + name);
        if (!var_names_.emplace(name, vars_.size()).second)
            throw ModelError("duplicate variable name: " + name);
        vars_.push_back(Variable{name, kind, lower, upper});
        return vars_.size() - 1;
    }

    void check_id(VarId id) const {
        if (id >= vars_.size())
            throw ModelError("unknown variable id " + std::to_string(id));
    }

    // Combines repeated variables and drops exact zeros; keeps first-seen order.
    static std::vector<Term> merge(std::vector<Term> terms) {
        std::vector<Term> out;
        std::unordered_map<VarId, std::size_t> pos;
        for (const auto& t : terms) {
            auto [it, fresh] = pos.emplace(t.var, out.size());
            if (fresh)
                out.push_back(t);
            else
                out[it->second].coef += t.coef;
        }
        std::erase_if(out, [](const Term& t) { return t.coef == 0.0; });
        return out;
    }

    std::vector<Variable> vars_;
    std::vector<Constraint> rows_;
    Objective objective_;
    std::unordered_map<std::string, VarId> var_names_;
    std::unordered_map<std::string, std::size_t> row_names_;
    std::map<std::string, std::size_t> family_counts_;
};

enum class SolveStatus { Optimal, FeasibleTimeLimit, NoSolutionTimeLimit, Infeasible, Unbounded };

inline const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleTimeLimit: return "feasible-time-limit";
    case SolveStatus::NoSolutionTimeLimit: return "infeasible-unproven";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    }
    return "unknown";
}

struct MilpSolution {
    SolveStatus status = SolveStatus::Infeasible;
    std::vector<double> values;
    double objective = kInf;
    double best_bound = -kInf;
    std::size_t nodes = 0;
    std::size_t lp_iterations = 0;
    double wall_time = 0.0;

    bool has_solution() const {
        return status == SolveStatus::Optimal || status == SolveStatus::FeasibleTimeLimit;
    }
    double gap() const {
        if (!has_solution())
            return kInf;
        return (objective - best_bound) / std::max(1.0, std::abs(objective));
    }
};

struct EvaluationReport {
    bool feasible = true;
    double worst_violation = 0.0;
    std::string worst_item;
    double objective = 0.0;
};

inline double row_activity(const Constraint& row, const std::vector<double>& x) {
    double s = 0.0;
    for (const auto& t : row.terms)
        s += t.coef * x[t.var];
    return s;
}

inline double row_violation(const Constraint& row, double activity) {
    switch (row.cmp) {
    case Comparator::LessEq: return std::max(0.0, activity - row.rhs);
    case Comparator::GreaterEq: return std::max(0.0, row.rhs - activity);
    case Comparator::Equal: return std::abs(activity - row.rhs);
    }
    return 0.0;
}

/// Checks bounds, rows and binary integrality at `tol`; computes the objective.
inline EvaluationReport evaluate(const MilpModel& model, const std::vector<double>& x,
                                 double tol = kFeasibilityTol) {
    if (x.size() != model.num_variables())
        throw ModelError("assignment covers " + std::to_string(x.size()) + " of " +
                         std::to_string(model.num_variables()) + " variables");
    EvaluationReport rep;
    auto note = [&](double v, const std::string& what) {
        if (v > rep.worst_violation) {
            rep.worst_violation = v;
            rep.worst_item = what;
        }
    };
    const auto& vars = model.variables();
    for (std::size_t j = 0; j < vars.size(); ++j) {
        const auto& v = vars[j];
        note(std::max({0.0, v.lower - x[j], x[j] - v.upper}), v.name);
        if (v.kind == VarKind::Binary)
            note(std::abs(x[j] - std::round(x[j])), v.name);
    }
    for (const auto& row : model.constraints())
        note(row_violation(row, row_activity(row, x)), row.name);
    rep.feasible = rep.worst_violation <= tol;
    rep.objective = model.objective().constant;
    for (const auto& t : model.objective().terms)
        rep.objective += t.coef * x[t.var];
    return rep;
}

namespace detail {

inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_terms(std::ostringstream& out, const std::vector<Term>& terms,
                        const std::vector<Variable>& vars) {
    if (terms.empty()) {
        out << " 0 " << (vars.empty() ? std::string("__zero") : vars.front().name);
        return;
    }
    std::size_t col = 0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& t = terms[k];
        std::string piece = (t.coef < 0 ? " - " : (k == 0 ? " " : " + ")) +
                            format_number(std::abs(t.coef)) + " " + vars[t.var].name;
        if (col + piece.size() > 240) {
            out << "\n  ";
            col = 2;
        }
        out << piece;
        col += piece.size();
    }
}

} // namespace detail

/// Writes the model in CPLEX LP format. Output is deterministic: rows and
/// variables in id order, coefficients with 17 significant digits.
inline std::string export_lp(const MilpModel& model, const std::string& problem_name = "cfmilp") {
    std::ostringstream out;
    const auto& vars = model.variables();
    out << "\\ Problem: " << problem_name << "\n";
    out << "Minimize\n obj:";
    detail::write_terms(out, model.objective().terms, vars);
    if (model.objective().constant != 0.0)
        out << (model.objective().constant < 0 ? " - " : " + ")
            << detail::format_number(std::abs(model.objective().constant)) << " constant";
    out << "\nSubject To\n";
    for (const auto& row : model.constraints()) {
        out << " " << row.name << ":";
        detail::write_terms(out, row.terms, vars);
        const char* op = row.cmp == Comparator::LessEq ? " <= " : row.cmp == Comparator::GreaterEq ? " >= " : " = ";
        out << op << detail::format_number(row.rhs) << "\n";
    }
    if (model.objective().constant != 0.0)
        out << " fix_constant: 1 constant = 1\n";
    out << "Bounds\n";
    for (const auto& v : vars) {
        if (v.kind == VarKind::Binary)
            continue;
        const bool lo_inf = v.lower == -kInf, hi_inf = v.upper == kInf;
        if (lo_inf && hi_inf)
            out << " " << v.name << " free\n";
        else if (lo_inf)
            out << " -inf <= " << v.name << " <= " << detail::format_number(v.upper) << "\n";
        else if (hi_inf)
            out << " " << v.name << " >= " << detail::format_number(v.lower) << "\n";
        else
            out << " " << detail::format_number(v.lower) << " <= " << v.name
                << " <= " << detail::format_number(v.upper) << "\n";
    }
    bool any_binary = false;
    for (const auto& v : vars)
        any_binary = any_binary || v.kind == VarKind::Binary;
    if (any_binary) {
        out << "Binaries\n";
        for (const auto& v : vars)
            if (v.kind == VarKind::Binary)
                out << " " << v.name << "\n";
    }
    out << "End\n";
    return out.str();
}

} // namespace cfmilp
