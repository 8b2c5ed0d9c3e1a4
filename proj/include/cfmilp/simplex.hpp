#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "cfmilp/milp.hpp"

namespace cfmilp {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, TimeLimit };

inline const char* to_string(LpStatus s) {
    switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
    case LpStatus::TimeLimit: return "time-limit";
    }
    return "unknown";
}

struct LpOptions {
    double primal_tol = 1e-9;
    double dual_tol = 1e-9;
    double pivot_tol = 1e-9;
    std::size_t max_iterations = 1'000'000;
    // Consecutive degenerate pivots before switching to Bland's rule.
    std::size_t bland_after = 50;
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    std::vector<double> x;
    double objective = kInf;
    std::size_t iterations = 0;
};

/// Bounded-variable simplex on a dense condensed (Tucker) tableau.
///
/// Every row i of the model gets a logical variable s_i = a_i x whose bounds
/// encode the comparator, so all rows are homogeneous and the tableau stores
/// basic variables as linear forms in the nonbasic ones:
///   x_B[r] = sum_k tab(r, k) * x_N[k].
/// The tableau is m x n (n structural columns), which keeps memory linear in
/// the row count for models with many rows and few columns. The engine keeps
/// its basis between calls so bound changes can be re-optimized with the dual
/// simplex, which is what branch-and-bound relies on.
class DenseSimplex {
public:
    explicit DenseSimplex(const MilpModel& model, LpOptions opts = {}) : opts_(opts) {
        n_ = model.num_variables();
        for (const auto& row : model.constraints()) {
            if (row.terms.empty()) {
                // Empty rows are dropped; an unsatisfiable one makes the LP infeasible.
                if (row_violation(row, 0.0) > opts_.primal_tol)
                    trivially_infeasible_ = true;
                continue;
            }
            rows_.push_back(&row);
        }
        m_ = rows_.size();
        const std::size_t total = n_ + m_;
        lo_.assign(total, 0.0);
        hi_.assign(total, 0.0);
        cost_.assign(total, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            lo_[j] = model.variables()[j].lower;
            hi_[j] = model.variables()[j].upper;
        }
        for (const auto& t : model.objective().terms)
            cost_[t.var] = t.coef;
        obj_constant_ = model.objective().constant;
        a_.assign(m_ * n_, 0.0);
        for (std::size_t i = 0; i < m_; ++i) {
            const auto* row = rows_[i];
            for (const auto& t : row->terms)
                a_[i * n_ + t.var] = t.coef;
            const std::size_t s = n_ + i;
            switch (row->cmp) {
            case Comparator::LessEq: lo_[s] = -kInf; hi_[s] = row->rhs; break;
            case Comparator::GreaterEq: lo_[s] = row->rhs; hi_[s] = kInf; break;
            case Comparator::Equal: lo_[s] = hi_[s] = row->rhs; break;
            }
        }
        reset_basis();
    }

    std::size_t num_rows() const { return m_; }
    std::size_t num_columns() const { return n_; }
    double lower(VarId j) const { return lo_[j]; }
    double upper(VarId j) const { return hi_[j]; }

    void set_bounds(VarId j, double lower, double upper) {
        lo_[j] = lower;
        hi_[j] = upper;
        if (!is_basic_[j])
            place_nonbasic(j);
        values_stale_ = true;
    }

    void set_deadline(std::optional<std::chrono::steady_clock::time_point> d) { opts_.deadline = d; }

    /// Two-phase primal simplex starting from the current basis.
    LpResult solve() {
        if (trivially_infeasible_)
            return finish(LpStatus::Infeasible);
        for (std::size_t j = 0; j < n_ + m_; ++j)
            if (lo_[j] > hi_[j])
                return finish(LpStatus::Infeasible);
        refresh_values();
        return finish(primal_loop());
    }

    /// Dual simplex from the current basis; used after bound changes. Falls
    /// back to the primal method when the basis is not dual feasible.
    LpResult reoptimize() {
        if (trivially_infeasible_)
            return finish(LpStatus::Infeasible);
        for (std::size_t j = 0; j < n_ + m_; ++j)
            if (lo_[j] > hi_[j])
                return finish(LpStatus::Infeasible);
        if (!make_dual_feasible()) {
            refresh_values();
            return finish(primal_loop());
        }
        refresh_values();
        perturb_costs();
        LpStatus st = dual_loop();
        restore_costs();
        if (st == LpStatus::IterationLimit) {
            // Dual stalled; the primal method recovers from any basis.
            reset_basis();
            refresh_values();
            st = primal_loop();
        } else if (st == LpStatus::Optimal) {
            st = primal_loop();
        }
        return finish(st);
    }

    std::size_t total_iterations() const { return total_iterations_; }

private:
    double& tab(std::size_t r, std::size_t k) { return tab_[r * n_ + k]; }
    double tab(std::size_t r, std::size_t k) const { return tab_[r * n_ + k]; }

    bool timed_out() const {
        return opts_.deadline && std::chrono::steady_clock::now() > *opts_.deadline;
    }

    void reset_basis() {
        tab_ = a_;
        obj_.assign(n_, 0.0);
        basic_.resize(m_);
        nonbasic_.resize(n_);
        is_basic_.assign(n_ + m_, false);
        pos_.assign(n_ + m_, 0);
        value_.assign(n_ + m_, 0.0);
        for (std::size_t k = 0; k < n_; ++k) {
            nonbasic_[k] = k;
            pos_[k] = k;
            obj_[k] = cost_[k];
        }
        for (std::size_t r = 0; r < m_; ++r) {
            basic_[r] = n_ + r;
            pos_[n_ + r] = r;
            is_basic_[n_ + r] = true;
        }
        for (std::size_t k = 0; k < n_; ++k)
            place_nonbasic(k, cost_[k]);
        pivots_since_refactor_ = 0;
        values_stale_ = true;
    }

    // Puts a nonbasic variable at a finite bound; prefers the one that keeps
    // the reduced cost sign consistent when a hint is given.
    void place_nonbasic(std::size_t j, double reduced_cost = 0.0) {
        const double lo = lo_[j], hi = hi_[j];
        if (std::isfinite(lo) && std::isfinite(hi))
            value_[j] = reduced_cost < 0.0 ? hi : lo;
        else if (std::isfinite(lo))
            value_[j] = lo;
        else if (std::isfinite(hi))
            value_[j] = hi;
        else
            value_[j] = 0.0;
    }

    void refresh_values() {
        if (!values_stale_)
            return;
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &tab_[r * n_];
            double s = 0.0;
            for (std::size_t k = 0; k < n_; ++k)
                s += row[k] * value_[nonbasic_[k]];
            value_[basic_[r]] = s;
        }
        values_stale_ = false;
    }

    double infeasibility(std::size_t j) const {
        const double v = value_[j];
        const double tol_lo = opts_.primal_tol * (1.0 + std::abs(lo_[j]));
        const double tol_hi = opts_.primal_tol * (1.0 + std::abs(hi_[j]));
        if (v < lo_[j] - tol_lo)
            return v - lo_[j];
        if (v > hi_[j] + tol_hi)
            return v - hi_[j];
        return 0.0;
    }

    void pivot(std::size_t r, std::size_t k) {
        const double piv = tab(r, k);
        double* prow = &tab_[r * n_];
        const double inv = 1.0 / piv;
        for (std::size_t j = 0; j < n_; ++j)
            prow[j] = -prow[j] * inv;
        prow[k] = inv;
        nz_.clear();
        for (std::size_t j = 0; j < n_; ++j)
            if (prow[j] != 0.0 && j != k)
                nz_.push_back(j);
        auto eliminate = [&](double* row) {
            const double f = row[k];
            if (f == 0.0)
                return;
            for (std::size_t j : nz_) {
                double v = row[j] + f * prow[j];
                row[j] = std::abs(v) < 1e-14 ? 0.0 : v;
            }
            row[k] = f * inv;
        };
        for (std::size_t i = 0; i < m_; ++i)
            if (i != r)
                eliminate(&tab_[i * n_]);
        eliminate(obj_.data());

        const std::size_t leaving = basic_[r];
        const std::size_t entering = nonbasic_[k];
        basic_[r] = entering;
        nonbasic_[k] = leaving;
        is_basic_[entering] = true;
        is_basic_[leaving] = false;
        pos_[entering] = r;
        pos_[leaving] = k;
        if (!in_refactor_ && ++pivots_since_refactor_ >= refactor_interval())
            refactor();
    }

    double row_norm2(std::size_t r) const {
        const double* row = &tab_[r * n_];
        double s = 1.0;
        for (std::size_t k = 0; k < n_; ++k)
            s += row[k] * row[k];
        return s;
    }

    std::size_t refactor_interval() const { return std::max<std::size_t>(400, 2 * n_); }

    // Rebuilds the tableau for the current basis from the original rows to
    // shed accumulated rounding error.
    void refactor() {
        std::vector<bool> want(is_basic_);
        std::vector<double> saved(value_);
        tab_ = a_;
        obj_.assign(n_, 0.0);
        for (std::size_t k = 0; k < n_; ++k) {
            nonbasic_[k] = k;
            pos_[k] = k;
            obj_[k] = cost_[k];
            is_basic_[k] = false;
        }
        for (std::size_t r = 0; r < m_; ++r) {
            basic_[r] = n_ + r;
            pos_[n_ + r] = r;
            is_basic_[n_ + r] = true;
        }
        pivots_since_refactor_ = 0;
        for (std::size_t j = 0; j < n_; ++j) {
            if (!want[j])
                continue;
            const std::size_t k = pos_[j];
            std::size_t best = m_;
            double best_abs = 1e-9;
            for (std::size_t r = 0; r < m_; ++r) {
                if (want[basic_[r]])
                    continue;
                const double a = std::abs(tab(r, k));
                if (a > best_abs) {
                    best_abs = a;
                    best = r;
                }
            }
            if (best == m_)
                continue;
            in_refactor_ = true;
            pivot(best, k);
            in_refactor_ = false;
        }
        value_ = saved;
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t j = nonbasic_[k];
            if (value_[j] < lo_[j] || value_[j] > hi_[j] || want[j])
                place_nonbasic(j, obj_[k]);
        }
        values_stale_ = true;
        refresh_values();
    }

    // Small sign-consistent shifts of the reduced costs; they break the
    // heavy dual degeneracy of zero-cost binaries.
    void perturb_costs() {
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t j = nonbasic_[k];
            if (lo_[j] == hi_[j] || (!std::isfinite(lo_[j]) && !std::isfinite(hi_[j])))
                continue;
            const double eps = 1e-7 * (1.0 + static_cast<double>((j * 2654435761u) % 1009) / 1009.0) *
                               (1.0 + std::abs(obj_[k]));
            obj_[k] += value_[j] == hi_[j] && std::isfinite(hi_[j]) ? -eps : eps;
        }
    }

    // Reduced costs of the true objective for the current basis.
    void restore_costs() {
        for (std::size_t k = 0; k < n_; ++k)
            obj_[k] = cost_[nonbasic_[k]];
        for (std::size_t r = 0; r < m_; ++r) {
            const double c = cost_[basic_[r]];
            if (c == 0.0)
                continue;
            const double* row = &tab_[r * n_];
            for (std::size_t k = 0; k < n_; ++k)
                obj_[k] += c * row[k];
        }
    }

    enum class Direction { Up, Down };

    bool can_increase(std::size_t j) const { return value_[j] < hi_[j] - 1e-12 || hi_[j] == kInf; }
    bool can_decrease(std::size_t j) const { return value_[j] > lo_[j] + 1e-12 || lo_[j] == -kInf; }

    LpStatus primal_loop() {
        const std::size_t start = iterations_;
        std::size_t degenerate = 0;
        std::vector<double> d(n_);
        std::vector<double> g(m_);
        for (;;) {
            if (iterations_ - start >= opts_.max_iterations)
                return LpStatus::IterationLimit;
            if ((iterations_ & 31) == 0 && timed_out())
                return LpStatus::TimeLimit;
            if ((iterations_ % 100) == 99) {
                values_stale_ = true;
                refresh_values();
            }
            bool phase1 = false;
            for (std::size_t r = 0; r < m_; ++r) {
                const double inf = infeasibility(basic_[r]);
                g[r] = inf < 0 ? -1.0 : inf > 0 ? 1.0 : 0.0;
                phase1 = phase1 || inf != 0.0;
            }
            if (phase1) {
                std::fill(d.begin(), d.end(), 0.0);
                for (std::size_t r = 0; r < m_; ++r) {
                    if (g[r] == 0.0)
                        continue;
                    const double* row = &tab_[r * n_];
                    for (std::size_t k = 0; k < n_; ++k)
                        d[k] += g[r] * row[k];
                }
            } else {
                d = obj_;
            }
            const bool bland = degenerate >= opts_.bland_after;
            std::size_t enter = n_;
            Direction dir = Direction::Up;
            double best = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                const std::size_t j = nonbasic_[k];
                if (lo_[j] == hi_[j])
                    continue;
                const double scale = opts_.dual_tol;
                std::optional<Direction> cand;
                if (d[k] < -scale && can_increase(j))
                    cand = Direction::Up;
                else if (d[k] > scale && can_decrease(j))
                    cand = Direction::Down;
                if (!cand)
                    continue;
                if (bland) {
                    if (enter == n_ || j < nonbasic_[enter]) {
                        enter = k;
                        dir = *cand;
                    }
                } else if (std::abs(d[k]) > best) {
                    best = std::abs(d[k]);
                    enter = k;
                    dir = *cand;
                }
            }
            if (enter == n_)
                return phase1 ? LpStatus::Infeasible : LpStatus::Optimal;

            const std::size_t q = nonbasic_[enter];
            const double sign = dir == Direction::Up ? 1.0 : -1.0;
            double theta = hi_[q] - lo_[q];
            std::size_t leave = m_;
            double leave_target = 0.0;
            double leave_alpha = 0.0;
            for (std::size_t r = 0; r < m_; ++r) {
                const double alpha = tab(r, enter) * sign;
                if (std::abs(alpha) <= opts_.pivot_tol)
                    continue;
                const std::size_t j = basic_[r];
                const double v = value_[j];
                const double inf = phase1 ? infeasibility(j) : 0.0;
                double limit = kInf, target = 0.0;
                if (alpha > 0) {
                    if (inf < 0) {
                        limit = (lo_[j] - v) / alpha;
                        target = lo_[j];
                    } else if (inf == 0 && hi_[j] < kInf) {
                        limit = (hi_[j] - v) / alpha;
                        target = hi_[j];
                    }
                } else {
                    if (inf > 0) {
                        limit = (v - hi_[j]) / -alpha;
                        target = hi_[j];
                    } else if (inf == 0 && lo_[j] > -kInf) {
                        limit = (v - lo_[j]) / -alpha;
                        target = lo_[j];
                    }
                }
                if (limit == kInf)
                    continue;
                limit = std::max(limit, 0.0);
                bool take;
                if (leave == m_)
                    take = limit <= theta;
                else if (limit < theta - 1e-12)
                    take = true;
                else if (limit <= theta + 1e-12)
                    take = bland ? basic_[r] < basic_[leave] : std::abs(alpha) > std::abs(leave_alpha);
                else
                    take = false;
                if (take) {
                    theta = std::min(theta, limit);
                    leave = r;
                    leave_target = target;
                    leave_alpha = alpha;
                }
            }
            if (theta == kInf)
                return LpStatus::Unbounded;

            degenerate = theta <= 1e-12 ? degenerate + 1 : 0;
            for (std::size_t r = 0; r < m_; ++r) {
                const double a = tab(r, enter);
                if (a != 0.0)
                    value_[basic_[r]] += a * sign * theta;
            }
            value_[q] += sign * theta;
            if (leave == m_) {
                // Bound flip of the entering variable.
                value_[q] = dir == Direction::Up ? hi_[q] : lo_[q];
                ++iterations_;
                ++total_iterations_;
                continue;
            }
            const std::size_t p = basic_[leave];
            pivot(leave, enter);
            value_[p] = leave_target;
            ++iterations_;
            ++total_iterations_;
        }
    }

    // Moves boxed nonbasic variables to the bound matching their reduced cost
    // sign. Returns false when some nonbasic variable cannot be made dual feasible.
    bool make_dual_feasible() {
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t j = nonbasic_[k];
            const double dk = obj_[k];
            const bool lo_fin = std::isfinite(lo_[j]), hi_fin = std::isfinite(hi_[j]);
            if (lo_[j] == hi_[j]) {
                if (value_[j] != lo_[j]) {
                    value_[j] = lo_[j];
                    values_stale_ = true;
                }
                continue;
            }
            double want;
            if (dk > opts_.dual_tol) {
                if (!lo_fin)
                    return false;
                want = lo_[j];
            } else if (dk < -opts_.dual_tol) {
                if (!hi_fin)
                    return false;
                want = hi_[j];
            } else {
                // Zero reduced cost: keep the current bound if still valid.
                if (value_[j] == lo_[j] || value_[j] == hi_[j])
                    continue;
                want = lo_fin ? lo_[j] : hi_fin ? hi_[j] : 0.0;
            }
            if (value_[j] != want) {
                value_[j] = want;
                values_stale_ = true;
            }
        }
        return true;
    }

    LpStatus dual_loop() {
        const std::size_t limit = std::min<std::size_t>(opts_.max_iterations, 50 * (m_ + n_) + 1000);
        std::size_t degenerate = 0;
        for (;;) {
            if (iterations_ >= limit)
                return LpStatus::IterationLimit;
            if ((iterations_ & 31) == 0 && timed_out())
                return LpStatus::TimeLimit;
            if ((iterations_ % 100) == 99) {
                values_stale_ = true;
                refresh_values();
            }
            const bool bland = degenerate >= opts_.bland_after;
            std::size_t leave = m_;
            double worst = 0.0;
            for (std::size_t r = 0; r < m_; ++r) {
                const double inf = std::abs(infeasibility(basic_[r]));
                if (inf == 0.0)
                    continue;
                // Steepest edge: infeasibility over the norm of the row's edge.
                const double score = bland ? inf : inf * inf / row_norm2(r);
                if (bland ? leave == m_ || basic_[r] < basic_[leave] : score > worst) {
                    worst = score;
                    leave = r;
                }
            }
            if (leave == m_)
                return LpStatus::Optimal;
            const std::size_t p = basic_[leave];
            const bool raise = value_[p] < lo_[p];
            const double target = raise ? lo_[p] : hi_[p];

            std::size_t enter = n_;
            double best_ratio = kInf;
            double best_alpha = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                const std::size_t j = nonbasic_[k];
                if (lo_[j] == hi_[j])
                    continue;
                const double alpha = tab(leave, k);
                if (std::abs(alpha) <= opts_.pivot_tol)
                    continue;
                // Direction the entering variable must move to push x_p toward target.
                const bool up = raise ? alpha > 0 : alpha < 0;
                if (up ? !can_increase(j) : !can_decrease(j))
                    continue;
                const double ratio = std::abs(obj_[k]) / std::abs(alpha);
                bool take;
                if (enter == n_ || ratio < best_ratio - 1e-12)
                    take = true;
                else if (ratio <= best_ratio + 1e-12)
                    take = bland ? j < nonbasic_[enter] : std::abs(alpha) > std::abs(best_alpha);
                else
                    take = false;
                if (take) {
                    best_ratio = std::min(best_ratio, ratio);
                    enter = k;
                    best_alpha = alpha;
                }
            }
            if (enter == n_)
                return LpStatus::Infeasible;
            degenerate = best_ratio <= 1e-12 ? degenerate + 1 : 0;
            const std::size_t q = nonbasic_[enter];
            const double theta = (target - value_[p]) / best_alpha;
            for (std::size_t r = 0; r < m_; ++r) {
                const double a = tab(r, enter);
                if (a != 0.0)
                    value_[basic_[r]] += a * theta;
            }
            value_[q] += theta;
            pivot(leave, enter);
            value_[p] = target;
            ++iterations_;
            ++total_iterations_;
        }
    }

    LpResult finish(LpStatus st) {
        LpResult res;
        res.status = st;
        res.iterations = iterations_;
        if (st == LpStatus::Optimal) {
            values_stale_ = true;
            refresh_values();
            res.x.assign(value_.begin(), value_.begin() + static_cast<std::ptrdiff_t>(n_));
            for (std::size_t j = 0; j < n_; ++j)
                res.x[j] = std::clamp(res.x[j], lo_[j], hi_[j]);
            res.objective = obj_constant_;
            for (std::size_t j = 0; j < n_; ++j)
                res.objective += cost_[j] * res.x[j];
        }
        iterations_ = 0;
        return res;
    }

    LpOptions opts_;
    std::size_t n_ = 0, m_ = 0;
    std::vector<const Constraint*> rows_;
    bool trivially_infeasible_ = false;
    std::vector<double> a_;
    std::vector<double> lo_, hi_, cost_;
    double obj_constant_ = 0.0;

    std::vector<double> tab_;
    std::vector<double> obj_;
    std::vector<std::size_t> basic_, nonbasic_, pos_;
    std::vector<bool> is_basic_;
    std::vector<double> value_;
    std::vector<std::size_t> nz_;
    bool values_stale_ = true;
    bool in_refactor_ = false;
    std::size_t pivots_since_refactor_ = 0;
    std::size_t iterations_ = 0;
    std::size_t total_iterations_ = 0;
};

/// Solves the LP relaxation of `model` (binaries relaxed to [0,1]).
inline LpResult solve_lp(const MilpModel& model, LpOptions opts = {}) {
    DenseSimplex lp(model, opts);
    return lp.solve();
}

} // namespace cfmilp
