#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfmilp/data.hpp"

namespace cfmilp {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covariance of the training matrix and the upper-triangular factor U of
/// its inverse, Sigma^-1 = U^T U.
struct MahalanobisContext {
    Eigen::MatrixXd covariance; // includes the epsilon ridge
    Eigen::MatrixXd inverse;
    Eigen::MatrixXd upper; // U
    double epsilon = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(upper.rows()); }

    Eigen::VectorXd transform(std::span<const double> displacement) const {
        check(displacement.size());
        Eigen::Map<const Eigen::VectorXd> v(displacement.data(), static_cast<Eigen::Index>(displacement.size()));
        return upper * v;
    }

    /// sqrt((x' - x)^T Sigma^-1 (x' - x))
    double distance(std::span<const double> x, std::span<const double> xp) const {
        const Eigen::VectorXd v = diff(x, xp);
        return std::sqrt(std::max(0.0, v.dot(inverse * v)));
    }
    /// ||U (x' - x)||_2
    double l2(std::span<const double> x, std::span<const double> xp) const { return (upper * diff(x, xp)).norm(); }
    /// ||U (x' - x)||_1, the linearizable surrogate.
    double l1(std::span<const double> x, std::span<const double> xp) const {
        return (upper * diff(x, xp)).lpNorm<1>();
    }

private:
    void check(std::size_t n) const {
        if (n != dim())
            throw std::invalid_argument("dimension mismatch: expected " + std::to_string(dim()) + ", got " +
                                        std::to_string(n));
    }
    Eigen::VectorXd diff(std::span<const double> x, std::span<const double> xp) const {
        check(x.size());
        check(xp.size());
        Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
        for (std::size_t d = 0; d < x.size(); ++d)
            v(static_cast<Eigen::Index>(d)) = xp[d] - x[d];
        return v;
    }
};

inline Eigen::MatrixXd covariance_matrix(const Matrix& x) {
    const auto n = static_cast<Eigen::Index>(x.rows), d = static_cast<Eigen::Index>(x.cols);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(x.data.data(), n, d);
    const Eigen::RowVectorXd mean = m.colwise().mean();
    const Eigen::MatrixXd centered = m.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(n);
}

/// Population covariance plus an epsilon ridge (default 1e-6 * trace / D),
/// inverted and factored.
inline MahalanobisContext build_mahalanobis(const Matrix& x, std::optional<double> epsilon = std::nullopt) {
    if (x.rows < 2)
        throw std::invalid_argument("Mahalanobis context needs at least 2 rows");
    MahalanobisContext ctx;
    Eigen::MatrixXd cov = covariance_matrix(x);
    const auto d = cov.rows();
    double eps = epsilon.value_or(1e-6 * cov.trace() / static_cast<double>(d));
    if (!(eps > 0.0))
        eps = 1e-6;
    ctx.epsilon = eps;
    cov.diagonal().array() += eps;
    ctx.covariance = cov;

    auto fail = [&](const Eigen::MatrixXd& m, const char* what) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
        throw NumericError(std::string(what) + " (smallest eigenvalue estimate " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");
    };
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        fail(cov, "covariance is not positive definite after regularization");
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    inv = 0.5 * (inv + inv.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt_inv(inv);
    if (llt_inv.info() != Eigen::Success)
        fail(inv, "inverse covariance could not be factored");
    ctx.inverse = inv;
    ctx.upper = llt_inv.matrixL().transpose();
    return ctx;
}

/// Weighted l1 metric: Delta(x, x') = sum_d |x_d - x'_d| / s_d.
struct DeltaMetric {
    std::vector<double> scales;

    std::size_t dim() const { return scales.size(); }
    double component(std::size_t d, double u, double v) const { return std::abs(u - v) / scales[d]; }
    double operator()(std::span<const double> x, std::span<const double> xp) const {
        double s = 0.0;
        for (std::size_t d = 0; d < scales.size(); ++d)
            s += std::abs(x[d] - xp[d]) / scales[d];
        return s;
    }
};

namespace detail {
inline double median(std::vector<double> v) {
    if (v.empty())
        return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1)
        return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}
} // namespace detail

/// Per-column scale: median absolute deviation, falling back to the
/// population standard deviation, then to 1.
inline DeltaMetric fit_delta_metric(const Matrix& x) {
    DeltaMetric m;
    m.scales.resize(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) {
        auto col = x.column(c);
        const double med = detail::median(col);
        std::vector<double> dev(col.size());
        for (std::size_t r = 0; r < col.size(); ++r)
            dev[r] = std::abs(col[r] - med);
        double s = detail::median(dev);
        if (!(s > 0.0)) {
            double mean = 0.0;
            for (double v : col)
                mean += v;
            mean /= static_cast<double>(std::max<std::size_t>(1, col.size()));
            double var = 0.0;
            for (double v : col)
                var += (v - mean) * (v - mean);
            s = std::sqrt(var / static_cast<double>(std::max<std::size_t>(1, col.size())));
        }
        m.scales[c] = s > 0.0 ? s : 1.0;
    }
    return m;
}

struct Neighbor {
    std::size_t index;
    double distance;
};

/// k nearest rows of `points` to `query` under `metric`, ascending by
/// distance with ties going to the lower index. `exclude` drops one row
/// (the query itself when it is a member).
inline std::vector<Neighbor> knn(const DeltaMetric& metric, std::span<const double> query, const Matrix& points,
                                 std::size_t k, std::optional<std::size_t> exclude = std::nullopt) {
    const std::size_t available = points.rows - (exclude ? 1 : 0);
    if (k > available)
        throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                                    " available points");
    std::vector<Neighbor> all;
    all.reserve(points.rows);
    for (std::size_t i = 0; i < points.rows; ++i)
        if (!exclude || *exclude != i)
            all.push_back({i, metric(query, points.row(i))});
    auto less = [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
    all.resize(k);
    return all;
}

/// Reference set with precomputed k-distances and local reachability
/// densities for every member.
struct LofContext {
    Matrix points;
    DeltaMetric metric;
    std::size_t k = 1;
    std::vector<std::vector<Neighbor>> neighbors;
    std::vector<double> kdist; // d_k(x^(n))
    std::vector<double> lrd;   // lrd_k(x^(n))

    std::size_t size() const { return points.rows; }

    /// rd_k(x, x^(n)) = max(Delta(x, x^(n)), d_k(x^(n)))
    double reachability(std::span<const double> x, std::size_t n) const {
        return std::max(metric(x, points.row(n)), kdist[n]);
    }

    /// Local reachability density of an arbitrary query against the set.
    double query_lrd(std::span<const double> q) const {
        auto nb = knn(metric, q, points, k);
        double s = 0.0;
        for (const auto& o : nb)
            s += std::max(o.distance, kdist[o.index]);
        return static_cast<double>(nb.size()) / s;
    }

    /// k-LOF of a query point that is not treated as a member.
    double lof(std::span<const double> q) const {
        auto nb = knn(metric, q, points, k);
        double reach = 0.0, dens = 0.0;
        for (const auto& o : nb) {
            reach += std::max(o.distance, kdist[o.index]);
            dens += lrd[o.index];
        }
        const double q_lrd = static_cast<double>(nb.size()) / reach;
        return dens / static_cast<double>(nb.size()) / q_lrd;
    }

    /// k-LOF of member n (itself excluded from its neighborhood).
    double lof_member(std::size_t n) const {
        double dens = 0.0;
        for (const auto& o : neighbors[n])
            dens += lrd[o.index];
        return dens / static_cast<double>(neighbors[n].size()) / lrd[n];
    }
};

inline LofContext build_lof_context(Matrix points, DeltaMetric metric, std::size_t k) {
    if (k == 0)
        throw std::invalid_argument("LOF needs k >= 1");
    if (points.rows <= k)
        throw std::invalid_argument("LOF reference set of " + std::to_string(points.rows) +
                                    " points is too small for k = " + std::to_string(k));
    if (metric.dim() != points.cols)
        throw std::invalid_argument("metric dimension does not match reference points");
    LofContext ctx;
    ctx.points = std::move(points);
    ctx.metric = std::move(metric);
    ctx.k = k;
    const std::size_t n = ctx.points.rows;
    ctx.neighbors.resize(n);
    ctx.kdist.resize(n);
    ctx.lrd.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ctx.neighbors[i] = knn(ctx.metric, ctx.points.row(i), ctx.points, k, i);
        ctx.kdist[i] = ctx.neighbors[i].back().distance;
        if (!(ctx.kdist[i] > 0.0))
            throw std::invalid_argument("reference set contains duplicate points (zero k-distance at row " +
                                        std::to_string(i) + ")");
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& o : ctx.neighbors[i])
            s += std::max(o.distance, ctx.kdist[o.index]);
        ctx.lrd[i] = static_cast<double>(k) / s;
    }
    return ctx;
}

struct Q1Value {
    std::size_t nearest;
    double value;
};

/// 1-LOF simplification: lrd_1(x^(n*)) * rd_1(point, x^(n*)), with n* the
/// nearest member (lowest index on ties).
inline Q1Value q1_surrogate(const LofContext& ctx, std::span<const double> point) {
    if (ctx.k != 1)
        throw std::invalid_argument("q1 surrogate requires a k = 1 context");
    auto nb = knn(ctx.metric, point, ctx.points, 1);
    const std::size_t n = nb.front().index;
    return {n, ctx.lrd[n] * std::max(nb.front().distance, ctx.kdist[n])};
}

/// Picks up to `n` distinct positive-label rows of `train` in a seeded
/// random order. Throws when fewer distinct positives exist.
inline std::vector<std::size_t> select_reference_rows(const EncodedDataset& train, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train.y[i] == 1)
            pos.push_back(i);
    Rng rng(seed);
    rng.shuffle(pos);
    std::vector<std::size_t> chosen;
    for (std::size_t i : pos) {
        if (chosen.size() == n)
            break;
        auto row = train.x.row(i);
        bool dup = false;
        for (std::size_t c : chosen) {
            auto other = train.x.row(c);
            if (std::equal(row.begin(), row.end(), other.begin())) {
                dup = true;
                break;
            }
        }
        if (!dup)
            chosen.push_back(i);
    }
    if (chosen.size() < n)
        throw DataError("only " + std::to_string(chosen.size()) + " distinct accepted training rows; N = " +
                        std::to_string(n) + " requested");
    return chosen;
}

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), x.cols);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        auto src = x.row(idx[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

inline void write_lof_table(std::ostream& out, const LofContext& ctx) {
    out << "index,k_distance,lrd\n";
    out.precision(17);
    for (std::size_t i = 0; i < ctx.size(); ++i)
        out << i << "," << ctx.kdist[i] << "," << ctx.lrd[i] << "\n";
}

} // namespace cfmilp
