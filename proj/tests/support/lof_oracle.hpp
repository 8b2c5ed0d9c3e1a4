#pragma once

// Brute-force k-LOF straight from the definitions: all pairwise distances
// recomputed, neighborhoods by full sort. Shares no code with cfmilp::stats.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace testsupport {

struct LofOracle {
    std::vector<std::vector<double>> pts;
    std::vector<double> scale;
    std::size_t k;

    double dist(const std::vector<double>& a, const std::vector<double>& b) const {
        double s = 0;
        for (std::size_t d = 0; d < a.size(); ++d) s += std::fabs(a[d] - b[d]) / scale[d];
        return s;
    }
    // Indices of the k nearest points to q, skipping `self` (or none if -1).
    std::vector<std::size_t> hood(const std::vector<double>& q, long self) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (static_cast<long>(i) != self) idx.push_back(i);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist(q, pts[a]) < dist(q, pts[b]); });
        idx.resize(k);
        return idx;
    }
    double kdist(std::size_t p) const { return dist(pts[p], pts[hood(pts[p], static_cast<long>(p)).back()]); }
    double rd(const std::vector<double>& a, std::size_t b) const { return std::max(dist(a, pts[b]), kdist(b)); }
    double lrd_member(std::size_t p) const {
        double s = 0;
        for (auto o : hood(pts[p], static_cast<long>(p))) s += rd(pts[p], o);
        return 1.0 / (s / static_cast<double>(k));
    }
    double lrd_query(const std::vector<double>& q) const {
        double s = 0;
        for (auto o : hood(q, -1)) s += rd(q, o);
        return 1.0 / (s / static_cast<double>(k));
    }
    double lof(const std::vector<double>& q) const {
        const double lq = lrd_query(q);
        double s = 0;
        for (auto o : hood(q, -1)) s += lrd_member(o) / lq;
        return s / static_cast<double>(k);
    }
    double lof_member(std::size_t p) const {
        const double lp = lrd_member(p);
        double s = 0;
        for (auto o : hood(pts[p], static_cast<long>(p))) s += lrd_member(o) / lp;
        return s / static_cast<double>(k);
    }
};

} // namespace testsupport
