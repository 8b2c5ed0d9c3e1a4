#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfmilp/data.hpp"

namespace cfmilp {

inline constexpr int kModelFormatVersion = 1;

enum class LinearKind { Logistic, Svm };

struct LinearModel {
    LinearKind kind = LinearKind::Logistic;
    std::vector<double> weights;
    double intercept = 0.0;
    std::optional<StandardScaler> scaler; // present iff kind == Svm
    bool converged = true;
    std::size_t iterations = 0;

    void validate() const {
        if (kind == LinearKind::Svm && !scaler)
            throw DataError("svm model requires a scaler");
        if (kind == LinearKind::Logistic && scaler)
            throw DataError("logistic model must not carry a scaler");
        if (scaler && scaler->width() != weights.size())
            throw DataError("scaler width does not match weight vector");
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;  // x[feature] <= threshold
    int right = -1;
    double prob = 0.0; // positive-class fraction, leaves only
};

struct Tree {
    std::vector<TreeNode> nodes; // root at 0

    std::size_t leaf_of(std::span<const double> x) const {
        std::size_t at = 0;
        while (nodes[at].feature >= 0)
            at = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[at].feature)] <= nodes[at].threshold
                                              ? nodes[at].left
                                              : nodes[at].right);
        return at;
    }
    std::size_t depth(std::size_t at = 0) const {
        if (nodes[at].feature < 0)
            return 0;
        return 1 + std::max(depth(static_cast<std::size_t>(nodes[at].left)),
                            depth(static_cast<std::size_t>(nodes[at].right)));
    }
};

struct Forest {
    std::vector<Tree> trees;
    std::size_t width = 0;
    std::size_t max_depth = 0;
};

using Classifier = std::variant<LinearModel, Forest>;

inline std::size_t model_width(const Classifier& c) {
    if (const auto* lm = std::get_if<LinearModel>(&c))
        return lm->weights.size();
    return std::get<Forest>(c).width;
}

inline std::string model_kind_name(const Classifier& c) {
    if (const auto* lm = std::get_if<LinearModel>(&c))
        return lm->kind == LinearKind::Logistic ? "logistic" : "svm";
    return "forest";
}

inline void check_width(std::size_t expected, std::size_t got) {
    if (expected != got)
        throw std::invalid_argument("instance width " + std::to_string(got) + " does not match model width " +
                                    std::to_string(expected));
}

inline double decision_value(const LinearModel& m, std::span<const double> x) {
    check_width(m.weights.size(), x.size());
    double z = m.intercept;
    if (m.scaler) {
        auto s = m.scaler->apply(x);
        for (std::size_t d = 0; d < s.size(); ++d)
            z += m.weights[d] * s[d];
    } else {
        for (std::size_t d = 0; d < x.size(); ++d)
            z += m.weights[d] * x[d];
    }
    return z;
}

/// Mean leaf probability minus one half.
inline double decision_value(const Forest& f, std::span<const double> x) {
    check_width(f.width, x.size());
    double s = 0.0;
    for (const auto& t : f.trees)
        s += t.nodes[t.leaf_of(x)].prob;
    return s / static_cast<double>(f.trees.size()) - 0.5;
}

inline double decision_value(const Classifier& c, std::span<const double> x) {
    return std::visit([&](const auto& m) { return decision_value(m, x); }, c);
}

inline int predict(const Classifier& c, std::span<const double> x) { return decision_value(c, x) >= 0.0 ? 1 : -1; }

struct Metrics {
    double accuracy = 0.0;
    double recall = 0.0; // of the positive class
    double precision = 0.0;
    std::size_t count = 0;
};

inline Metrics evaluate_classifier(const Classifier& c, const EncodedDataset& ds) {
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const int p = predict(c, ds.x.row(r));
        correct += p == ds.y[r];
        tp += p == 1 && ds.y[r] == 1;
        fp += p == 1 && ds.y[r] == -1;
        fn += p == -1 && ds.y[r] == 1;
    }
    Metrics m;
    m.count = ds.size();
    if (m.count)
        m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
    if (tp + fn)
        m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp)
        m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    return m;
}

struct LogisticParams {
    double C = 1.0;
    std::size_t max_iterations = 100;
    double tolerance = 1e-8; // gradient infinity norm per training row
};

namespace detail {

inline void check_training_input(const Matrix& x, const std::vector<int>& y) {
    if (x.rows == 0)
        throw DataError("training matrix is empty");
    if (y.size() != x.rows)
        throw DataError("label count does not match training rows");
    for (int v : y)
        if (v != 1 && v != -1)
            throw DataError("labels must be -1 or +1");
}

// Column standardization used only inside the logistic trainer.
struct Standardizer {
    std::vector<double> mean, sd;
    explicit Standardizer(const Matrix& x) : mean(x.cols, 0.0), sd(x.cols, 1.0) {
        const auto n = static_cast<double>(x.rows);
        for (std::size_t c = 0; c < x.cols; ++c) {
            double m = 0.0, v = 0.0;
            for (std::size_t r = 0; r < x.rows; ++r)
                m += x(r, c);
            m /= n;
            for (std::size_t r = 0; r < x.rows; ++r)
                v += (x(r, c) - m) * (x(r, c) - m);
            mean[c] = m;
            const double s = std::sqrt(v / n);
            sd[c] = s > 0.0 ? s : 1.0;
        }
    }
};

inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace detail

/// L2-regularized logistic regression: minimizes
/// sum_r log(1 + exp(-y_r z_r)) + |w|^2 / (2C) by damped Newton steps on
/// internally standardized features. The returned weights act on raw
/// encoded features.
inline LinearModel train_logistic(const Matrix& x, const std::vector<int>& y, const LogisticParams& p = {}) {
    detail::check_training_input(x, y);
    if (!(p.C > 0.0))
        throw std::invalid_argument("logistic C must be positive");
    const std::size_t n = x.rows, D = x.cols;
    const auto P = static_cast<Eigen::Index>(D + 1); // last coordinate is the intercept
    detail::Standardizer st(x);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(n), P);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < D; ++c)
            z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (x(r, c) - st.mean[c]) / st.sd[c];
        z(static_cast<Eigen::Index>(r), P - 1) = 1.0;
    }
    Eigen::VectorXd yy(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r)
        yy(static_cast<Eigen::Index>(r)) = y[r];
    Eigen::VectorXd reg = Eigen::VectorXd::Constant(P, 1.0 / p.C);
    reg(P - 1) = 0.0;

    auto loss = [&](const Eigen::VectorXd& th) {
        const Eigen::VectorXd m = (z * th).cwiseProduct(yy);
        double s = 0.0;
        for (Eigen::Index r = 0; r < m.size(); ++r)
            s += detail::log1pexp(-m(r));
        return s + 0.5 * th.cwiseProduct(reg).dot(th);
    };

    LinearModel model;
    model.kind = LinearKind::Logistic;
    model.converged = false;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
    double f = loss(theta);
    for (std::size_t it = 0; it < p.max_iterations; ++it) {
        const Eigen::VectorXd v = z * theta;
        Eigen::VectorXd g(static_cast<Eigen::Index>(n)), h(static_cast<Eigen::Index>(n));
        for (Eigen::Index r = 0; r < v.size(); ++r) {
            const double s = 1.0 / (1.0 + std::exp(-v(r))); // P(y = +1)
            g(r) = s - (yy(r) > 0 ? 1.0 : 0.0);
            h(r) = s * (1.0 - s);
        }
        const Eigen::VectorXd grad = z.transpose() * g + reg.cwiseProduct(theta);
        model.iterations = it;
        if (grad.lpNorm<Eigen::Infinity>() <= p.tolerance * static_cast<double>(n)) {
            model.converged = true;
            break;
        }
        Eigen::MatrixXd H = z.transpose() * h.asDiagonal() * z;
        H.diagonal() += reg + Eigen::VectorXd::Constant(P, 1e-10);
        const Eigen::VectorXd step = H.ldlt().solve(grad);
        const double decrement = grad.dot(step);
        double t = 1.0, ft = f;
        Eigen::VectorXd trial;
        while (t > 1e-12) {
            trial = theta - t * step;
            ft = loss(trial);
            if (ft <= f - 0.25 * t * decrement)
                break;
            t *= 0.5;
        }
        if (!(ft < f)) {
            // No further decrease is representable.
            model.converged = grad.lpNorm<Eigen::Infinity>() <= 1e3 * p.tolerance * static_cast<double>(n);
            break;
        }
        theta = trial;
        f = ft;
    }
    model.weights.resize(D);
    model.intercept = theta(P - 1);
    for (std::size_t c = 0; c < D; ++c) {
        const double wc = theta(static_cast<Eigen::Index>(c));
        model.weights[c] = wc / st.sd[c];
        model.intercept -= wc * st.mean[c] / st.sd[c];
    }
    return model;
}

struct SvmParams {
    double C = 1.0;
    std::size_t iterations = 3000;
    double step0 = 1.0;
};

/// Soft-margin linear SVM, |w|^2 / 2 + C sum_r hinge_r, by full-batch
/// subgradient descent (step step0 / sqrt(t)) on already-scaled features.
/// The best objective iterate is returned with `scaler` attached.
inline LinearModel train_linear_svm(const Matrix& scaled, const std::vector<int>& y, const StandardScaler& scaler,
                                    const SvmParams& p = {}) {
    detail::check_training_input(scaled, y);
    if (!(p.C > 0.0))
        throw std::invalid_argument("svm C must be positive (got " + std::to_string(p.C) + ")");
    if (scaler.width() != scaled.cols)
        throw DataError("scaler width does not match training matrix");
    const std::size_t n = scaled.rows, D = scaled.cols;
    // Objective divided by C n so the step schedule is scale free.
    const double lambda = 1.0 / (p.C * static_cast<double>(n));
    std::vector<double> w(D, 0.0), g(D);
    double b = 0.0;
    auto objective = [&](std::vector<double>& gw, double& gb) {
        std::fill(gw.begin(), gw.end(), 0.0);
        gb = 0.0;
        double hinge = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double v = b;
            for (std::size_t c = 0; c < D; ++c)
                v += w[c] * scaled(r, c);
            const double margin = 1.0 - y[r] * v;
            if (margin > 0.0) {
                hinge += margin;
                gb -= y[r];
                for (std::size_t c = 0; c < D; ++c)
                    gw[c] -= y[r] * scaled(r, c);
            }
        }
        double reg = 0.0;
        for (std::size_t c = 0; c < D; ++c) {
            reg += w[c] * w[c];
            gw[c] = gw[c] / static_cast<double>(n) + lambda * w[c];
        }
        gb /= static_cast<double>(n);
        return 0.5 * lambda * reg + hinge / static_cast<double>(n);
    };
    LinearModel best;
    best.kind = LinearKind::Svm;
    best.scaler = scaler;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t <= p.iterations; ++t) {
        double gb;
        const double obj = objective(g, gb);
        if (obj < best_obj) {
            best_obj = obj;
            best.weights = w;
            best.intercept = b;
            best.iterations = t - 1;
        }
        const double eta = p.step0 / std::sqrt(static_cast<double>(t));
        for (std::size_t c = 0; c < D; ++c)
            w[c] -= eta * g[c];
        b -= eta * gb;
    }
    best.converged = true;
    return best;
}

struct ForestParams {
    std::size_t trees = 100;
    std::size_t max_depth = 6;
    std::uint64_t seed = 0;
};

namespace detail {

struct CartBuilder {
    const Matrix& x;
    const std::vector<int>& y;
    std::size_t max_depth;
    std::size_t mtry;
    Rng& rng;
    Tree tree;

    static double gini(double pos, double total) {
        if (total <= 0.0)
            return 0.0;
        const double p = pos / total;
        return 2.0 * p * (1.0 - p);
    }

    int build(std::vector<std::size_t>& idx, std::size_t depth) {
        const int at = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        double pos = 0.0;
        for (auto r : idx)
            pos += y[r] == 1;
        const double total = static_cast<double>(idx.size());
        tree.nodes[static_cast<std::size_t>(at)].prob = pos / total;
        if (depth >= max_depth || pos == 0.0 || pos == total)
            return at;

        std::vector<std::size_t> features(x.cols);
        std::iota(features.begin(), features.end(), std::size_t{0});
        rng.shuffle(features);
        features.resize(mtry);
        std::sort(features.begin(), features.end());

        const double parent = gini(pos, total) * total;
        double best_score = parent - 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> vals(idx.size());
        for (auto f : features) {
            for (std::size_t k = 0; k < idx.size(); ++k)
                vals[k] = {x(idx[k], f), y[idx[k]]};
            std::sort(vals.begin(), vals.end());
            double left_pos = 0.0;
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                left_pos += vals[k].second == 1;
                if (vals[k].first == vals[k + 1].first)
                    continue;
                const double nl = static_cast<double>(k + 1), nr = total - nl;
                const double score = gini(left_pos, nl) * nl + gini(pos - left_pos, nr) * nr;
                if (score < best_score) {
                    best_score = score;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (vals[k].first + vals[k + 1].first);
                }
            }
        }
        if (best_feature < 0)
            return at;
        std::vector<std::size_t> left, right;
        for (auto r : idx)
            (x(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(r);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(at)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        node.prob = 0.0;
        return at;
    }
};

} // namespace detail

/// Bagged CART trees (Gini, ceil(sqrt(width)) candidate features per node).
inline Forest train_forest(const Matrix& x, const std::vector<int>& y, const ForestParams& p = {}) {
    detail::check_training_input(x, y);
    if (p.trees < 1 || p.max_depth < 1)
        throw std::invalid_argument("forest needs at least one tree and depth >= 1");
    Forest f;
    f.width = x.cols;
    f.max_depth = p.max_depth;
    Rng rng(p.seed);
    const auto mtry = std::min<std::size_t>(
        x.cols, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols)))));
    for (std::size_t t = 0; t < p.trees; ++t) {
        std::vector<std::size_t> sample(x.rows);
        for (auto& s : sample)
            s = rng.below(x.rows);
        detail::CartBuilder b{x, y, p.max_depth, mtry, rng, {}};
        b.build(sample, 0);
        f.trees.push_back(std::move(b.tree));
    }
    return f;
}

// ---- persistence ----

inline nlohmann::json scaler_to_json(const StandardScaler& s) {
    return {{"means", s.means}, {"stds", s.stds}, {"scaled_cols", s.scaled_columns}};
}

inline StandardScaler scaler_from_json(const nlohmann::json& j) {
    StandardScaler s;
    s.means = j.at("means").get<std::vector<double>>();
    s.stds = j.at("stds").get<std::vector<double>>();
    s.scaled_columns = j.at("scaled_cols").get<std::vector<std::size_t>>();
    if (s.means.size() != s.stds.size())
        throw DataError("scaler means and stds differ in length");
    return s;
}

inline nlohmann::json model_to_json(const Classifier& c) {
    nlohmann::json j;
    j["version"] = kModelFormatVersion;
    j["kind"] = model_kind_name(c);
    if (const auto* lm = std::get_if<LinearModel>(&c)) {
        j["weights"] = lm->weights;
        j["intercept"] = lm->intercept;
        j["converged"] = lm->converged;
        j["iterations"] = lm->iterations;
        if (lm->scaler)
            j["scaler"] = scaler_to_json(*lm->scaler);
    } else {
        const auto& f = std::get<Forest>(c);
        j["width"] = f.width;
        j["max_depth"] = f.max_depth;
        j["trees"] = nlohmann::json::array();
        for (const auto& t : f.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : t.nodes) {
                if (n.feature < 0)
                    nodes.push_back({{"prob", n.prob}});
                else
                    nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
            }
            j["trees"].push_back(std::move(nodes));
        }
    }
    return j;
}

inline Classifier model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw DataError("unsupported model version " + std::to_string(version));
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "logistic" || kind == "svm") {
            LinearModel m;
            m.kind = kind == "svm" ? LinearKind::Svm : LinearKind::Logistic;
            m.weights = j.at("weights").get<std::vector<double>>();
            m.intercept = j.at("intercept").get<double>();
            m.converged = j.value("converged", true);
            m.iterations = j.value("iterations", std::size_t{0});
            if (j.contains("scaler"))
                m.scaler = scaler_from_json(j.at("scaler"));
            m.validate();
            return m;
        }
        if (kind == "forest") {
            Forest f;
            f.width = j.at("width").get<std::size_t>();
            f.max_depth = j.at("max_depth").get<std::size_t>();
            for (const auto& tj : j.at("trees")) {
                Tree t;
                for (const auto& nj : tj) {
                    TreeNode n;
                    if (nj.contains("prob")) {
                        n.prob = nj.at("prob").get<double>();
                    } else {
                        n.feature = nj.at("feature").get<int>();
                        n.threshold = nj.at("threshold").get<double>();
                        n.left = nj.at("left").get<int>();
                        n.right = nj.at("right").get<int>();
                        if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= f.width)
                            throw DataError("tree split column out of range");
                    }
                    t.nodes.push_back(n);
                }
                const auto count = static_cast<int>(t.nodes.size());
                for (const auto& n : t.nodes)
                    if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
                        throw DataError("tree child index out of range");
                if (t.nodes.empty())
                    throw DataError("empty tree");
                f.trees.push_back(std::move(t));
            }
            if (f.trees.empty())
                throw DataError("forest has no trees");
            return f;
        }
        throw DataError("unknown model kind " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
}

inline std::string dump_model(const Classifier& c) { return model_to_json(c).dump(2) + "\n"; }

inline void save_model(const Classifier& c, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write model file " + path);
    out << dump_model(c);
}

inline Classifier load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open model file " + path);
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("model file " + path + " is not valid JSON: " + e.what());
    }
}

} // namespace cfmilp
