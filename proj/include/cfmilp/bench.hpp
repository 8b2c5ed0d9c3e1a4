#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfmilp/action_space.hpp"
#include "cfmilp/classifiers.hpp"
#include "cfmilp/data.hpp"
#include "cfmilp/formulations.hpp"
#include "cfmilp/stats.hpp"
#include "cfmilp/synthetic.hpp"

namespace cfmilp {

struct RunConfig {
    // Data: a CSV plus schema, or a named synthetic surrogate.
    std::string dataset_csv;
    std::string schema_path;
    std::string synthetic; // "german", "heloc" or empty
    std::size_t synthetic_rows = 1000;
    double train_ratio = 0.75;

    std::string classifier = "logistic"; // logistic, svm, forest
    std::string model_path;              // load instead of training when set
    LogisticParams logistic;
    SvmParams svm;
    ForestParams forest;

    double lambda = 0.01;
    std::vector<std::size_t> N{20, 50, 100, 200};
    ActionConfig actions;
    std::size_t instances = 10;
    std::uint64_t seed = 0;
    std::map<std::size_t, double> time_limits; // per N; unset N use the defaults below
    double time_limit_small = 1200.0;           // N <= 50
    double time_limit_large = 3600.0;
    double rel_gap = 1e-6;
    std::size_t node_limit = 10'000'000;
    std::vector<Formulation> formulations{Formulation::Original, Formulation::Reduced};
    std::string output_dir = "out";
    bool record_timing = true;
    std::size_t parallelism = 1;
    double margin = 0.0;

    double time_limit_for(std::size_t n) const {
        if (auto it = time_limits.find(n); it != time_limits.end())
            return it->second;
        return n <= 50 ? time_limit_small : time_limit_large;
    }

    void validate() const {
        if (dataset_csv.empty() && synthetic.empty())
            throw ConfigError("config needs dataset.csv or dataset.synthetic");
        if (!synthetic.empty() && synthetic != "german" && synthetic != "heloc")
            throw ConfigError("unknown synthetic dataset '" + synthetic + "'");
        if (classifier != "logistic" && classifier != "svm" && classifier != "forest")
            throw ConfigError("unknown classifier '" + classifier + "'");
        if (N.empty())
            throw ConfigError("N list is empty");
        for (auto n : N)
            if (n < 2)
                throw ConfigError("every N must be at least 2");
        if (instances < 1)
            throw ConfigError("instances must be at least 1");
        if (!(time_limit_small > 0.0) || !(time_limit_large > 0.0))
            throw ConfigError("time limits must be positive");
        for (const auto& [n, t] : time_limits)
            if (!(t > 0.0))
                throw ConfigError("time limit for N = " + std::to_string(n) + " must be positive");
        if (!(lambda >= 0.0))
            throw ConfigError("lambda must be non-negative");
        if (parallelism < 1)
            throw ConfigError("parallelism must be at least 1");
        if (formulations.empty())
            throw ConfigError("formulation list is empty");
        if (!(train_ratio > 0.0 && train_ratio < 1.0))
            throw ConfigError("train_ratio must lie in (0, 1)");
        actions.validate();
    }
};

namespace detail {

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
    if (path.empty() || std::filesystem::path(path).is_absolute())
        return path;
    return (base / path).lexically_normal().string();
}

} // namespace detail

/// Parses a run config. Relative paths resolve against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
    RunConfig c;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.dataset_csv = detail::resolve(d.value("csv", std::string()), base_dir);
            c.schema_path = detail::resolve(d.value("schema", std::string()), base_dir);
            c.synthetic = d.value("synthetic", std::string());
            c.synthetic_rows = d.value("rows", c.synthetic_rows);
            c.train_ratio = d.value("train_ratio", c.train_ratio);
        }
        if (j.contains("classifier")) {
            const auto& m = j.at("classifier");
            c.classifier = m.value("kind", c.classifier);
            c.model_path = detail::resolve(m.value("model", std::string()), base_dir);
            c.logistic.C = m.value("C", c.logistic.C);
            c.svm.C = m.value("C", c.svm.C);
            c.logistic.max_iterations = m.value("max_iterations", c.logistic.max_iterations);
            c.svm.iterations = m.value("svm_iterations", c.svm.iterations);
            c.forest.trees = m.value("trees", c.forest.trees);
            c.forest.max_depth = m.value("max_depth", c.forest.max_depth);
        }
        c.lambda = j.value("lambda", c.lambda);
        if (j.contains("N"))
            c.N = j.at("N").get<std::vector<std::size_t>>();
        if (j.contains("actions"))
            c.actions = action_config_from_json(j.at("actions"));
        c.instances = j.value("instances", c.instances);
        c.seed = j.value("seed", c.seed);
        if (j.contains("time_limits")) {
            for (const auto& [k, v] : j.at("time_limits").items()) {
                if (k == "small")
                    c.time_limit_small = v.get<double>();
                else if (k == "large")
                    c.time_limit_large = v.get<double>();
                else
                    c.time_limits[std::stoul(k)] = v.get<double>();
            }
        }
        c.rel_gap = j.value("rel_gap", c.rel_gap);
        c.node_limit = j.value("node_limit", c.node_limit);
        if (j.contains("formulations")) {
            c.formulations.clear();
            for (const auto& f : j.at("formulations"))
                c.formulations.push_back(formulation_from_string(f.get<std::string>()));
        }
        c.output_dir = detail::resolve(j.value("output_dir", c.output_dir), base_dir);
        c.record_timing = j.value("record_timing", c.record_timing);
        c.parallelism = j.value("parallelism", c.parallelism);
        c.margin = j.value("margin", c.margin);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw ConfigError("time_limits keys must be N values, \"small\" or \"large\"");
    }
    c.forest.seed = c.seed;
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

/// Loaded data, split and classifier for one run.
struct Pipeline {
    RunConfig config;
    RawDataset raw;
    EncodedDataset data;
    EncodedDataset train;
    EncodedDataset test;
    std::vector<std::size_t> test_rows; // indices into `data`
    Classifier classifier;
    Metrics train_metrics;
    Metrics test_metrics;
};

inline RawDataset load_dataset(const RunConfig& cfg) {
    if (cfg.synthetic == "german")
        return synthetic_german(cfg.synthetic_rows, cfg.seed);
    if (cfg.synthetic == "heloc")
        return synthetic_heloc(cfg.synthetic_rows, cfg.seed);
    if (cfg.schema_path.empty())
        throw ConfigError("dataset.csv needs dataset.schema");
    return load_csv(cfg.dataset_csv, load_schema(cfg.schema_path));
}

inline Classifier train_classifier(const RunConfig& cfg, const EncodedDataset& train) {
    if (cfg.classifier == "logistic")
        return train_logistic(train.x, train.y, cfg.logistic);
    if (cfg.classifier == "svm") {
        auto scaler = fit_scaler(train.x, train.map.numeric_columns(), train.map.column_names);
        return train_linear_svm(apply_scaler(scaler, train.x), train.y, scaler, cfg.svm);
    }
    return train_forest(train.x, train.y, cfg.forest);
}

inline Pipeline prepare(const RunConfig& cfg) {
    Pipeline p;
    p.config = cfg;
    p.raw = load_dataset(cfg);
    p.data = encode(p.raw);
    if (p.data.size() < 4)
        throw DataError("dataset has only " + std::to_string(p.data.size()) + " usable rows");
    auto idx = split_indices(p.data.size(), cfg.train_ratio, cfg.seed);
    p.train = subset(p.data, idx.train);
    p.test = subset(p.data, idx.test);
    p.test_rows = idx.test;
    if (!cfg.model_path.empty()) {
        p.classifier = load_model(cfg.model_path);
        if (model_width(p.classifier) != p.data.map.width())
            throw DataError("model width does not match the dataset encoding");
    } else {
        p.classifier = train_classifier(cfg, p.train);
    }
    p.train_metrics = evaluate_classifier(p.classifier, p.train);
    p.test_metrics = evaluate_classifier(p.classifier, p.test);
    return p;
}

/// Test-set positions of the first `count` rejected instances.
inline std::vector<std::size_t> rejected_instances(const Pipeline& p, std::size_t count) {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < p.test.size() && out.size() < count; ++r)
        if (predict(p.classifier, p.test.x.row(r)) == -1)
            out.push_back(r);
    return out;
}

/// Statistics for one reference-set size: the k = 1 context used inside the
/// MILP and the k = 10 context used for evaluation.
struct ReferenceSet {
    std::size_t N = 0;
    ExplainContext ctx;
    LofContext lof10;
};

inline ReferenceSet make_reference_set(const EncodedDataset& train, std::size_t N, std::uint64_t seed,
                                       const MahalanobisContext& md, const DeltaMetric& metric) {
    ReferenceSet r;
    r.N = N;
    auto rows = gather_rows(train.x, select_reference_rows(train, N, seed));
    r.ctx.md = md;
    r.ctx.lof1 = build_lof_context(rows, metric, 1);
    r.lof10 = build_lof_context(std::move(rows), metric, std::min<std::size_t>(10, N - 1));
    return r;
}

struct BenchRecord {
    std::size_t instance = 0; // test-set position
    Formulation formulation = Formulation::Reduced;
    std::size_t N = 0;
    std::string status;
    bool found = false;
    double objective = 0.0;
    double md = 0.0;    // exact Mahalanobis distance
    double lof10 = 0.0; // 10-LOF of the counterfactual
    std::size_t nearest_rows = 0;
    std::size_t total_rows = 0;
    std::size_t nodes = 0;
    double time_s = 0.0;
    double build_time_s = 0.0;
    std::string error;
};

struct BenchResult {
    std::vector<BenchRecord> records;
    std::vector<std::size_t> explained;
    Metrics test_metrics;
};

/// Runs every (instance, N, formulation) combination. Failures become rows
/// with status "error"; the run continues.
inline BenchResult run_benchmark(const Pipeline& p) {
    const auto& cfg = p.config;
    BenchResult res;
    res.test_metrics = p.test_metrics;
    res.explained = rejected_instances(p, cfg.instances);
    const auto md = build_mahalanobis(p.train.x);
    const auto metric = fit_delta_metric(p.train.x);

    for (std::size_t N : cfg.N) {
        ReferenceSet refs = make_reference_set(p.train, N, cfg.seed, md, metric);
        struct Job {
            std::size_t instance;
            Formulation f;
        };
        std::vector<Job> jobs;
        for (auto inst : res.explained)
            for (auto f : cfg.formulations)
                jobs.push_back({inst, f});
        std::vector<BenchRecord> out(jobs.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t j = next++; j < jobs.size(); j = next++) {
                BenchRecord rec;
                rec.instance = jobs[j].instance;
                rec.formulation = jobs[j].f;
                rec.N = N;
                try {
                    auto space = build_action_space(p.test.x.row(rec.instance), p.train, cfg.actions);
                    ExplainOptions opt;
                    opt.lambda = cfg.lambda;
                    opt.formulation = rec.formulation;
                    opt.margin = cfg.margin;
                    opt.solver.time_limit = cfg.time_limit_for(N);
                    opt.solver.rel_gap = cfg.rel_gap;
                    opt.solver.node_limit = cfg.node_limit;
                    opt.solver.seed = cfg.seed;
                    auto e = explain(space, p.classifier, refs.ctx, opt);
                    rec.status = to_string(e.status);
                    rec.found = e.found();
                    rec.nearest_rows = e.constraint_counts["nearest"];
                    rec.total_rows = e.total_rows;
                    rec.nodes = e.nodes;
                    rec.time_s = e.time_s;
                    rec.build_time_s = e.build_time_s;
                    if (rec.found) {
                        rec.objective = e.objective;
                        rec.md = md.distance(space.origin, e.counterfactual);
                        rec.lof10 = refs.lof10.lof(e.counterfactual);
                    }
                } catch (const std::exception& ex) {
                    rec.status = "error";
                    rec.error = ex.what();
                }
                out[j] = std::move(rec);
            }
        };
        const std::size_t threads = std::min(cfg.parallelism, std::max<std::size_t>(1, jobs.size()));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t)
                pool.emplace_back(worker);
            for (auto& t : pool)
                t.join();
        }
        for (auto& r : out)
            res.records.push_back(std::move(r));
    }
    std::stable_sort(res.records.begin(), res.records.end(), [](const BenchRecord& a, const BenchRecord& b) {
        if (a.instance != b.instance)
            return a.instance < b.instance;
        if (a.N != b.N)
            return a.N < b.N;
        return a.formulation < b.formulation;
    });
    return res;
}

namespace detail {

inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

inline const char* kRecordHeader = "instance,formulation,N,status,objective,md,lof10,nearest_rows,total_rows,nodes,time_s";

inline void write_records_csv(std::ostream& out, const std::vector<BenchRecord>& records, bool timing) {
    out << kRecordHeader << "\n";
    for (const auto& r : records) {
        out << r.instance << "," << to_string(r.formulation) << "," << r.N << "," << r.status << ",";
        if (r.found)
            out << detail::num(r.objective) << "," << detail::num(r.md) << "," << detail::num(r.lof10);
        else
            out << "NA,NA,NA";
        out << "," << r.nearest_rows << "," << r.total_rows << "," << r.nodes << ","
            << (timing ? detail::num(r.time_s) : std::string("NA")) << "\n";
    }
}

struct SummaryRow {
    Formulation formulation;
    std::size_t N;
    std::size_t runs = 0;
    std::size_t optimal = 0;
    double time_mean = 0, time_std = 0, time_median = 0;
    double md_mean = 0, md_std = 0;
    double lof_mean = 0, lof_std = 0;
};

/// Mean and sample standard deviation (0 for fewer than two values).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty())
        return {0.0, 0.0};
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2)
        return {m, 0.0};
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

inline double median(std::vector<double> v) {
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Per (formulation, N) aggregates over optimal rows only.
inline std::vector<SummaryRow> summarize(const std::vector<BenchRecord>& records) {
    std::map<std::pair<Formulation, std::size_t>, std::vector<const BenchRecord*>> groups;
    for (const auto& r : records)
        groups[{r.formulation, r.N}].push_back(&r);
    std::vector<SummaryRow> out;
    for (const auto& [key, rows] : groups) {
        SummaryRow s{key.first, key.second};
        std::vector<double> t, m, l;
        for (const auto* r : rows) {
            ++s.runs;
            if (r->status != "optimal")
                continue;
            ++s.optimal;
            t.push_back(r->time_s);
            m.push_back(r->md);
            l.push_back(r->lof10);
        }
        std::tie(s.time_mean, s.time_std) = mean_std(t);
        s.time_median = median(t);
        std::tie(s.md_mean, s.md_std) = mean_std(m);
        std::tie(s.lof_mean, s.lof_std) = mean_std(l);
        out.push_back(s);
    }
    return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, std::size_t explained,
                              bool timing) {
    out << "formulation,N,runs,optimal,non_optimal,md_mean,md_std,lof10_mean,lof10_std,time_mean,time_std,"
           "time_median\n";
    if (explained == 0)
        out << "# zero rejected instances explained\n";
    for (const auto& s : rows) {
        out << to_string(s.formulation) << "," << s.N << "," << s.runs << "," << s.optimal << ","
            << s.runs - s.optimal << "," << detail::num(s.md_mean) << "," << detail::num(s.md_std) << ","
            << detail::num(s.lof_mean) << "," << detail::num(s.lof_std) << ",";
        if (timing)
            out << detail::num(s.time_mean) << "," << detail::num(s.time_std) << "," << detail::num(s.time_median);
        else
            out << "NA,NA,NA";
        out << "\n";
    }
}

inline void write_plot_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "N,formulation,time_s\n";
    for (const auto& s : rows)
        out << s.N << "," << to_string(s.formulation) << "," << detail::num(s.time_mean) << "\n";
}

/// Mean solve time against N, one polyline per formulation.
inline std::string plot_svg(const std::vector<SummaryRow>& rows, const std::string& title) {
    const double W = 480, H = 320, L = 60, R = 20, T = 30, B = 45;
    double nmax = 1, tmax = 1e-9;
    std::size_t nmin = static_cast<std::size_t>(-1);
    for (const auto& s : rows) {
        nmax = std::max(nmax, static_cast<double>(s.N));
        nmin = std::min(nmin, s.N);
        tmax = std::max(tmax, s.time_mean);
    }
    const double n0 = rows.empty() ? 0.0 : static_cast<double>(nmin);
    auto px = [&](double n) { return L + (nmax > n0 ? (n - n0) / (nmax - n0) : 0.5) * (W - L - R); };
    auto py = [&](double t) { return H - B - t / tmax * (H - T - B); };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">N</text>\n";
    s << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">mean solve time (s)</text>\n";
    s << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << detail::num(tmax)
      << "</text>\n";
    std::map<std::size_t, bool> ticks;
    for (const auto& r : rows)
        ticks[r.N] = true;
    for (const auto& [n, _] : ticks)
        s << "<text x=\"" << px(static_cast<double>(n)) << "\" y=\"" << H - B + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << n << "</text>\n";
    const char* colors[] = {"blue", "red"};
    int legend = 0;
    for (auto f : {Formulation::Original, Formulation::Reduced}) {
        std::ostringstream pts;
        bool any = false;
        for (const auto& r : rows)
            if (r.formulation == f) {
                pts << px(static_cast<double>(r.N)) << "," << py(r.time_mean) << " ";
                any = true;
            }
        if (!any)
            continue;
        const char* c = colors[f == Formulation::Reduced];
        s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
        s << "<text x=\"" << L + 10 << "\" y=\"" << T + 14 + 14 * legend++ << "\" fill=\"" << c
          << "\" font-size=\"12\">" << to_string(f) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Writes results.csv, summary.csv, plot.csv and time.svg into the output dir.
inline void write_bench_outputs(const BenchResult& res, const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f)
            throw DataError("cannot write " + (dir / name).string());
        return f;
    };
    auto rows = summarize(res.records);
    {
        auto f = open("results.csv");
        write_records_csv(f, res.records, cfg.record_timing);
    }
    {
        auto f = open("summary.csv");
        write_summary_csv(f, rows, res.explained.size(), cfg.record_timing);
    }
    if (cfg.record_timing) {
        auto f = open("plot.csv");
        write_plot_csv(f, rows);
        auto g = open("time.svg");
        g << plot_svg(rows, "solve time vs N");
    }
    std::vector<const BenchRecord*> failed;
    for (const auto& r : res.records)
        if (!r.error.empty())
            failed.push_back(&r);
    if (!failed.empty()) {
        auto f = open("errors.txt");
        for (const auto* r : failed)
            f << r->instance << "," << to_string(r->formulation) << "," << r->N << ": " << r->error << "\n";
    }
}

} // namespace cfmilp
