#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfmilp/bench.hpp"
#include "cfmilp/oracle.hpp"

namespace {

using namespace cfmilp;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNoRecourse = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string formulation = "reduced";
    std::string out;
};

RunConfig load(const Common& c) {
    RunConfig cfg = load_run_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.forest.seed = *c.seed;
    }
    return cfg;
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out);
    if (!f)
        throw DataError("cannot write " + out);
    f << text;
}

struct Instance {
    Pipeline p;
    ActionSpace space;
    ReferenceSet refs;
    std::size_t position = 0;
};

// The `index`-th rejected test instance with a reference set of size N.
Instance instance_for(const Common& c, std::size_t index, std::optional<std::size_t> n) {
    Instance in;
    in.p = prepare(load(c));
    const auto& cfg = in.p.config;
    auto rejected = rejected_instances(in.p, index + 1);
    if (rejected.size() <= index)
        throw PreconditionError("test split has only " + std::to_string(rejected.size()) + " rejected instances");
    in.position = rejected[index];
    in.space = build_action_space(in.p.test.x.row(in.position), in.p.train, cfg.actions);
    const std::size_t N = n.value_or(cfg.N.front());
    in.refs = make_reference_set(in.p.train, N, cfg.seed, build_mahalanobis(in.p.train.x),
                                 fit_delta_metric(in.p.train.x));
    return in;
}

ExplainOptions options_for(const RunConfig& cfg, const std::string& formulation, std::size_t N) {
    ExplainOptions opt;
    opt.lambda = cfg.lambda;
    opt.formulation = formulation_from_string(formulation);
    opt.margin = cfg.margin;
    opt.solver.time_limit = cfg.time_limit_for(N);
    opt.solver.rel_gap = cfg.rel_gap;
    opt.solver.node_limit = cfg.node_limit;
    opt.solver.seed = cfg.seed;
    return opt;
}

int cmd_train(const Common& c) {
    auto p = prepare(load(c));
    auto j = model_to_json(p.classifier);
    std::fprintf(stderr, "train accuracy %.4f, test accuracy %.4f, test recall %.4f\n", p.train_metrics.accuracy,
                 p.test_metrics.accuracy, p.test_metrics.recall);
    emit(dump_model(p.classifier), c.out);
    return kOk;
}

int cmd_explain(const Common& c, std::size_t index, std::optional<std::size_t> n) {
    auto in = instance_for(c, index, n);
    const auto& cfg = in.p.config;
    auto e = explain(in.space, in.p.classifier, in.refs.ctx, options_for(cfg, c.formulation, in.refs.N));
    auto j = explanation_to_json(e, cfg.record_timing);
    j["instance"] = in.position;
    j["N"] = in.refs.N;
    if (e.found()) {
        j["md"] = in.refs.ctx.md.distance(in.space.origin, e.counterfactual);
        j["lof10"] = in.refs.lof10.lof(e.counterfactual);
    }
    emit(j.dump(2) + "\n", c.out);
    return e.found() ? kOk : kNoRecourse;
}

int cmd_bench(const Common& c) {
    auto cfg = load(c);
    if (!c.out.empty())
        cfg.output_dir = c.out;
    auto p = prepare(cfg);
    auto res = run_benchmark(p);
    write_bench_outputs(res, cfg);
    std::fprintf(stderr, "%zu records written to %s\n", res.records.size(), cfg.output_dir.c_str());
    return kOk;
}

int cmd_export_lp(const Common& c, std::size_t index, std::optional<std::size_t> n) {
    auto in = instance_for(c, index, n);
    auto b = build_model(in.space, in.p.classifier, in.refs.ctx,
                         options_for(in.p.config, c.formulation, in.refs.N));
    emit(export_lp(b.model), c.out);
    return kOk;
}

int cmd_oracle(const Common& c, std::size_t index, std::optional<std::size_t> n) {
    auto in = instance_for(c, index, n);
    auto r = brute_force_oracle(in.space, in.p.classifier, in.refs.ctx, in.p.config.lambda, in.p.config.margin);
    nlohmann::json j;
    j["instance"] = in.position;
    j["N"] = in.refs.N;
    j["evaluated"] = r.evaluated;
    j["found"] = r.found;
    if (r.found) {
        j["action"] = in.space.describe(r.choice);
        j["counterfactual"] = r.counterfactual;
        j["objective"] = r.objective;
        j["md_term"] = r.md_term;
        j["lof_term"] = r.lof_term;
    }
    emit(j.dump(2) + "\n", c.out);
    return r.found ? kOk : kNoRecourse;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Plausible counterfactual explanations via mixed-integer programming"};
    app.require_subcommand(1);
    Common c;
    std::size_t index = 0;
    std::optional<std::size_t> n;

    auto add_common = [&](CLI::App* sub, bool formulation) {
        sub->add_option("--config", c.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", c.seed, "override the config seed");
        sub->add_option("--out", c.out, "output file (directory for bench)");
        if (formulation)
            sub->add_option("--formulation", c.formulation, "nearest-neighbor encoding")
                ->check(CLI::IsMember({"original", "reduced"}));
    };
    auto add_instance = [&](CLI::App* sub) {
        sub->add_option("--instance", index, "which rejected test instance (0-based)");
        sub->add_option("--N", n, "reference set size (default: first N in the config)");
    };

    auto* train = app.add_subcommand("train", "train the configured classifier and print it as JSON");
    add_common(train, false);
    auto* expl = app.add_subcommand("explain", "solve one counterfactual");
    add_common(expl, true);
    add_instance(expl);
    auto* bench = app.add_subcommand("bench", "run the configured benchmark grid");
    add_common(bench, false);
    auto* lp = app.add_subcommand("export-lp", "write the MILP for one instance in LP format");
    add_common(lp, true);
    add_instance(lp);
    auto* oracle = app.add_subcommand("oracle", "exhaustive search for one instance");
    add_common(oracle, false);
    add_instance(oracle);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*train)
            return cmd_train(c);
        if (*expl)
            return cmd_explain(c, index, n);
        if (*bench)
            return cmd_bench(c);
        if (*lp)
            return cmd_export_lp(c, index, n);
        return cmd_oracle(c, index, n);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kUsage;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const std::length_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
}
