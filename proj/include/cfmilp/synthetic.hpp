#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cfmilp/data.hpp"

namespace cfmilp {

/// Schema matching the UCI German Credit layout (13 categorical, 7 numeric).
inline DatasetSchema german_schema() {
    auto codes = [](int prefix, int from, int to) {
        std::vector<std::string> v;
        for (int i = from; i <= to; ++i)
            v.push_back("A" + std::to_string(prefix) + std::to_string(i));
        return v;
    };
    auto cat = [](std::string name, std::vector<std::string> c) {
        return FeatureSpec{std::move(name), FeatureKind::Categorical, std::move(c)};
    };
    auto num = [](std::string name) { return FeatureSpec{std::move(name), FeatureKind::Numeric, {}}; };
    DatasetSchema s;
    s.features = {cat("checking_status", codes(1, 1, 4)),
                  num("duration"),
                  cat("credit_history", codes(3, 0, 4)),
                  cat("purpose", {"A40", "A41", "A42", "A43", "A44", "A45", "A46", "A48", "A49", "A410"}),
                  num("credit_amount"),
                  cat("savings", codes(6, 1, 5)),
                  cat("employment", codes(7, 1, 5)),
                  num("installment_rate"),
                  cat("personal_status", codes(9, 1, 4)),
                  cat("other_parties", codes(10, 1, 3)),
                  num("residence_since"),
                  cat("property", codes(12, 1, 4)),
                  num("age"),
                  cat("other_installment_plans", codes(14, 1, 3)),
                  cat("housing", codes(15, 1, 3)),
                  num("existing_credits"),
                  cat("job", codes(17, 1, 4)),
                  num("num_dependents"),
                  cat("telephone", codes(19, 1, 2)),
                  cat("foreign_worker", codes(20, 1, 2))};
    s.target = "class";
    s.positive_label = "1";
    s.missing_tokens = {""};
    return s;
}

/// Schema matching the FICO HELOC layout (23 numeric features).
inline DatasetSchema heloc_schema() {
    DatasetSchema s;
    for (const char* n :
         {"ExternalRiskEstimate", "MSinceOldestTradeOpen", "MSinceMostRecentTradeOpen", "AverageMInFile",
          "NumSatisfactoryTrades", "NumTrades60Ever2DerogPubRec", "NumTrades90Ever2DerogPubRec",
          "PercentTradesNeverDelq", "MSinceMostRecentDelq", "MaxDelq2PublicRecLast12M", "MaxDelqEver",
          "NumTotalTrades", "NumTradesOpeninLast12M", "PercentInstallTrades", "MSinceMostRecentInqexcl7days",
          "NumInqLast6M", "NumInqLast6Mexcl7days", "NetFractionRevolvingBurden", "NetFractionInstallBurden",
          "NumRevolvingTradesWBalance", "NumInstallTradesWBalance", "NumBank2NatlTradesWHighUtilization",
          "PercentTradesWBalance"})
        s.features.push_back({n, FeatureKind::Numeric, {}});
    s.target = "RiskPerformance";
    s.positive_label = "Good";
    s.missing_tokens = {"", "-9", "-8", "-7"};
    return s;
}

namespace detail {

inline double clamp_round(double v, double lo, double hi) { return std::clamp(std::round(v), lo, hi); }

// Category drawn from softmax(base_k + slope_k * z).
inline std::size_t draw_category(Rng& rng, const std::vector<double>& base, const std::vector<double>& slope,
                                 double z) {
    std::vector<double> w(base.size());
    double total = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        total += w[k] = std::exp(base[k] + slope[k] * z);
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k < w.size(); ++k) {
        u -= w[k];
        if (u <= 0.0)
            return k;
    }
    return w.size() - 1;
}

} // namespace detail

/// German-Credit-like surrogate: a latent creditworthiness score drives the
/// features and a noisy logistic label with about 70% positives.
inline RawDataset synthetic_german(std::size_t rows, std::uint64_t seed) {
    RawDataset ds;
    ds.schema = german_schema();
    Rng rng(seed);
    // Per-category logits fixed by the seed.
    std::vector<std::vector<double>> base, slope;
    for (const auto& f : ds.schema.features) {
        std::vector<double> b, s;
        for (std::size_t k = 0; k < f.categories.size(); ++k) {
            b.push_back(0.8 * rng.normal());
            s.push_back(0.9 * rng.normal());
        }
        base.push_back(b);
        slope.push_back(s);
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double z = rng.normal();
        std::vector<double> row(ds.schema.features.size());
        for (std::size_t f = 0; f < row.size(); ++f) {
            const auto& name = ds.schema.features[f].name;
            if (ds.schema.features[f].kind == FeatureKind::Categorical) {
                row[f] = static_cast<double>(detail::draw_category(rng, base[f], slope[f], z));
            } else if (name == "duration") {
                row[f] = detail::clamp_round(21.0 + 10.0 * rng.normal() - 4.0 * z, 4, 72);
            } else if (name == "credit_amount") {
                row[f] = detail::clamp_round(std::exp(7.9 + 0.7 * rng.normal() - 0.15 * z), 250, 18424);
            } else if (name == "installment_rate") {
                row[f] = detail::clamp_round(3.0 + 1.1 * rng.normal() - 0.3 * z, 1, 4);
            } else if (name == "residence_since") {
                row[f] = detail::clamp_round(2.8 + 1.1 * rng.normal(), 1, 4);
            } else if (name == "age") {
                row[f] = detail::clamp_round(35.0 + 11.0 * rng.normal() + 2.5 * z, 19, 75);
            } else if (name == "existing_credits") {
                row[f] = detail::clamp_round(1.4 + 0.6 * rng.normal() + 0.1 * z, 1, 4);
            } else {
                row[f] = rng.uniform() < 0.15 ? 2.0 : 1.0;
            }
        }
        const double p = 1.0 / (1.0 + std::exp(-(1.1 + 1.3 * z + 0.6 * rng.normal())));
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(rng.uniform() < p ? "1" : "2");
    }
    return ds;
}

/// HELOC-like surrogate with a balanced label.
inline RawDataset synthetic_heloc(std::size_t rows, std::uint64_t seed) {
    RawDataset ds;
    ds.schema = heloc_schema();
    Rng rng(seed);
    const std::size_t D = ds.schema.features.size();
    std::vector<double> center(D), spread(D), load(D);
    for (std::size_t d = 0; d < D; ++d) {
        center[d] = 5.0 + 60.0 * rng.uniform();
        spread[d] = 2.0 + 0.4 * center[d] * rng.uniform();
        load[d] = rng.normal();
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double z = rng.normal();
        std::vector<double> row(D);
        for (std::size_t d = 0; d < D; ++d)
            row[d] = std::max(0.0, std::round(center[d] + spread[d] * (0.6 * load[d] * z + 0.8 * rng.normal())));
        const double p = 1.0 / (1.0 + std::exp(-(1.2 * z + 0.8 * rng.normal())));
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(rng.uniform() < p ? "Good" : "Bad");
    }
    return ds;
}

/// Writes raw rows back as CSV in schema order with the target last.
inline void write_raw_csv(std::ostream& out, const RawDataset& ds) {
    for (const auto& f : ds.schema.features)
        out << f.name << ",";
    out << ds.schema.target << "\n";
    out.precision(17);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t f = 0; f < ds.schema.features.size(); ++f) {
            const auto& spec = ds.schema.features[f];
            if (spec.kind == FeatureKind::Categorical)
                out << spec.categories[static_cast<std::size_t>(ds.rows[r][f])];
            else
                out << ds.rows[r][f];
            out << ",";
        }
        out << ds.labels[r] << "\n";
    }
}

} // namespace cfmilp
