#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentpre/ci_tests.hpp"
#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"
#include "latentpre/rng.hpp"
#include "latentpre/stats.hpp"

// Evaluation harness: ROD over sensitive pairs, latent-sensitive dependence
// diagnostics, and a smoothed conditional-likelihood reference classifier
// with rank-statistic AUC.

namespace latentpre {

struct EvalReport {
    double rod_abs_log = 0.0;
    std::map<std::string, double> nmi_by_sensitive;
    std::map<std::string, double> chi2_p_by_sensitive;
    double auc = 0.0;
    nlohmann::json metadata;
};

// |ln ROD|: for each ordered pair of sensitive joint values, average the
// conditional odds ratio of the prediction over realized admissible strata
// where both groups are present, then take the max over pairs.
inline double rod(const std::vector<int>& preds, const Dataset& ds,
                  const std::vector<std::string>& sensitive,
                  const std::vector<std::string>& admissible, double smoothing = 0.5) {
    const std::size_t n = ds.n_records();
    if (preds.size() != n) throw ValidationError("rod: prediction length mismatch");
    if (sensitive.empty()) throw ValidationError("rod: no sensitive attributes");
    for (int p : preds)
        if (p != 0 && p != 1) throw ValidationError("rod: predictions must be binary 0/1");

    StratumIndex s_idx = stratify(ds, sensitive);
    StratumIndex a_idx = stratify(ds, admissible);
    const int S = s_idx.n_groups;
    const int A = a_idx.n_groups;
    if (S < 2) throw ValidationError("rod: fewer than two sensitive joint values");

    // counts[a][s] = (positives, negatives)
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> counts(
        A, std::vector<std::pair<std::int64_t, std::int64_t>>(S, {0, 0}));
    for (std::size_t j = 0; j < n; ++j) {
        auto& cell = counts[a_idx.group[j]][s_idx.group[j]];
        if (preds[j] == 1) ++cell.first;
        else ++cell.second;
    }

    double best = -1.0;
    for (int s0 = 0; s0 < S; ++s0) {
        for (int s1 = 0; s1 < S; ++s1) {
            if (s0 == s1) continue;
            double sum = 0.0;
            int strata_used = 0;
            for (int a = 0; a < A; ++a) {
                const auto& c0 = counts[a][s0];
                const auto& c1 = counts[a][s1];
                if (c0.first + c0.second == 0 || c1.first + c1.second == 0) continue;
                double p0 = (c0.first + smoothing) / (c0.first + c0.second + 2.0 * smoothing);
                double p1 = (c1.first + smoothing) / (c1.first + c1.second + 2.0 * smoothing);
                sum += (p0 * (1.0 - p1)) / ((1.0 - p0) * p1);
                ++strata_used;
            }
            if (strata_used == 0) continue;
            best = std::max(best, sum / strata_used);
        }
    }
    if (best < 0.0) throw ValidationError("rod: undefined, no stratum contains two sensitive groups");
    return std::fabs(std::log(best));
}

struct LatentDiagnostics {
    std::map<std::string, double> nmi;     // per sensitive attribute + "joint"
    std::map<std::string, double> chi2_p;  // same keys
};

// NMI and chi-square p-value of the retained latent column against each
// sensitive attribute and the joint sensitive configuration.
inline LatentDiagnostics latent_sensitive_diagnostics(
    const Dataset& ds, const std::string& latent_attr,
    const std::vector<std::string>& sensitive) {
    if (sensitive.empty())
        throw ValidationError("latent diagnostics: no sensitive attributes");
    LatentDiagnostics out;
    auto eval_pair = [&](const Dataset& d, const std::string& key, const std::string& other) {
        out.nmi[key] = nmi(d, latent_attr, other);
        auto t = chi_square_test(d, latent_attr, other);
        out.chi2_p[key] = t.p_value;
    };
    for (const auto& s : sensitive) eval_pair(ds, s, s);
    if (sensitive.size() > 1) {
        // materialize the joint sensitive configuration as a derived column
        StratumIndex joint = stratify(ds, sensitive);
        CategoricalDomain dom;
        dom.attribute_name = "__joint_sensitive__";
        for (int g = 0; g < joint.n_groups; ++g) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "g%06d", g);
            dom.codes.emplace_back(buf);
        }
        Dataset tmp({ds.domain(latent_attr), dom},
                    {ds.column(latent_attr), joint.group});
        eval_pair(tmp, "joint", "__joint_sensitive__");
    } else {
        out.nmi["joint"] = out.nmi.at(sensitive[0]);
        out.chi2_p["joint"] = out.chi2_p.at(sensitive[0]);
    }
    return out;
}

// --- Reference classifier ----------------------------------------------

// Additive-smoothed naive conditional-likelihood classifier over all
// non-label attributes. Stands in for external model stacks when scoring
// processed data.
struct ReferenceClassifier {
    std::string label;
    std::vector<std::string> features;
    std::vector<double> log_prior;                       // per class
    std::vector<std::vector<std::vector<double>>> log_lik;  // [feature][class][code]
    double smoothing = 1.0;

    static ReferenceClassifier fit(const Dataset& train, const RoleSpec& roles,
                                   double smoothing = 1.0) {
        ReferenceClassifier clf;
        clf.label = roles.label;
        clf.smoothing = smoothing;
        const int C = train.domain(roles.label).size();
        const auto& yc = train.column(roles.label);
        const std::size_t n = train.n_records();
        std::vector<std::int64_t> class_count(C, 0);
        for (int y : yc) ++class_count[y];
        clf.log_prior.resize(C);
        for (int c = 0; c < C; ++c)
            clf.log_prior[c] =
                std::log((class_count[c] + smoothing) / (n + smoothing * C));
        for (const auto& name : train.attribute_names()) {
            if (name == roles.label) continue;
            clf.features.push_back(name);
            const int K = train.domain(name).size();
            const auto& col = train.column(name);
            std::vector<std::vector<std::int64_t>> count(C, std::vector<std::int64_t>(K, 0));
            for (std::size_t j = 0; j < n; ++j) ++count[yc[j]][col[j]];
            std::vector<std::vector<double>> ll(C, std::vector<double>(K));
            for (int c = 0; c < C; ++c)
                for (int k = 0; k < K; ++k)
                    ll[c][k] = std::log((count[c][k] + smoothing) /
                                        (class_count[c] + smoothing * K));
            clf.log_lik.push_back(std::move(ll));
        }
        return clf;
    }

    // posterior probability of class 1 (binary labels)
    std::vector<double> score(const Dataset& test) const {
        const std::size_t n = test.n_records();
        const int C = static_cast<int>(log_prior.size());
        std::vector<double> scores(n);
        std::vector<const std::vector<int>*> cols;
        std::vector<int> sizes;
        for (std::size_t f = 0; f < features.size(); ++f) {
            cols.push_back(&test.column(features[f]));
            sizes.push_back(static_cast<int>(log_lik[f][0].size()));
        }
        std::vector<double> logp(C);
        for (std::size_t j = 0; j < n; ++j) {
            for (int c = 0; c < C; ++c) logp[c] = log_prior[c];
            for (std::size_t f = 0; f < features.size(); ++f) {
                int code = (*cols[f])[j];
                for (int c = 0; c < C; ++c) {
                    // unseen test category: smoothed uniform contribution
                    logp[c] += code < sizes[f] ? log_lik[f][c][code]
                                               : -std::log(static_cast<double>(sizes[f]));
                }
            }
            double mx = *std::max_element(logp.begin(), logp.end());
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(logp[c] - mx);
            scores[j] = std::exp(logp[1] - mx) / z;
        }
        return scores;
    }
};

// AUC by the rank statistic with tie correction.
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ValidationError("auc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::int64_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    for (int y : labels) (y == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw ValidationError("auc: needs both positive and negative labels");
    return (rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0)) / (static_cast<double>(n_pos) * n_neg);
}

struct ClassifierEval {
    double auc = 0.0;
    std::vector<double> scores;
    std::vector<int> predictions;  // threshold 0.5
};

inline ClassifierEval train_eval_reference_classifier(const Dataset& train,
                                                      const Dataset& test,
                                                      const RoleSpec& roles) {
    if (train.domain(roles.label).size() != 2)
        throw ValidationError("reference classifier: label must be binary");
    auto clf = ReferenceClassifier::fit(train, roles);
    ClassifierEval ev;
    ev.scores = clf.score(test);
    ev.predictions.resize(ev.scores.size());
    for (std::size_t j = 0; j < ev.scores.size(); ++j)
        ev.predictions[j] = ev.scores[j] >= 0.5 ? 1 : 0;
    ev.auc = auc_score(ev.scores, test.column(roles.label));
    return ev;
}

// Seeded k-fold assignment of record indices.
inline std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
    std::vector<int> assign(n);
    for (std::size_t j = 0; j < n; ++j) assign[j] = static_cast<int>(j % folds);
    Rng rng(substream_seed(seed, "folds"));
    for (std::size_t j = n; j > 1; --j)
        std::swap(assign[j - 1], assign[rng.next_below(j)]);
    return assign;
}

inline Dataset select_records(const Dataset& ds, const std::vector<std::uint8_t>& keep) {
    std::vector<CategoricalDomain> domains;
    std::vector<std::vector<int>> columns(ds.n_attrs());
    for (std::size_t i = 0; i < ds.n_attrs(); ++i) {
        domains.push_back(ds.domain(i));
        for (std::size_t j = 0; j < ds.n_records(); ++j)
            if (keep[j]) columns[i].push_back(ds.column(i)[j]);
    }
    return Dataset(std::move(domains), std::move(columns));
}

}  // namespace latentpre
