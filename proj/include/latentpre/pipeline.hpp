#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"
#include "latentpre/identify.hpp"
#include "latentpre/latent_em.hpp"
#include "latentpre/partition.hpp"
#include "latentpre/rng.hpp"

// End-to-end pre-processing: identify I_c, partition it, fit the
// latent-augmented policy by EM, resample |D| records from the fitted
// factors in ancestral order, and drop the latent column.

namespace latentpre {

struct PipelineConfig {
    IdentifyConfig identify;
    int tau = 2;
    double epsilon = 1e-5;
    int n_iter = 800;
    double eta = 0.001;
    double smoothing = kDefaultSmoothing;
    std::uint64_t seed = 0;
    bool keep_latent = false;
};

struct PreprocessResult {
    Dataset output;
    std::vector<std::string> ic;
    Partition partition;
    int tau_requested = 0;
    int tau_used = 0;
    PolicyParams params;
    std::int64_t fallback_c1 = 0;
    std::int64_t fallback_c2 = 0;
    std::int64_t fallback_y = 0;
    std::vector<std::string> warnings;
    std::map<std::string, double> stage_seconds;
};

namespace detail {

class StageTimer {
public:
    explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
    template <typename F>
    auto run(const std::string& name, F&& f) {
        auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            sink_[name] = seconds_since(t0);
        } else {
            auto result = f();
            sink_[name] = seconds_since(t0);
            return result;
        }
    }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    std::map<std::string, double>& sink_;
};

}  // namespace detail

inline PreprocessResult preprocess(const Dataset& ds, const RoleSpec& roles,
                                   const PipelineConfig& cfg) {
    roles.validate(ds);
    if (cfg.tau < 1) throw ValidationError("preprocess: tau must be >= 1");
    if (ds.n_records() == 0) throw ValidationError("preprocess: empty dataset");

    PreprocessResult result;
    result.tau_requested = cfg.tau;
    detail::StageTimer timer(result.stage_seconds);

    // (1) identification
    result.ic = timer.run("identify", [&] { return identify_ic(ds, roles, cfg.identify); });

    // (2) partition; degenerate paths for |I_c| < 2
    Partition part;
    int tau_used = 1;
    if (result.ic.empty()) {
        result.warnings.push_back(
            "no inadmissible parent of the label found; latent augmentation skipped, "
            "label CPT refit only");
    } else if (result.ic.size() == 1) {
        part.left = result.ic;
        result.warnings.push_back(
            "single inadmissible parent; latent augmentation skipped (tau=1)");
    } else {
        std::vector<std::string> z = latentpre::detail::block_parents_c(ds, roles, result.ic);
        PartitionConfig pcfg;
        pcfg.tau = cfg.tau;
        pcfg.epsilon = cfg.epsilon;
        pcfg.seed = cfg.seed;
        auto pres = timer.run("partition", [&] {
            return partition_ic_instrumented(ds, result.ic, z, pcfg);
        });
        part = pres.partition;
        tau_used = pres.effective_tau;
        if (pres.tau_reduced)
            result.warnings.push_back("tau reduced from " + std::to_string(cfg.tau) +
                                      " to " + std::to_string(pres.effective_tau) +
                                      " to keep the bipartition feasible");
    }
    result.partition = part;
    result.tau_used = tau_used;

    // (3) parameter estimation
    result.params = timer.run("estimate", [&] {
        return estimate(ds, part, roles, tau_used, cfg.n_iter, cfg.eta, cfg.seed,
                        cfg.smoothing);
    });
    const PolicyParams& params = result.params;

    // (4) sampling, ancestral order: X block, L, I_c1, I_c2, Y
    const std::size_t k = ds.n_records();
    const std::size_t d = ds.n_attrs();
    std::vector<std::vector<int>> out_columns(d);
    for (auto& col : out_columns) col.resize(k);
    std::vector<int> latent_col(k);

    timer.run("sample", [&] {
        std::vector<std::size_t> x_cols;
        for (const auto& name : params.x_block) x_cols.push_back(ds.col_index(name));
        std::vector<std::size_t> c1_cols, c2_cols;
        for (const auto& name : params.cpt_c1.child_attrs) c1_cols.push_back(ds.col_index(name));
        for (const auto& name : params.cpt_c2.child_attrs) c2_cols.push_back(ds.col_index(name));
        const std::size_t y_col = ds.col_index(roles.label);
        std::vector<std::size_t> pc_cols, py_cols;
        for (const auto& name : params.cpt_c1.parent_attrs) pc_cols.push_back(ds.col_index(name));
        for (const auto& name : params.cpt_y.parent_attrs) py_cols.push_back(ds.col_index(name));

        std::vector<int> pc_tuple(pc_cols.size()), py_tuple(py_cols.size());
        for (std::size_t j = 0; j < k; ++j) {
            Rng rng(substream_seed(cfg.seed, "sample", j));
            // X block: bootstrap a complete source row
            const std::size_t src = rng.next_below(ds.n_records());
            for (std::size_t c : x_cols) out_columns[c][j] = ds.column(c)[src];
            // latent state
            const int l = params.tau == 1
                              ? 0
                              : static_cast<int>(rng.next_categorical(params.theta_l));
            latent_col[j] = l;
            // child blocks given (L, sampled parents)
            for (std::size_t t = 0; t < pc_cols.size(); ++t)
                pc_tuple[t] = out_columns[pc_cols[t]][j];
            if (!c1_cols.empty()) {
                int cc = params.cpt_c1.sample_child(l, pc_tuple, rng, &result.fallback_c1);
                const auto& tuple = params.cpt_c1.child_tuples[cc];
                for (std::size_t t = 0; t < c1_cols.size(); ++t)
                    out_columns[c1_cols[t]][j] = tuple[t];
            }
            if (!c2_cols.empty()) {
                int cc = params.cpt_c2.sample_child(l, pc_tuple, rng, &result.fallback_c2);
                const auto& tuple = params.cpt_c2.child_tuples[cc];
                for (std::size_t t = 0; t < c2_cols.size(); ++t)
                    out_columns[c2_cols[t]][j] = tuple[t];
            }
            // label given (L, sampled A u W)
            for (std::size_t t = 0; t < py_cols.size(); ++t)
                py_tuple[t] = out_columns[py_cols[t]][j];
            int yc = params.cpt_y.sample_child(l, py_tuple, rng, &result.fallback_y);
            out_columns[y_col][j] = params.cpt_y.child_tuples[yc][0];
        }
    });

    // (5) assemble with the input schema; L is dropped unless kept for diagnostics
    std::vector<CategoricalDomain> domains;
    for (std::size_t i = 0; i < d; ++i) domains.push_back(ds.domain(i));
    if (cfg.keep_latent) {
        CategoricalDomain ldom;
        ldom.attribute_name = "__latent__";
        for (int l = 0; l < params.tau; ++l) ldom.codes.push_back(std::to_string(l));
        domains.push_back(ldom);
        out_columns.push_back(std::move(latent_col));
    }
    result.output = Dataset(std::move(domains), std::move(out_columns));
    if (result.output.n_records() != ds.n_records())
        throw std::logic_error("preprocess: output record count mismatch");
    return result;
}

inline nlohmann::json preprocess_report_json(const PreprocessResult& r) {
    nlohmann::json j;
    j["version"] = "latentpre-report-v1";
    j["ic"] = r.ic;
    j["partition"] = {{"left", r.partition.left},
                      {"right", r.partition.right},
                      {"objective", r.partition.objective}};
    j["tau_requested"] = r.tau_requested;
    j["tau_used"] = r.tau_used;
    j["iterations_run"] = r.params.iterations_run;
    j["final_loglik"] = r.params.final_loglik;
    j["fallback_counts"] = {{"c1", r.fallback_c1}, {"c2", r.fallback_c2}, {"y", r.fallback_y}};
    j["warnings"] = r.warnings;
    j["stage_seconds"] = r.stage_seconds;
    return j;
}

}  // namespace latentpre
