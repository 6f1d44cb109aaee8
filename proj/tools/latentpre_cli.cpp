#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "latentpre/dataset.hpp"
#include "latentpre/identify.hpp"
#include "latentpre/latent_em.hpp"
#include "latentpre/metrics.hpp"
#include "latentpre/partition.hpp"
#include "latentpre/pipeline.hpp"
#include "latentpre/synthgen.hpp"

namespace {

using nlohmann::json;
using namespace latentpre;

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ValidationError("write failed: " + path);
}

void emit(const json& j, const std::string& report_path) {
    std::cout << j.dump(2) << std::endl;
    if (!report_path.empty()) write_json_file(j, report_path);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    for (char c : s) {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else {
            item.push_back(c);
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

struct CommonOpts {
    std::string input, roles_path, report_path;
    std::uint64_t seed = 0;
    int workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_data = true) {
    if (needs_data) {
        cmd->add_option("--input", o.input, "input CSV")->required();
        cmd->add_option("--roles", o.roles_path, "roles JSON file")->required();
    }
    cmd->add_option("--seed", o.seed, "random seed (fans out to all stages)");
    cmd->add_option("--workers", o.workers, "worker thread cap");
    cmd->add_option("--report", o.report_path, "write the machine report here");
}

int run(int argc, char** argv) {
    CLI::App app{"latentpre: fairness-aware categorical data pre-processing"};
    app.require_subcommand(1);

    // --- preprocess ---
    CommonOpts pp;
    std::string pp_output, pp_params_out, pp_config_path;
    PipelineConfig pcfg;
    bool pp_keep_latent = false;
    auto* cmd_pp = app.add_subcommand("preprocess", "run the full pipeline and emit D'");
    add_common(cmd_pp, pp);
    cmd_pp->add_option("--output", pp_output, "output CSV path")->required();
    cmd_pp->add_option("--config", pp_config_path, "JSON config file (flags override)");
    cmd_pp->add_option("--tau", pcfg.tau, "latent state count");
    cmd_pp->add_option("--alpha", pcfg.identify.alpha, "max conditioning-set size");
    cmd_pp->add_option("--significance", pcfg.identify.significance, "CI test level");
    cmd_pp->add_option("--epsilon", pcfg.epsilon, "partition relative tolerance");
    cmd_pp->add_option("--n-iter", pcfg.n_iter, "max EM iterations");
    cmd_pp->add_option("--eta", pcfg.eta, "EM convergence threshold");
    cmd_pp->add_option("--smoothing", pcfg.smoothing, "CPT smoothing delta");
    cmd_pp->add_option("--params-out", pp_params_out, "persist fitted parameters");
    cmd_pp->add_flag("--keep-latent", pp_keep_latent, "retain the latent column in D'");

    // --- identify ---
    CommonOpts id;
    IdentifyConfig idcfg;
    auto* cmd_id = app.add_subcommand("identify", "find the inadmissible parents of the label");
    add_common(cmd_id, id);
    cmd_id->add_option("--alpha", idcfg.alpha, "max conditioning-set size");
    cmd_id->add_option("--significance", idcfg.significance, "CI test level");

    // --- partition ---
    CommonOpts pt;
    PartitionConfig ptcfg;
    std::string pt_ic;
    IdentifyConfig pt_idcfg;
    auto* cmd_pt = app.add_subcommand("partition", "bipartition I_c minimizing pairwise CMI");
    add_common(cmd_pt, pt);
    cmd_pt->add_option("--ic", pt_ic, "comma-separated I_c (default: run identify)");
    cmd_pt->add_option("--tau", ptcfg.tau, "latent state count (cardinality floor)");
    cmd_pt->add_option("--epsilon", ptcfg.epsilon, "relative tolerance");
    cmd_pt->add_option("--alpha", pt_idcfg.alpha, "identify: max conditioning-set size");
    cmd_pt->add_option("--significance", pt_idcfg.significance, "identify: CI test level");

    // --- estimate ---
    CommonOpts es;
    std::string es_ic, es_params_out;
    int es_tau = 2, es_n_iter = 800, es_restarts = 1;
    double es_eta = 0.001, es_smoothing = kDefaultSmoothing, es_epsilon = 1e-5;
    IdentifyConfig es_idcfg;
    auto* cmd_es = app.add_subcommand("estimate", "fit the latent-augmented policy by EM");
    add_common(cmd_es, es);
    cmd_es->add_option("--ic", es_ic, "comma-separated I_c (default: run identify)");
    cmd_es->add_option("--tau", es_tau, "latent state count");
    cmd_es->add_option("--n-iter", es_n_iter, "max EM iterations");
    cmd_es->add_option("--eta", es_eta, "convergence threshold");
    cmd_es->add_option("--epsilon", es_epsilon, "partition relative tolerance");
    cmd_es->add_option("--smoothing", es_smoothing, "CPT smoothing delta");
    cmd_es->add_option("--restarts", es_restarts, "EM restarts, keep best final loglik");
    cmd_es->add_option("--alpha", es_idcfg.alpha, "identify: max conditioning-set size");
    cmd_es->add_option("--params-out", es_params_out, "write fitted parameters here")
        ->required();

    // --- evaluate ---
    CommonOpts ev;
    std::string ev_train, ev_test;
    int ev_folds = 0;
    auto* cmd_ev = app.add_subcommand("evaluate", "ROD / NMI / AUC evaluation report");
    add_common(cmd_ev, ev, false);
    cmd_ev->add_option("--train", ev_train, "training CSV")->required();
    cmd_ev->add_option("--test", ev_test, "testing CSV (ignored with --folds)");
    cmd_ev->add_option("--roles", ev.roles_path, "roles JSON file")->required();
    cmd_ev->add_option("--folds", ev_folds, "seeded k-fold cross-validation");

    // --- synth ---
    CommonOpts sy;
    std::string sy_csv, sy_roles, sy_spec;
    int sy_attrs = 7, sy_domain = 4;
    std::size_t sy_n = 50000;
    double sy_density = 0.4;
    RolesTemplate sy_tmpl;
    auto* cmd_sy = app.add_subcommand("synth", "generate a synthetic causal-DAG dataset");
    add_common(cmd_sy, sy, false);
    cmd_sy->add_option("--out-csv", sy_csv, "output CSV")->required();
    cmd_sy->add_option("--out-roles", sy_roles, "output roles file")->required();
    cmd_sy->add_option("--out-spec", sy_spec, "output DAG spec (for oracles)");
    cmd_sy->add_option("--n-attrs", sy_attrs, "attribute count including the label");
    cmd_sy->add_option("--domain", sy_domain, "domain size of observed attributes");
    cmd_sy->add_option("--density", sy_density, "edge density");
    cmd_sy->add_option("--n", sy_n, "record count");
    cmd_sy->add_option("--n-sensitive", sy_tmpl.n_sensitive, "sensitive attribute count");
    cmd_sy->add_option("--n-inadmissible", sy_tmpl.n_inadmissible, "inadmissible count");
    cmd_sy->add_option("--n-additional", sy_tmpl.n_additional, "additional count");
    cmd_sy->add_option("--n-label-parents", sy_tmpl.n_label_parents_inadmissible,
                       "forced inadmissible label parents");

    // --- indep-test ---
    CommonOpts it;
    std::string it_x, it_y, it_z, it_test = "auto";
    double it_sig = 0.05;
    auto* cmd_it = app.add_subcommand("indep-test", "run a single CI test");
    add_common(cmd_it, it);
    cmd_it->add_option("--x", it_x, "first attribute")->required();
    cmd_it->add_option("--y", it_y, "second attribute")->required();
    cmd_it->add_option("--z", it_z, "comma-separated conditioning set");
    cmd_it->add_option("--test", it_test, "chi2 | g | auto");
    cmd_it->add_option("--significance", it_sig, "level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (cmd_pp->parsed()) {
        if (!pp_config_path.empty()) {
            std::ifstream in(pp_config_path);
            if (!in) throw ValidationError("cannot open " + pp_config_path);
            json jc;
            try {
                in >> jc;
            } catch (const json::exception& e) {
                throw ValidationError("config parse error: " + std::string(e.what()));
            }
            // file supplies defaults; explicit flags override below via CLI11 state
            if (jc.contains("tau") && cmd_pp->count("--tau") == 0) pcfg.tau = jc["tau"];
            if (jc.contains("alpha") && cmd_pp->count("--alpha") == 0)
                pcfg.identify.alpha = jc["alpha"];
            if (jc.contains("significance") && cmd_pp->count("--significance") == 0)
                pcfg.identify.significance = jc["significance"];
            if (jc.contains("epsilon") && cmd_pp->count("--epsilon") == 0)
                pcfg.epsilon = jc["epsilon"];
            if (jc.contains("n_iter") && cmd_pp->count("--n-iter") == 0)
                pcfg.n_iter = jc["n_iter"];
            if (jc.contains("eta") && cmd_pp->count("--eta") == 0) pcfg.eta = jc["eta"];
            if (jc.contains("smoothing") && cmd_pp->count("--smoothing") == 0)
                pcfg.smoothing = jc["smoothing"];
            if (jc.contains("seed") && cmd_pp->count("--seed") == 0) pp.seed = jc["seed"];
        }
        pcfg.seed = pp.seed;
        pcfg.keep_latent = pp_keep_latent;
        auto [ds, roles] = load_dataset(pp.input, pp.roles_path);
        auto result = preprocess(ds, roles, pcfg);
        write_csv(result.output, pp_output);
        if (!pp_params_out.empty()) write_json_file(params_to_json(result.params), pp_params_out);
        emit(preprocess_report_json(result), pp.report_path);
        return 0;
    }

    if (cmd_id->parsed()) {
        auto [ds, roles] = load_dataset(id.input, id.roles_path);
        auto result = identify_ic_instrumented(ds, roles, idcfg);
        json j = json::array();
        for (const auto& a : result.ic) j.push_back(a);
        emit(j, id.report_path);
        return 0;
    }

    if (cmd_pt->parsed()) {
        auto [ds, roles] = load_dataset(pt.input, pt.roles_path);
        std::vector<std::string> ic =
            pt_ic.empty() ? identify_ic(ds, roles, pt_idcfg) : split_list(pt_ic);
        std::vector<std::string> z = detail::block_parents_c(ds, roles, ic);
        ptcfg.seed = pt.seed;
        auto result = partition_ic_instrumented(ds, ic, z, ptcfg);
        json j = {{"left", result.partition.left},
                  {"right", result.partition.right},
                  {"objective_bits", result.partition.objective},
                  {"effective_tau", result.effective_tau},
                  {"tau_reduced", result.tau_reduced}};
        emit(j, pt.report_path);
        return 0;
    }

    if (cmd_es->parsed()) {
        auto [ds, roles] = load_dataset(es.input, es.roles_path);
        std::vector<std::string> ic =
            es_ic.empty() ? identify_ic(ds, roles, es_idcfg) : split_list(es_ic);
        if (ic.size() < 2)
            throw ValidationError("estimate: needs at least 2 attributes in I_c");
        std::vector<std::string> z = detail::block_parents_c(ds, roles, ic);
        PartitionConfig pc{es_tau, es_epsilon, es.seed};
        auto part = partition_ic(ds, ic, z, pc);
        PolicyParams best;
        bool have = false;
        for (int r = 0; r < std::max(es_restarts, 1); ++r) {
            auto params = estimate(ds, part, roles, es_tau, es_n_iter, es_eta,
                                   substream_seed(es.seed, "restart", r), es_smoothing);
            if (!have || params.final_loglik > best.final_loglik) {
                best = std::move(params);
                have = true;
            }
        }
        write_json_file(params_to_json(best), es_params_out);
        json j = {{"tau", best.tau},
                  {"iterations_run", best.iterations_run},
                  {"final_loglik", best.final_loglik},
                  {"partition", {{"left", best.partition.left}, {"right", best.partition.right}}}};
        emit(j, es.report_path);
        return 0;
    }

    if (cmd_ev->parsed()) {
        RoleSpec roles = load_roles(ev.roles_path);
        Dataset train = load_csv(ev_train);
        roles.validate(train);
        json folds_json = json::array();
        auto eval_split = [&](const Dataset& tr, const Dataset& te, json& sink) {
            auto clf = train_eval_reference_classifier(tr, te, roles);
            double r = rod(clf.predictions, te, roles.sensitive, roles.admissible);
            sink["auc"] = clf.auc;
            sink["rod_abs_log"] = r;
        };
        if (ev_folds > 1) {
            auto assign = fold_assignment(train.n_records(), ev_folds, ev.seed);
            for (int f = 0; f < ev_folds; ++f) {
                std::vector<std::uint8_t> is_test(train.n_records()), is_train(train.n_records());
                for (std::size_t j = 0; j < train.n_records(); ++j) {
                    is_test[j] = assign[j] == f;
                    is_train[j] = assign[j] != f;
                }
                json fj = {{"fold", f}};
                eval_split(select_records(train, is_train), select_records(train, is_test), fj);
                folds_json.push_back(fj);
            }
        } else {
            if (ev_test.empty())
                throw ValidationError("evaluate: need --test or --folds");
            Dataset test = load_csv(ev_test);
            roles.validate(test);
            json fj = {{"fold", 0}};
            eval_split(train, test, fj);
            folds_json.push_back(fj);
        }
        double auc = 0.0, r = 0.0;
        for (const auto& fj : folds_json) {
            auc += fj.at("auc").get<double>();
            r += fj.at("rod_abs_log").get<double>();
        }
        json j = {{"version", "latentpre-eval-v1"},
                  {"auc", auc / folds_json.size()},
                  {"rod_abs_log", r / folds_json.size()},
                  {"folds", folds_json},
                  {"metadata", {{"seed", ev.seed}, {"n_folds", folds_json.size()}}}};
        // latent diagnostics when the latent column was kept
        if (train.has_attr("__latent__")) {
            auto diag = latent_sensitive_diagnostics(train, "__latent__", roles.sensitive);
            j["nmi_by_sensitive"] = diag.nmi;
            j["chi2_p_by_sensitive"] = diag.chi2_p;
        }
        emit(j, ev.report_path);
        return 0;
    }

    if (cmd_sy->parsed()) {
        auto [spec, roles] = random_spec(sy_attrs, sy_domain, sy_density, sy_tmpl, sy.seed);
        Dataset ds = generate(spec, sy_n, sy.seed);
        write_csv(ds, sy_csv);
        write_roles(roles, sy_roles);
        if (!sy_spec.empty()) write_json_file(spec_to_json(spec), sy_spec);
        json j = {{"n_records", ds.n_records()}, {"n_attrs", ds.n_attrs()}};
        emit(j, sy.report_path);
        return 0;
    }

    if (cmd_it->parsed()) {
        auto [ds, roles] = load_dataset(it.input, it.roles_path);
        std::vector<std::string> z = split_list(it_z);
        TestResult t;
        std::string used;
        if (it_test == "chi2" || (it_test == "auto" && z.empty())) {
            t = chi_square_test(ds, it_x, it_y, it_sig);
            used = "chi2";
        } else if (it_test == "g" || it_test == "auto") {
            if (z.empty()) throw ValidationError("indep-test: G-test needs --z");
            t = g_test_conditional(ds, it_x, it_y, z, it_sig);
            used = "g";
        } else {
            throw ValidationError("indep-test: unknown --test " + it_test);
        }
        json j = {{"test", used},
                  {"statistic", t.statistic},
                  {"dof", t.dof},
                  {"p_value", t.p_value},
                  {"independent", t.independent}};
        emit(j, it.report_path);
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error&) {
        return 1;
    } catch (const latentpre::ValidationError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}
