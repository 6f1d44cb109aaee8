#include <doctest.h>

#include <cmath>
#include <vector>

#include "latentpre/pipeline.hpp"
#include "latentpre/rng.hpp"
#include "latentpre/synthgen.hpp"
#include "oracle_utils.hpp"

using namespace latentpre;

namespace {

struct Fixture {
    Dataset ds;
    RoleSpec roles;
};

// the 7-node template layout: S={V0}, I={V2,V4}, A={V1,V3,V5}, binary Y
Fixture template_fixture(std::uint64_t seed, std::size_t n = 12000) {
    auto [spec, roles] = random_spec(7, 3, 0.35, {}, seed);
    return {generate(spec, n, seed), roles};
}

std::vector<double> marginal(const Dataset& ds, const std::string& attr) {
    std::vector<double> p(ds.domain(attr).size(), 0.0);
    for (int code : ds.column(attr)) p[code] += 1.0;
    for (auto& v : p) v /= static_cast<double>(ds.n_records());
    return p;
}

}  // namespace

TEST_CASE("preprocess keeps record count and schema") {
    auto f = template_fixture(1);
    PipelineConfig cfg;
    cfg.seed = 5;
    auto r = preprocess(f.ds, f.roles, cfg);
    CHECK(r.output.n_records() == f.ds.n_records());
    CHECK(r.output.attribute_names() == f.ds.attribute_names());
    for (std::size_t i = 0; i < f.ds.n_attrs(); ++i)
        CHECK(r.output.domain(i).codes == f.ds.domain(i).codes);
}

TEST_CASE("latent column only appears when requested") {
    auto f = template_fixture(2, 6000);
    PipelineConfig cfg;
    auto plain = preprocess(f.ds, f.roles, cfg);
    CHECK_FALSE(plain.output.has_attr("__latent__"));
    cfg.keep_latent = true;
    auto kept = preprocess(f.ds, f.roles, cfg);
    CHECK(kept.output.has_attr("__latent__"));
    CHECK(kept.output.n_attrs() == f.ds.n_attrs() + 1);
}

TEST_CASE("bootstrapped context block preserves marginals") {
    auto f = template_fixture(3, 20000);
    PipelineConfig cfg;
    cfg.seed = 11;
    auto r = preprocess(f.ds, f.roles, cfg);
    // every attribute outside I_c u {Y} is bootstrapped from the input rows
    for (const auto& name : r.params.x_block) {
        double tv = oracle::tv_distance(marginal(f.ds, name), marginal(r.output, name));
        CHECK(tv < 0.02);
    }
    // resampled label stays roughly on the input base rate
    double tv_y = oracle::tv_distance(marginal(f.ds, f.roles.label),
                                      marginal(r.output, f.roles.label));
    CHECK(tv_y < 0.05);
}

TEST_CASE("same seed gives byte-identical output") {
    auto f = template_fixture(4, 5000);
    PipelineConfig cfg;
    cfg.seed = 21;
    auto a = preprocess(f.ds, f.roles, cfg);
    auto b = preprocess(f.ds, f.roles, cfg);
    for (std::size_t i = 0; i < a.output.n_attrs(); ++i)
        CHECK(a.output.column(i) == b.output.column(i));
    CHECK(a.ic == b.ic);
    CHECK(a.params.final_loglik == b.params.final_loglik);
}

TEST_CASE("different seeds give different samples") {
    auto f = template_fixture(5, 5000);
    PipelineConfig cfg;
    cfg.seed = 1;
    auto a = preprocess(f.ds, f.roles, cfg);
    cfg.seed = 2;
    auto b = preprocess(f.ds, f.roles, cfg);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.output.n_attrs() && !any_diff; ++i)
        any_diff = a.output.column(i) != b.output.column(i);
    CHECK(any_diff);
}

TEST_CASE("degenerate path: no inadmissible label parent") {
    // inadmissible attributes independent of everything
    Rng rng(6);
    std::size_t n = 4000;
    std::vector<int> s(n), i1(n), i2(n), a(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
        s[j] = static_cast<int>(rng.next_below(2));
        i1[j] = static_cast<int>(rng.next_below(2));
        i2[j] = static_cast<int>(rng.next_below(2));
        a[j] = static_cast<int>(rng.next_below(2));
        y[j] = rng.next_double() < 0.3 + 0.4 * a[j] ? 1 : 0;
    }
    auto ds = oracle::make_ds({"s", "i1", "i2", "a", "y"}, {2, 2, 2, 2, 2},
                              {s, i1, i2, a, y});
    RoleSpec roles;
    roles.sensitive = {"s"};
    roles.inadmissible = {"i1", "i2"};
    roles.admissible = {"a"};
    roles.label = "y";
    PipelineConfig cfg;
    auto r = preprocess(ds, roles, cfg);
    CHECK(r.ic.empty());
    CHECK(r.tau_used == 1);
    CHECK(!r.warnings.empty());
    CHECK(r.output.n_records() == n);
}

TEST_CASE("degenerate path: single inadmissible label parent") {
    Rng rng(8);
    std::size_t n = 5000;
    std::vector<int> s(n), i1(n), i2(n), a(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
        s[j] = static_cast<int>(rng.next_below(2));
        i1[j] = static_cast<int>(rng.next_below(2));
        i2[j] = static_cast<int>(rng.next_below(2));
        a[j] = static_cast<int>(rng.next_below(2));
        y[j] = rng.next_double() < 0.15 + 0.5 * i1[j] + 0.2 * a[j] ? 1 : 0;
    }
    auto ds = oracle::make_ds({"s", "i1", "i2", "a", "y"}, {2, 2, 2, 2, 2},
                              {s, i1, i2, a, y});
    RoleSpec roles;
    roles.sensitive = {"s"};
    roles.inadmissible = {"i1", "i2"};
    roles.admissible = {"a"};
    roles.label = "y";
    PipelineConfig cfg;
    auto r = preprocess(ds, roles, cfg);
    CHECK(r.ic == std::vector<std::string>{"i1"});
    CHECK(r.tau_used == 1);
    CHECK(r.partition.left == std::vector<std::string>{"i1"});
    CHECK(r.partition.right.empty());
    CHECK(r.output.n_records() == n);
}

TEST_CASE("report json carries the run facts") {
    auto f = template_fixture(9, 4000);
    PipelineConfig cfg;
    cfg.tau = 1;
    auto r = preprocess(f.ds, f.roles, cfg);
    auto j = preprocess_report_json(r);
    CHECK(j.at("version") == "latentpre-report-v1");
    CHECK(j.at("tau_requested") == 1);
    CHECK(j.contains("ic"));
    CHECK(j.contains("stage_seconds"));
    CHECK(j.contains("final_loglik"));
}

TEST_CASE("invalid pipeline arguments") {
    auto f = template_fixture(10, 500);
    PipelineConfig cfg;
    cfg.tau = 0;
    CHECK_THROWS_AS(preprocess(f.ds, f.roles, cfg), ValidationError);
}
