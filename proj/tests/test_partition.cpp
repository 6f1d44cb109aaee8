#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "latentpre/partition.hpp"
#include "latentpre/rng.hpp"
#include "oracle_utils.hpp"

using namespace latentpre;

namespace {

// Two clusters {a,b} and {c,d}: each pair copies a cluster driver with flip
// noise, drivers independent. Cross-cluster CMI is near zero.
Dataset clustered_ds(std::uint64_t seed, std::size_t n = 8000) {
    Rng rng(seed);
    std::vector<int> a(n), b(n), c(n), d(n);
    for (std::size_t j = 0; j < n; ++j) {
        int u = static_cast<int>(rng.next_below(2));
        int v = static_cast<int>(rng.next_below(2));
        a[j] = rng.next_double() < 0.9 ? u : 1 - u;
        b[j] = rng.next_double() < 0.9 ? u : 1 - u;
        c[j] = rng.next_double() < 0.9 ? v : 1 - v;
        d[j] = rng.next_double() < 0.9 ? v : 1 - v;
    }
    return oracle::make_ds({"a", "b", "c", "d"}, {2, 2, 2, 2}, {a, b, c, d});
}

std::set<std::string> to_set(const std::vector<std::string>& v) {
    return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("two attributes split trivially") {
    auto ds = clustered_ds(1);
    auto r = partition_ic_instrumented(ds, {"a", "c"}, {}, {1, 1e-5, 0});
    CHECK(r.partition.left.size() == 1);
    CHECK(r.partition.right.size() == 1);
    CHECK(r.effective_tau == 1);
}

TEST_CASE("clustered structure is recovered") {
    int recovered = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto ds = clustered_ds(seed);
        auto p = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, seed});
        auto l = to_set(p.left), rset = to_set(p.right);
        bool ok = (l == std::set<std::string>{"a", "b"} &&
                   rset == std::set<std::string>{"c", "d"}) ||
                  (l == std::set<std::string>{"c", "d"} &&
                   rset == std::set<std::string>{"a", "b"});
        recovered += ok;
    }
    CHECK(recovered >= 9);
}

TEST_CASE("objective matches an independent recomputation") {
    auto ds = clustered_ds(3);
    auto p = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, 0});
    double direct = pairwise_cmi_objective(ds, p.left, p.right, {});
    CHECK(std::fabs(p.objective - direct) <= 1e-12);
}

TEST_CASE("result matches exhaustive search on small instances") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto ds = clustered_ds(seed, 3000);
        auto p = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, seed});
        double best = oracle::brute_force_bipartition(ds, {"a", "b", "c", "d"}, {}, 2,
                                                      &pairwise_cmi_objective);
        CHECK(p.objective <= best + 1e-9);
    }
}

TEST_CASE("objective trace is non-increasing") {
    auto ds = clustered_ds(5);
    auto r = partition_ic_instrumented(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, 9});
    double prev = std::numeric_limits<double>::infinity();
    for (double v : r.objective_trace) {
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("same seed gives identical partitions") {
    auto ds = clustered_ds(7);
    auto p1 = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, 42});
    auto p2 = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, 42});
    CHECK(p1.left == p2.left);
    CHECK(p1.right == p2.right);
    CHECK(p1.objective == p2.objective);
}

TEST_CASE("tau reduction on small inputs") {
    auto ds = clustered_ds(9);
    auto r = partition_ic_instrumented(ds, {"a", "b", "c"}, {}, {2, 1e-5, 0});
    CHECK(r.tau_reduced);
    CHECK(r.effective_tau == 1);
    CHECK(r.partition.left.size() + r.partition.right.size() == 3);
    CHECK(!r.partition.left.empty());
    CHECK(!r.partition.right.empty());
}

TEST_CASE("partition sides respect tau") {
    auto ds = clustered_ds(11);
    auto p = partition_ic(ds, {"a", "b", "c", "d"}, {}, {2, 1e-5, 1});
    CHECK(p.left.size() >= 2);
    CHECK(p.right.size() >= 2);
}

TEST_CASE("invalid arguments rejected") {
    auto ds = clustered_ds(13);
    CHECK_THROWS_AS(partition_ic(ds, {"a"}, {}, {1, 1e-5, 0}), ValidationError);
    CHECK_THROWS_AS(partition_ic(ds, {"a", "a"}, {}, {1, 1e-5, 0}), ValidationError);
    CHECK_THROWS_AS(partition_ic(ds, {"a", "b"}, {"a"}, {1, 1e-5, 0}), ValidationError);
    CHECK_THROWS_AS(partition_ic(ds, {"a", "b"}, {}, {0, 1e-5, 0}), ValidationError);
    CHECK_THROWS_AS(partition_ic(ds, {"a", "b"}, {}, {1, 0.0, 0}), ValidationError);
}
