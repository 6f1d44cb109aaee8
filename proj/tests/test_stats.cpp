#include <doctest.h>

#include <cmath>
#include <vector>

#include "latentpre/rng.hpp"
#include "latentpre/stats.hpp"
#include "oracle_utils.hpp"

using namespace latentpre;

namespace {

// Random three-column dataset with some dependence injected through shared
// driver values.
Dataset random_triple(std::uint64_t seed, std::size_t n = 400) {
    Rng rng(seed);
    std::vector<int> x(n), y(n), z(n);
    for (std::size_t j = 0; j < n; ++j) {
        z[j] = static_cast<int>(rng.next_below(3));
        x[j] = (z[j] + static_cast<int>(rng.next_below(2))) % 3;
        y[j] = (z[j] + static_cast<int>(rng.next_below(3))) % 4;
    }
    return oracle::make_ds({"x", "y", "z"}, {3, 4, 3}, {x, y, z});
}

}  // namespace

TEST_CASE("entropy hand values") {
    SUBCASE("uniform binary is 1 bit") {
        auto ds = oracle::make_ds({"a"}, {2}, {{0, 1, 0, 1}});
        CHECK(entropy(ds, "a") == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant column is 0 bits") {
        auto ds = oracle::make_ds({"a"}, {2}, {{1, 1, 1, 1}});
        CHECK(entropy(ds, "a") == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("3/4 vs 1/4 split") {
        auto ds = oracle::make_ds({"a"}, {2}, {{0, 0, 0, 1}});
        double expect = -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25));
        CHECK(entropy(ds, "a") == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("mutual information hand values") {
    SUBCASE("identical columns carry full entropy") {
        auto ds = oracle::make_ds({"x", "y"}, {2, 2}, {{0, 1, 0, 1}, {0, 1, 0, 1}});
        CHECK(mutual_info(ds, "x", "y") == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("independent balanced columns give 0") {
        auto ds = oracle::make_ds({"x", "y"}, {2, 2},
                                  {{0, 0, 1, 1}, {0, 1, 0, 1}});
        CHECK(mutual_info(ds, "x", "y") == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("cmi matches the joint-table oracle") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        auto ds = random_triple(seed);
        double fast = cond_mutual_info(ds, "x", "y", {"z"});
        double slow = oracle::joint_table_cmi(ds, {"x"}, {"y"}, {"z"});
        CHECK(std::fabs(fast - slow) <= 1e-9);
        double fast0 = mutual_info(ds, "x", "y");
        double slow0 = oracle::joint_table_cmi(ds, {"x"}, {"y"}, {});
        CHECK(std::fabs(fast0 - slow0) <= 1e-9);
    }
}

TEST_CASE("chain rule I(X;Y,Z) = I(X;Z) + I(X;Y|Z)") {
    for (std::uint64_t seed = 11; seed <= 16; ++seed) {
        auto ds = random_triple(seed);
        double lhs = oracle::joint_table_cmi(ds, {"x"}, {"y", "z"}, {});
        double rhs = mutual_info(ds, "x", "z") + cond_mutual_info(ds, "x", "y", {"z"});
        CHECK(std::fabs(lhs - rhs) <= 1e-9);
    }
}

TEST_CASE("xor triple: marginally independent, conditionally dependent") {
    // x, y uniform independent, z = x xor y
    std::vector<int> x, y, z;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int rep = 0; rep < 25; ++rep) {
                x.push_back(a);
                y.push_back(b);
                z.push_back(a ^ b);
            }
    auto ds = oracle::make_ds({"x", "y", "z"}, {2, 2, 2}, {x, y, z});
    CHECK(mutual_info(ds, "x", "y") == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cond_mutual_info(ds, "x", "y", {"z"}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cmi invariants") {
    for (std::uint64_t seed = 21; seed <= 26; ++seed) {
        auto ds = random_triple(seed);
        double ixy = cond_mutual_info(ds, "x", "y", {"z"});
        double iyx = cond_mutual_info(ds, "y", "x", {"z"});
        CHECK(ixy >= 0.0);
        CHECK(ixy == doctest::Approx(iyx).epsilon(1e-12));
        // conditioning cannot raise entropy: I(X;Y) <= H(X)
        CHECK(mutual_info(ds, "x", "y") <= entropy(ds, "x") + 1e-12);
        CHECK(mutual_info(ds, "x", "y") <= entropy(ds, "y") + 1e-12);
    }
}

TEST_CASE("pairwise objective sums the cross terms") {
    auto ds = random_triple(31);
    double obj = pairwise_cmi_objective(ds, {"x"}, {"y"}, {"z"});
    CHECK(obj == doctest::Approx(cond_mutual_info(ds, "x", "y", {"z"})).epsilon(1e-12));
    CHECK_THROWS_AS(pairwise_cmi_objective(ds, {"x"}, {"x"}, {}), ValidationError);
    CHECK_THROWS_AS(pairwise_cmi_objective(ds, {}, {"x"}, {}), ValidationError);
    CHECK_THROWS_AS(pairwise_cmi_objective(ds, {"x"}, {"y"}, {"x"}), ValidationError);
}

TEST_CASE("nmi properties") {
    SUBCASE("identical columns give 1") {
        auto ds = oracle::make_ds({"x", "y"}, {3, 3},
                                  {{0, 1, 2, 0, 1, 2}, {0, 1, 2, 0, 1, 2}});
        CHECK(nmi(ds, "x", "y") == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant column gives 0") {
        auto ds = oracle::make_ds({"x", "y"}, {2, 2}, {{0, 0, 0}, {0, 1, 0}});
        CHECK(nmi(ds, "x", "y") == 0.0);
    }
    SUBCASE("bounded in [0,1] and symmetric") {
        for (std::uint64_t seed = 41; seed <= 46; ++seed) {
            auto ds = random_triple(seed);
            double v = nmi(ds, "x", "y");
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK(v == doctest::Approx(nmi(ds, "y", "x")).epsilon(1e-12));
        }
    }
}
