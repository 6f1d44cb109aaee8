#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "latentpre/ci_tests.hpp"
#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"

// Find I_c = I intersect Pi_Y: the inadmissible attributes whose dependence on
// the label survives conditioning on every subset of size at most alpha.

namespace latentpre {

struct IdentifyConfig {
    int alpha = 2;  // max conditioning-set size
    double significance = 0.05;
};

struct IdentifyResult {
    std::vector<std::string> ic;      // schema order
    std::int64_t tests_executed = 0;  // instrumentation
};

namespace detail {

// Enumerate size-m subsets of candidates in lexicographic order of position;
// returns false from the visitor to stop early.
template <typename Visit>
bool for_each_subset(const std::vector<std::string>& candidates, int m, Visit&& visit) {
    const int n = static_cast<int>(candidates.size());
    if (m > n) return true;
    std::vector<int> idx(m);
    for (int i = 0; i < m; ++i) idx[i] = i;
    std::vector<std::string> subset(m);
    while (true) {
        for (int i = 0; i < m; ++i) subset[i] = candidates[idx[i]];
        if (!visit(subset)) return false;
        int i = m - 1;
        while (i >= 0 && idx[i] == n - m + i) --i;
        if (i < 0) return true;
        ++idx[i];
        for (int k = i + 1; k < m; ++k) idx[k] = idx[k - 1] + 1;
    }
}

}  // namespace detail

inline IdentifyResult identify_ic_instrumented(const Dataset& ds, const RoleSpec& roles,
                                               const IdentifyConfig& cfg = {}) {
    roles.validate(ds);
    if (cfg.alpha < 0) throw ValidationError("identify: alpha must be >= 0");

    // work in schema order for determinism
    std::vector<std::string> schema = ds.attribute_names();
    auto schema_pos = [&](const std::string& a) {
        return std::find(schema.begin(), schema.end(), a) - schema.begin();
    };
    std::vector<std::string> ic = roles.inadmissible;
    std::sort(ic.begin(), ic.end(), [&](const auto& a, const auto& b) {
        return schema_pos(a) < schema_pos(b);
    });
    const std::string& y = roles.label;

    IdentifyResult result;
    for (int m = 0; m <= cfg.alpha && !ic.empty(); ++m) {
        std::vector<std::string> survivors;
        for (const auto& x : ic) {
            bool removed = false;
            if (m == 0) {
                ++result.tests_executed;
                if (chi_square_test(ds, x, y, cfg.significance).independent)
                    removed = true;
            } else {
                std::vector<std::string> candidates;
                for (const auto& v : schema)
                    if (v != x && v != y) candidates.push_back(v);
                detail::for_each_subset(candidates, m, [&](const std::vector<std::string>& z) {
                    ++result.tests_executed;
                    try {
                        if (g_test_conditional(ds, x, y, z, cfg.significance).independent) {
                            removed = true;
                            return false;  // early break on first separating set
                        }
                    } catch (const InsufficientDataError&) {
                        // too sparse to decide: keep the dependence
                    }
                    return true;
                });
            }
            if (!removed) survivors.push_back(x);
        }
        ic = std::move(survivors);
    }
    result.ic = std::move(ic);
    return result;
}

inline std::vector<std::string> identify_ic(const Dataset& ds, const RoleSpec& roles,
                                            const IdentifyConfig& cfg = {}) {
    return identify_ic_instrumented(ds, roles, cfg).ic;
}

}  // namespace latentpre
