#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"
#include "latentpre/rng.hpp"
#include "latentpre/stats.hpp"

// Bipartition I_c into (I_c1, I_c2), both of size >= tau, minimizing the
// cross-set sum of pairwise CMI terms given Z, by 1-move / 2-swap hill
// climbing over a precomputed pairwise CMI matrix.

namespace latentpre {

struct PartitionConfig {
    int tau = 2;
    double epsilon = 1e-5;
    std::uint64_t seed = 0;
};

struct Partition {
    std::vector<std::string> left;   // I_c1, schema order
    std::vector<std::string> right;  // I_c2, schema order
    double objective = 0.0;          // bits
};

struct PartitionResult {
    Partition partition;
    int effective_tau = 1;
    bool tau_reduced = false;
    std::vector<double> objective_trace;  // objective after each accepted update
    int iterations = 0;
};

namespace detail {

inline double cross_objective(const std::vector<std::vector<double>>& cmi,
                              const std::vector<int>& side) {
    double total = 0.0;
    const int m = static_cast<int>(side.size());
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (side[i] != side[j]) total += cmi[i][j];
    return total;
}

}  // namespace detail

inline PartitionResult partition_ic_instrumented(const Dataset& ds,
                                                 const std::vector<std::string>& ic,
                                                 const std::vector<std::string>& z,
                                                 const PartitionConfig& cfg) {
    const int m = static_cast<int>(ic.size());
    if (m < 2) throw ValidationError("partition: cannot partition fewer than 2 attributes");
    if (cfg.tau < 1) throw ValidationError("partition: tau must be >= 1");
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0))
        throw ValidationError("partition: epsilon out of (0,1)");
    {
        std::set<std::string> ic_set(ic.begin(), ic.end());
        if (static_cast<int>(ic_set.size()) != m)
            throw ValidationError("partition: duplicate attribute in I_c");
        for (const auto& zi : z)
            if (ic_set.count(zi))
                throw ValidationError("partition: conditioning set overlaps I_c");
    }

    PartitionResult result;
    result.effective_tau = cfg.tau;
    if (m < 2 * cfg.tau) {
        result.effective_tau = std::max(1, m / 2);
        result.tau_reduced = true;
    }
    const int tau = result.effective_tau;

    // pairwise CMI matrix, computed once
    std::vector<std::vector<double>> cmi(m, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            cmi[i][j] = cmi[j][i] = cond_mutual_info(ds, ic[i], ic[j], z);

    // seeded random bipartition, then feasibility repair
    Rng rng(substream_seed(cfg.seed, "partition"));
    std::vector<int> side(m);
    for (int i = 0; i < m; ++i) side[i] = static_cast<int>(rng.next_u64() & 1);
    auto count_side = [&](int s) {
        return static_cast<int>(std::count(side.begin(), side.end(), s));
    };
    while (count_side(0) < tau || count_side(1) < tau) {
        int larger = count_side(0) > count_side(1) ? 0 : 1;
        std::vector<int> members;
        for (int i = 0; i < m; ++i)
            if (side[i] == larger) members.push_back(i);
        side[members[rng.next_below(members.size())]] = 1 - larger;
    }

    double obj = detail::cross_objective(cmi, side);
    const double obj0 = obj;

    // delta of moving attribute v to the other side
    auto move_delta = [&](int v) {
        double d = 0.0;
        for (int j = 0; j < m; ++j) {
            if (j == v) continue;
            if (side[j] != side[v]) d += cmi[v][j];  // cross pair becomes internal
            else d -= cmi[v][j];                      // internal pair becomes cross
        }
        return d;  // positive means objective decreases by d
    };

    while (true) {
        ++result.iterations;
        double best_delta = 0.0;
        int best_u = -1, best_v = -1;  // v == -1 means single move of u

        const int n0_count = count_side(0);
        const int n1_count = count_side(1);

        // (1) best 1-move
        for (int v = 0; v < m; ++v) {
            int from = side[v];
            int from_count = from == 0 ? n0_count : n1_count;
            int to_count = from == 0 ? n1_count : n0_count;
            if (from_count - 1 < tau || to_count + 1 < tau) continue;
            double d = move_delta(v);
            if (d > best_delta) {
                best_delta = d;
                best_u = v;
                best_v = -1;
            }
        }

        // (2) no improving 1-move: best 2-swap, pairs in lexicographic order
        if (best_delta == 0.0) {
            for (int u = 0; u < m; ++u) {
                if (side[u] != 0) continue;
                for (int v = 0; v < m; ++v) {
                    if (side[v] != 1) continue;
                    // swap keeps cardinalities; delta decomposes minus the
                    // double-counted (u,v) cross term which stays cross
                    double d = move_delta(u) + move_delta(v) - 2.0 * cmi[u][v];
                    if (d > best_delta) {
                        best_delta = d;
                        best_u = u;
                        best_v = v;
                    }
                }
            }
        }

        if (best_delta < cfg.epsilon * obj || obj <= cfg.epsilon * obj0) break;
        side[best_u] = 1 - side[best_u];
        if (best_v >= 0) side[best_v] = 1 - side[best_v];
        obj -= best_delta;
        // guard the incremental update against floating-point drift
        double fresh = detail::cross_objective(cmi, side);
        if (std::fabs(fresh - obj) > 1e-9)
            throw std::logic_error("partition: incremental objective diverged");
        obj = fresh;
        result.objective_trace.push_back(obj);
    }

    Partition p;
    for (int i = 0; i < m; ++i)
        (side[i] == 0 ? p.left : p.right).push_back(ic[i]);
    p.objective = detail::cross_objective(cmi, side);
    result.partition = std::move(p);
    return result;
}

inline Partition partition_ic(const Dataset& ds, const std::vector<std::string>& ic,
                              const std::vector<std::string>& z,
                              const PartitionConfig& cfg) {
    return partition_ic_instrumented(ds, ic, z, cfg).partition;
}

}  // namespace latentpre
