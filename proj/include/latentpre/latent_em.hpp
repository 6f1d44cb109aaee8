#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"
#include "latentpre/partition.hpp"
#include "latentpre/rng.hpp"

// Latent-augmented factorization fitted by EM: theta_l over the latent state,
// plus sparse CPTs for the two inadmissible child blocks (parents
// S u I_o u A and the latent axis) and the label (parents A u W and the
// latent axis). Child blocks are stored over realized joint configurations
// only; probabilities are smoothed expected-count ratios.

namespace latentpre {

inline constexpr double kDefaultSmoothing = 1e-6;

// A conditional distribution over the realized joint configurations of a
// child attribute block, per (latent state, realized parent configuration).
// Parent configurations never seen at fit time fall back to the per-state
// marginal over children ("backoff").
struct SparseCpt {
    std::vector<std::string> child_attrs;
    std::vector<std::string> parent_attrs;
    int tau = 1;
    double smoothing = kDefaultSmoothing;

    std::vector<std::vector<int>> child_tuples;   // child id -> codes
    std::vector<std::vector<int>> parent_tuples;  // parent id -> codes
    std::map<std::vector<int>, int> child_index;
    std::map<std::vector<int>, int> parent_index;

    // CSR over parents: realized (parent, child) pairs sorted by (parent, child)
    std::vector<int> parent_ptr;  // size P+1
    std::vector<int> pair_child;
    std::vector<std::vector<double>> pair_prob;    // [pair][l]
    std::vector<std::vector<double>> unseen_prob;  // [parent][l]: prob of each unrealized child
    std::vector<std::vector<double>> backoff;      // [l][child id]

    int n_children() const { return static_cast<int>(child_tuples.size()); }
    int n_parents() const { return static_cast<int>(parent_tuples.size()); }

    int find_child(const std::vector<int>& tuple) const {
        auto it = child_index.find(tuple);
        return it == child_index.end() ? -1 : it->second;
    }
    int find_parent(const std::vector<int>& tuple) const {
        auto it = parent_index.find(tuple);
        return it == parent_index.end() ? -1 : it->second;
    }

    // probability of child id given (l, known parent id)
    double prob(int l, int parent_id, int child_id) const {
        for (int r = parent_ptr[parent_id]; r < parent_ptr[parent_id + 1]; ++r)
            if (pair_child[r] == child_id) return pair_prob[r][l];
        return unseen_prob[parent_id][l];
    }

    // probability with parent backoff; counts fallbacks when asked
    double prob_backed(int l, const std::vector<int>& parent_tuple, int child_id,
                       std::int64_t* fallback_count = nullptr) const {
        int p = find_parent(parent_tuple);
        if (p >= 0) return prob(l, p, child_id);
        if (fallback_count) ++*fallback_count;
        return backoff[l][child_id];
    }

    // draw a child id given (l, parent tuple); unseen parents use the backoff
    int sample_child(int l, const std::vector<int>& parent_tuple, Rng& rng,
                     std::int64_t* fallback_count = nullptr) const {
        const int K = n_children();
        int p = find_parent(parent_tuple);
        if (p < 0) {
            if (fallback_count) ++*fallback_count;
            return static_cast<int>(rng.next_categorical(backoff[l]));
        }
        double u = rng.next_double();
        double acc = 0.0;
        for (int r = parent_ptr[p]; r < parent_ptr[p + 1]; ++r) {
            acc += pair_prob[r][l];
            if (u < acc) return pair_child[r];
        }
        // landed in the unrealized-children mass: pick the k-th child id not
        // present in this parent's realized row
        const double up = unseen_prob[p][l];
        int k = up > 0.0 ? static_cast<int>((u - acc) / up) : 0;
        int r = parent_ptr[p];
        for (int c = 0; c < K; ++c) {
            while (r < parent_ptr[p + 1] && pair_child[r] < c) ++r;
            if (r < parent_ptr[p + 1] && pair_child[r] == c) continue;
            if (k == 0) return c;
            --k;
        }
        // numerical edge: return the last realized child
        return pair_child.empty() ? 0 : pair_child[parent_ptr[p + 1] - 1];
    }

    void validate() const {
        for (int p = 0; p < n_parents(); ++p) {
            for (int l = 0; l < tau; ++l) {
                double total = unseen_prob[p][l] *
                               (n_children() - (parent_ptr[p + 1] - parent_ptr[p]));
                for (int r = parent_ptr[p]; r < parent_ptr[p + 1]; ++r)
                    total += pair_prob[r][l];
                if (std::fabs(total - 1.0) > 1e-9)
                    throw std::logic_error("SparseCpt: conditional does not sum to 1");
            }
        }
    }
};

struct PolicyParams {
    int tau = 1;
    std::vector<double> theta_l;
    SparseCpt cpt_c1;
    SparseCpt cpt_c2;
    SparseCpt cpt_y;
    Partition partition;
    std::vector<std::string> x_block;  // V \ (I_c u {Y}); sampled by bootstrap
    double final_loglik = 0.0;
    int iterations_run = 0;
};

// tau is feasible iff it is 1 (degenerate, no latent state) or lies in
// [2, min(|I_c1|, |I_c2|)].
inline bool validate_tau(int tau, const Partition& part) {
    if (tau == 1) return true;
    int bound = static_cast<int>(std::min(part.left.size(), part.right.size()));
    return tau >= 2 && tau <= bound;
}

namespace detail {

// keep only names present in `keep`, preserving schema order
inline std::vector<std::string> ordered_subset(const Dataset& ds,
                                               const std::set<std::string>& keep) {
    std::vector<std::string> out;
    for (const auto& name : ds.attribute_names())
        if (keep.count(name)) out.push_back(name);
    return out;
}

inline std::vector<std::string> block_parents_c(const Dataset& ds, const RoleSpec& roles,
                                                const std::vector<std::string>& ic) {
    std::set<std::string> keep(roles.sensitive.begin(), roles.sensitive.end());
    std::set<std::string> ic_set(ic.begin(), ic.end());
    for (const auto& i : roles.inadmissible)
        if (!ic_set.count(i)) keep.insert(i);  // I_o
    keep.insert(roles.admissible.begin(), roles.admissible.end());
    return ordered_subset(ds, keep);
}

inline std::vector<std::string> block_parents_y(const Dataset& ds, const RoleSpec& roles) {
    std::set<std::string> keep(roles.admissible.begin(), roles.admissible.end());
    keep.insert(roles.additional.begin(), roles.additional.end());
    return ordered_subset(ds, keep);
}

// per-record dense ids over one attribute block, ids in lexicographic tuple order
struct BlockIds {
    std::vector<std::vector<int>> tuples;
    std::map<std::vector<int>, int> index;
    std::vector<int> rec;  // per record
};

inline BlockIds index_block(const Dataset& ds, const std::vector<std::string>& attrs) {
    BlockIds b;
    const std::size_t n = ds.n_records();
    b.rec.assign(n, 0);
    std::vector<const std::vector<int>*> cols;
    for (const auto& a : attrs) cols.push_back(&ds.column(a));
    std::vector<int> tuple(attrs.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < cols.size(); ++k) tuple[k] = (*cols[k])[j];
        b.index.emplace(tuple, 0);
    }
    int next = 0;
    for (auto& [_, id] : b.index) id = next++;
    b.tuples.resize(b.index.size());
    for (const auto& [t, id] : b.index) b.tuples[id] = t;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < cols.size(); ++k) tuple[k] = (*cols[k])[j];
        b.rec[j] = b.index.at(tuple);
    }
    return b;
}

// realized (parent, child) pairs in CSR layout plus per-record pair index
struct PairIds {
    std::vector<int> parent_ptr;   // P+1
    std::vector<int> pair_child;   // per pair
    std::vector<int> pair_parent;  // per pair
    std::vector<int> rec;          // per record -> pair index
};

inline PairIds index_pairs(const BlockIds& parent, const BlockIds& child) {
    PairIds out;
    const std::size_t n = parent.rec.size();
    std::map<std::pair<int, int>, int> pairs;
    for (std::size_t j = 0; j < n; ++j)
        pairs.emplace(std::make_pair(parent.rec[j], child.rec[j]), 0);
    int next = 0;
    for (auto& [_, id] : pairs) id = next++;
    const int P = static_cast<int>(parent.tuples.size());
    out.parent_ptr.assign(P + 1, 0);
    out.pair_child.resize(pairs.size());
    out.pair_parent.resize(pairs.size());
    for (const auto& [pc, id] : pairs) {
        out.pair_child[id] = pc.second;
        out.pair_parent[id] = pc.first;
        ++out.parent_ptr[pc.first + 1];
    }
    for (int p = 0; p < P; ++p) out.parent_ptr[p + 1] += out.parent_ptr[p];
    out.rec.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j)
        out.rec[j] = pairs.at({parent.rec[j], child.rec[j]});
    return out;
}

// Everything the EM loop needs, computed once per dataset.
struct EmIndex {
    std::vector<std::string> c1_attrs, c2_attrs, pc_attrs, py_attrs;
    BlockIds pc, py, c1, c2, y;
    PairIds pairs1, pairs2, pairs_y;
    std::size_t n = 0;
};

inline EmIndex build_em_index(const Dataset& ds, const Partition& part,
                              const RoleSpec& roles) {
    EmIndex ix;
    ix.n = ds.n_records();
    std::vector<std::string> ic = part.left;
    ic.insert(ic.end(), part.right.begin(), part.right.end());
    ix.c1_attrs = ordered_subset(ds, {part.left.begin(), part.left.end()});
    ix.c2_attrs = ordered_subset(ds, {part.right.begin(), part.right.end()});
    ix.pc_attrs = block_parents_c(ds, roles, ic);
    ix.py_attrs = block_parents_y(ds, roles);
    ix.pc = index_block(ds, ix.pc_attrs);
    ix.py = index_block(ds, ix.py_attrs);
    ix.c1 = index_block(ds, ix.c1_attrs);
    ix.c2 = index_block(ds, ix.c2_attrs);
    ix.y = index_block(ds, {roles.label});
    ix.pairs1 = index_pairs(ix.pc, ix.c1);
    ix.pairs2 = index_pairs(ix.pc, ix.c2);
    ix.pairs_y = index_pairs(ix.py, ix.y);
    return ix;
}

// Working arrays for one CPT during EM: probabilities per realized pair and
// the shared unseen-child probability per parent.
struct CptState {
    int K = 1;  // number of realized child configs
    std::vector<std::vector<double>> pair_prob;    // [pair][l]
    std::vector<std::vector<double>> unseen_prob;  // [parent][l]
    std::vector<std::vector<double>> child_mass;   // [l][child], for backoff

    void init_random(const PairIds& pairs, int P, int K_, int tau, Rng& rng) {
        K = K_;
        pair_prob.assign(pairs.pair_child.size(), std::vector<double>(tau, 0.0));
        unseen_prob.assign(P, std::vector<double>(tau, 0.0));
        child_mass.assign(tau, std::vector<double>(std::max(K, 1), 0.0));
        for (int l = 0; l < tau; ++l) {
            for (int p = 0; p < P; ++p) {
                int row = pairs.parent_ptr[p + 1] - pairs.parent_ptr[p];
                auto dist = rng.next_dirichlet1(row);
                for (int r = 0; r < row; ++r)
                    pair_prob[pairs.parent_ptr[p] + r][l] = dist[r];
            }
        }
    }

    // recompute probabilities from expected pair counts
    void update(const PairIds& pairs, const std::vector<std::vector<double>>& pair_count,
                const std::vector<std::vector<double>>& parent_mass, int tau,
                double smoothing) {
        const int P = static_cast<int>(parent_mass.size());
        for (std::size_t r = 0; r < pairs.pair_child.size(); ++r) {
            int p = pairs.pair_parent[r];
            for (int l = 0; l < tau; ++l)
                pair_prob[r][l] = (pair_count[r][l] + smoothing) /
                                  (parent_mass[p][l] + smoothing * K);
        }
        for (int p = 0; p < P; ++p)
            for (int l = 0; l < tau; ++l)
                unseen_prob[p][l] = smoothing / (parent_mass[p][l] + smoothing * K);
    }
};

inline SparseCpt materialize_cpt(const std::vector<std::string>& child_attrs,
                                 const std::vector<std::string>& parent_attrs,
                                 const BlockIds& child, const BlockIds& parent,
                                 const PairIds& pairs, const CptState& state, int tau,
                                 double smoothing) {
    SparseCpt cpt;
    cpt.child_attrs = child_attrs;
    cpt.parent_attrs = parent_attrs;
    cpt.tau = tau;
    cpt.smoothing = smoothing;
    cpt.child_tuples = child.tuples;
    cpt.parent_tuples = parent.tuples;
    cpt.child_index = child.index;
    cpt.parent_index = parent.index;
    cpt.parent_ptr = pairs.parent_ptr;
    cpt.pair_child = pairs.pair_child;
    cpt.pair_prob = state.pair_prob;
    cpt.unseen_prob = state.unseen_prob;
    cpt.backoff.assign(tau, std::vector<double>(state.child_mass[0].size(), 0.0));
    for (int l = 0; l < tau; ++l) {
        double total = 0.0;
        for (std::size_t c = 0; c < state.child_mass[l].size(); ++c) {
            cpt.backoff[l][c] = state.child_mass[l][c] + smoothing;
            total += cpt.backoff[l][c];
        }
        for (auto& v : cpt.backoff[l]) v /= total;
    }
    return cpt;
}

}  // namespace detail

// --- Standalone EM operations (spec surface; rebuild the index per call) ---

// Posterior over latent states per record. Every row sums to 1.
inline std::vector<std::vector<double>> e_step(const Dataset& ds,
                                               const PolicyParams& params) {
    const std::size_t n = ds.n_records();
    const int tau = params.tau;
    std::vector<std::vector<double>> post(n, std::vector<double>(tau, 0.0));

    auto tuple_of = [&](const std::vector<std::string>& attrs, std::size_t j) {
        std::vector<int> t(attrs.size());
        for (std::size_t k = 0; k < attrs.size(); ++k) t[k] = ds.column(attrs[k])[j];
        return t;
    };

    for (std::size_t j = 0; j < n; ++j) {
        auto pc = tuple_of(params.cpt_c1.parent_attrs, j);
        auto py = tuple_of(params.cpt_y.parent_attrs, j);
        int c1 = params.cpt_c1.find_child(tuple_of(params.cpt_c1.child_attrs, j));
        int c2 = params.cpt_c2.find_child(tuple_of(params.cpt_c2.child_attrs, j));
        int yv = params.cpt_y.find_child(tuple_of(params.cpt_y.child_attrs, j));
        if (c1 < 0 || c2 < 0 || yv < 0)
            throw ValidationError("e_step: record has a child configuration unseen at fit time");
        double total = 0.0;
        for (int l = 0; l < tau; ++l) {
            double w = params.theta_l[l] * params.cpt_c1.prob_backed(l, pc, c1) *
                       params.cpt_c2.prob_backed(l, pc, c2) *
                       params.cpt_y.prob_backed(l, py, yv);
            post[j][l] = w;
            total += w;
        }
        if (!(total > 0.0)) throw std::logic_error("e_step: zero posterior normalizer");
        for (int l = 0; l < tau; ++l) post[j][l] /= total;
    }
    return post;
}

struct PolicyFactors {
    std::vector<double> theta_l;
    SparseCpt cpt_c1;
    SparseCpt cpt_c2;
    SparseCpt cpt_y;
};

// Closed-form multinomial M-step: normalized expected counts with additive
// smoothing per cell.
inline PolicyFactors m_step(const Dataset& ds,
                            const std::vector<std::vector<double>>& posterior,
                            const Partition& part, const RoleSpec& roles, int tau,
                            double smoothing = kDefaultSmoothing) {
    const std::size_t n = ds.n_records();
    if (posterior.size() != n) throw ValidationError("m_step: posterior size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
        double s = std::accumulate(posterior[j].begin(), posterior[j].end(), 0.0);
        if (std::fabs(s - 1.0) > 1e-9)
            throw ValidationError("m_step: posterior row not normalized");
    }

    auto ix = detail::build_em_index(ds, part, roles);
    PolicyFactors out;
    out.theta_l.assign(tau, 0.0);

    auto accumulate = [&](const detail::PairIds& pairs, const detail::BlockIds& parent,
                          const detail::BlockIds& child, detail::CptState& state) {
        const int P = static_cast<int>(parent.tuples.size());
        const int K = static_cast<int>(child.tuples.size());
        std::vector<std::vector<double>> pair_count(pairs.pair_child.size(),
                                                    std::vector<double>(tau, 0.0));
        std::vector<std::vector<double>> parent_mass(P, std::vector<double>(tau, 0.0));
        state.K = K;
        state.pair_prob.assign(pairs.pair_child.size(), std::vector<double>(tau, 0.0));
        state.unseen_prob.assign(P, std::vector<double>(tau, 0.0));
        state.child_mass.assign(tau, std::vector<double>(std::max(K, 1), 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            for (int l = 0; l < tau; ++l) {
                double w = posterior[j][l];
                pair_count[pairs.rec[j]][l] += w;
                parent_mass[parent.rec[j]][l] += w;
                state.child_mass[l][child.rec[j]] += w;
            }
        }
        state.update(pairs, pair_count, parent_mass, tau, smoothing);
    };

    detail::CptState s1, s2, sy;
    accumulate(ix.pairs1, ix.pc, ix.c1, s1);
    accumulate(ix.pairs2, ix.pc, ix.c2, s2);
    accumulate(ix.pairs_y, ix.py, ix.y, sy);
    for (std::size_t j = 0; j < n; ++j)
        for (int l = 0; l < tau; ++l) out.theta_l[l] += posterior[j][l];
    for (auto& v : out.theta_l) v /= static_cast<double>(n);

    out.cpt_c1 = detail::materialize_cpt(ix.c1_attrs, ix.pc_attrs, ix.c1, ix.pc,
                                         ix.pairs1, s1, tau, smoothing);
    out.cpt_c2 = detail::materialize_cpt(ix.c2_attrs, ix.pc_attrs, ix.c2, ix.pc,
                                         ix.pairs2, s2, tau, smoothing);
    out.cpt_y = detail::materialize_cpt({roles.label}, ix.py_attrs, ix.y, ix.py,
                                        ix.pairs_y, sy, tau, smoothing);
    return out;
}

// Average per-record log-likelihood (natural log) of the latent-block factors.
inline double log_likelihood(const Dataset& ds, const PolicyParams& params,
                             std::int64_t* fallback_count = nullptr) {
    const std::size_t n = ds.n_records();
    if (n == 0) throw ValidationError("log_likelihood: empty dataset");
    const int tau = params.tau;

    auto tuple_of = [&](const std::vector<std::string>& attrs, std::size_t j) {
        std::vector<int> t(attrs.size());
        for (std::size_t k = 0; k < attrs.size(); ++k) t[k] = ds.column(attrs[k])[j];
        return t;
    };

    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        auto pc = tuple_of(params.cpt_c1.parent_attrs, j);
        auto py = tuple_of(params.cpt_y.parent_attrs, j);
        int c1 = params.cpt_c1.find_child(tuple_of(params.cpt_c1.child_attrs, j));
        int c2 = params.cpt_c2.find_child(tuple_of(params.cpt_c2.child_attrs, j));
        int yv = params.cpt_y.find_child(tuple_of(params.cpt_y.child_attrs, j));
        double lik = 0.0;
        for (int l = 0; l < tau; ++l) {
            double p1 = c1 >= 0 ? params.cpt_c1.prob_backed(l, pc, c1, fallback_count)
                                : params.cpt_c1.smoothing;
            double p2 = c2 >= 0 ? params.cpt_c2.prob_backed(l, pc, c2, fallback_count)
                                : params.cpt_c2.smoothing;
            double p3 = yv >= 0 ? params.cpt_y.prob_backed(l, py, yv, fallback_count)
                                : params.cpt_y.smoothing;
            lik += params.theta_l[l] * p1 * p2 * p3;
        }
        total += std::log(lik);
    }
    return total / static_cast<double>(n);
}

// --- Full EM fit (fast path over precomputed dense indices) -------------

inline PolicyParams estimate(const Dataset& ds, const Partition& part,
                             const RoleSpec& roles, int tau, int n_iter = 800,
                             double eta = 0.001, std::uint64_t seed = 0,
                             double smoothing = kDefaultSmoothing) {
    if (!validate_tau(tau, part)) {
        int bound = static_cast<int>(std::min(part.left.size(), part.right.size()));
        throw ValidationError("estimate: tau=" + std::to_string(tau) +
                              " violates bound 2 <= tau <= min(|I_c1|, |I_c2|) = " +
                              std::to_string(bound) + " (tau=1 is the no-latent mode)");
    }
    if (n_iter < 1) throw ValidationError("estimate: n_iter must be >= 1");
    if (!(eta > 0.0)) throw ValidationError("estimate: eta must be > 0");
    if (ds.n_records() == 0) throw ValidationError("estimate: empty dataset");

    auto ix = detail::build_em_index(ds, part, roles);
    const std::size_t n = ix.n;
    const int P = static_cast<int>(ix.pc.tuples.size());
    const int PY = static_cast<int>(ix.py.tuples.size());
    const int K1 = static_cast<int>(ix.c1.tuples.size());
    const int K2 = static_cast<int>(ix.c2.tuples.size());
    const int KY = static_cast<int>(ix.y.tuples.size());

    Rng rng(substream_seed(seed, "estimate"));
    std::vector<double> theta_l = rng.next_dirichlet1(tau);
    detail::CptState s1, s2, sy;
    s1.init_random(ix.pairs1, P, K1, tau, rng);
    s2.init_random(ix.pairs2, P, K2, tau, rng);
    sy.init_random(ix.pairs_y, PY, KY, tau, rng);

    std::vector<std::vector<double>> count1(ix.pairs1.pair_child.size()),
        count2(ix.pairs2.pair_child.size()), count_y(ix.pairs_y.pair_child.size());
    std::vector<std::vector<double>> mass_p(P), mass_py(PY);

    double prev_loglik = -std::numeric_limits<double>::infinity();
    double loglik = prev_loglik;
    int iterations = 0;

    std::vector<double> w(tau);
    for (int iter = 0; iter < n_iter; ++iter) {
        ++iterations;
        // reset expected counts
        for (auto& v : count1) v.assign(tau, 0.0);
        for (auto& v : count2) v.assign(tau, 0.0);
        for (auto& v : count_y) v.assign(tau, 0.0);
        for (auto& v : mass_p) v.assign(tau, 0.0);
        for (auto& v : mass_py) v.assign(tau, 0.0);
        for (int l = 0; l < tau; ++l) s1.child_mass[l].assign(std::max(K1, 1), 0.0);
        for (int l = 0; l < tau; ++l) s2.child_mass[l].assign(std::max(K2, 1), 0.0);
        for (int l = 0; l < tau; ++l) sy.child_mass[l].assign(std::max(KY, 1), 0.0);
        std::vector<double> theta_acc(tau, 0.0);

        // E-step fused with expected-count accumulation
        for (std::size_t j = 0; j < n; ++j) {
            const int r1 = ix.pairs1.rec[j], r2 = ix.pairs2.rec[j], ry = ix.pairs_y.rec[j];
            double total = 0.0;
            for (int l = 0; l < tau; ++l) {
                w[l] = theta_l[l] * s1.pair_prob[r1][l] * s2.pair_prob[r2][l] *
                       sy.pair_prob[ry][l];
                total += w[l];
            }
            if (!(total > 0.0)) throw std::logic_error("estimate: zero posterior normalizer");
            const double inv = 1.0 / total;
            for (int l = 0; l < tau; ++l) {
                const double wl = w[l] * inv;
                count1[r1][l] += wl;
                count2[r2][l] += wl;
                count_y[ry][l] += wl;
                mass_p[ix.pc.rec[j]][l] += wl;
                mass_py[ix.py.rec[j]][l] += wl;
                s1.child_mass[l][ix.c1.rec[j]] += wl;
                s2.child_mass[l][ix.c2.rec[j]] += wl;
                sy.child_mass[l][ix.y.rec[j]] += wl;
                theta_acc[l] += wl;
            }
        }

        // M-step
        for (int l = 0; l < tau; ++l) theta_l[l] = theta_acc[l] / static_cast<double>(n);
        s1.update(ix.pairs1, count1, mass_p, tau, smoothing);
        s2.update(ix.pairs2, count2, mass_p, tau, smoothing);
        sy.update(ix.pairs_y, count_y, mass_py, tau, smoothing);

        // refined log-likelihood under the updated parameters
        double total_ll = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const int r1 = ix.pairs1.rec[j], r2 = ix.pairs2.rec[j], ry = ix.pairs_y.rec[j];
            double lik = 0.0;
            for (int l = 0; l < tau; ++l)
                lik += theta_l[l] * s1.pair_prob[r1][l] * s2.pair_prob[r2][l] *
                       sy.pair_prob[ry][l];
            total_ll += std::log(lik);
        }
        loglik = total_ll / static_cast<double>(n);
        if (std::isfinite(prev_loglik) && std::fabs(loglik - prev_loglik) <= eta) break;
        prev_loglik = loglik;
    }

    PolicyParams params;
    params.tau = tau;
    params.theta_l = theta_l;
    params.partition = part;
    params.final_loglik = loglik;
    params.iterations_run = iterations;
    params.cpt_c1 = detail::materialize_cpt(ix.c1_attrs, ix.pc_attrs, ix.c1, ix.pc,
                                            ix.pairs1, s1, tau, smoothing);
    params.cpt_c2 = detail::materialize_cpt(ix.c2_attrs, ix.pc_attrs, ix.c2, ix.pc,
                                            ix.pairs2, s2, tau, smoothing);
    params.cpt_y = detail::materialize_cpt({roles.label}, ix.py_attrs, ix.y, ix.py,
                                           ix.pairs_y, sy, tau, smoothing);
    {
        std::set<std::string> drop(part.left.begin(), part.left.end());
        drop.insert(part.right.begin(), part.right.end());
        drop.insert(roles.label);
        for (const auto& name : ds.attribute_names())
            if (!drop.count(name)) params.x_block.push_back(name);
    }
    return params;
}

// --- Serialization ------------------------------------------------------

namespace detail {

inline nlohmann::json cpt_to_json(const SparseCpt& cpt) {
    nlohmann::json j;
    j["child_attrs"] = cpt.child_attrs;
    j["parent_attrs"] = cpt.parent_attrs;
    j["tau"] = cpt.tau;
    j["smoothing"] = cpt.smoothing;
    j["child_configs"] = cpt.child_tuples;
    j["parent_configs"] = cpt.parent_tuples;
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t p = 0; p + 1 < cpt.parent_ptr.size(); ++p) {
        for (int r = cpt.parent_ptr[p]; r < cpt.parent_ptr[p + 1]; ++r) {
            for (int l = 0; l < cpt.tau; ++l)
                cells.push_back({l, p, cpt.pair_child[r], cpt.pair_prob[r][l]});
        }
    }
    j["cells"] = cells;
    nlohmann::json unseen = nlohmann::json::array();
    for (const auto& row : cpt.unseen_prob) unseen.push_back(row);
    j["unseen_child_prob"] = unseen;
    j["backoff"] = cpt.backoff;
    return j;
}

inline SparseCpt cpt_from_json(const nlohmann::json& j) {
    SparseCpt cpt;
    cpt.child_attrs = j.at("child_attrs").get<std::vector<std::string>>();
    cpt.parent_attrs = j.at("parent_attrs").get<std::vector<std::string>>();
    cpt.tau = j.at("tau").get<int>();
    cpt.smoothing = j.at("smoothing").get<double>();
    cpt.child_tuples = j.at("child_configs").get<std::vector<std::vector<int>>>();
    cpt.parent_tuples = j.at("parent_configs").get<std::vector<std::vector<int>>>();
    for (std::size_t i = 0; i < cpt.child_tuples.size(); ++i)
        cpt.child_index[cpt.child_tuples[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < cpt.parent_tuples.size(); ++i)
        cpt.parent_index[cpt.parent_tuples[i]] = static_cast<int>(i);
    // rebuild CSR from cells
    std::map<std::pair<int, int>, std::vector<double>> rows;
    for (const auto& cell : j.at("cells")) {
        int l = cell[0].get<int>();
        int p = cell[1].get<int>();
        int c = cell[2].get<int>();
        auto& probs = rows[{p, c}];
        if (probs.empty()) probs.assign(cpt.tau, 0.0);
        probs[l] = cell[3].get<double>();
    }
    const int P = static_cast<int>(cpt.parent_tuples.size());
    cpt.parent_ptr.assign(P + 1, 0);
    for (const auto& [key, _] : rows) ++cpt.parent_ptr[key.first + 1];
    for (int p = 0; p < P; ++p) cpt.parent_ptr[p + 1] += cpt.parent_ptr[p];
    for (const auto& [key, probs] : rows) {
        cpt.pair_child.push_back(key.second);
        cpt.pair_prob.push_back(probs);
    }
    cpt.unseen_prob = j.at("unseen_child_prob").get<std::vector<std::vector<double>>>();
    cpt.backoff = j.at("backoff").get<std::vector<std::vector<double>>>();
    return cpt;
}

}  // namespace detail

inline constexpr const char* kParamsFormatVersion = "latentpre-params-v1";

inline nlohmann::json params_to_json(const PolicyParams& params) {
    nlohmann::json j;
    j["version"] = kParamsFormatVersion;
    j["tau"] = params.tau;
    j["theta_l"] = params.theta_l;
    j["partition"] = {{"left", params.partition.left},
                      {"right", params.partition.right},
                      {"objective", params.partition.objective}};
    j["x_block"] = params.x_block;
    j["final_loglik"] = params.final_loglik;
    j["iterations_run"] = params.iterations_run;
    j["cpt_c1"] = detail::cpt_to_json(params.cpt_c1);
    j["cpt_c2"] = detail::cpt_to_json(params.cpt_c2);
    j["cpt_y"] = detail::cpt_to_json(params.cpt_y);
    return j;
}

inline PolicyParams params_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version") != kParamsFormatVersion)
        throw ValidationError("params file: unknown or missing version tag");
    PolicyParams p;
    p.tau = j.at("tau").get<int>();
    p.theta_l = j.at("theta_l").get<std::vector<double>>();
    p.partition.left = j.at("partition").at("left").get<std::vector<std::string>>();
    p.partition.right = j.at("partition").at("right").get<std::vector<std::string>>();
    p.partition.objective = j.at("partition").at("objective").get<double>();
    p.x_block = j.at("x_block").get<std::vector<std::string>>();
    p.final_loglik = j.at("final_loglik").get<double>();
    p.iterations_run = j.at("iterations_run").get<int>();
    p.cpt_c1 = detail::cpt_from_json(j.at("cpt_c1"));
    p.cpt_c2 = detail::cpt_from_json(j.at("cpt_c2"));
    p.cpt_y = detail::cpt_from_json(j.at("cpt_y"));
    return p;
}

}  // namespace latentpre
