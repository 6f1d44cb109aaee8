#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"
#include "latentpre/rng.hpp"

// Synthetic categorical causal-DAG generator: ancestral sampling from an
// explicit node/CPT specification, plus random spec construction for
// fixtures and scaling runs.

namespace latentpre {

struct DagNode {
    std::string name;
    int domain_size = 2;
    std::vector<std::string> parents;
    // rows indexed row-major over parent codes (in listed parent order);
    // each row is a distribution over the node's domain
    std::vector<std::vector<double>> cpt;
};

struct CausalDagSpec {
    std::vector<DagNode> nodes;  // must admit a topological order

    void validate() const {
        std::set<std::string> names;
        for (const auto& node : nodes)
            if (!names.insert(node.name).second)
                throw ValidationError("dag spec: duplicate node " + node.name);
        // acyclicity via Kahn's algorithm
        std::map<std::string, int> indegree;
        std::map<std::string, std::vector<std::string>> children;
        for (const auto& node : nodes) indegree[node.name] = 0;
        for (const auto& node : nodes) {
            for (const auto& p : node.parents) {
                if (!indegree.count(p))
                    throw ValidationError("dag spec: unknown parent " + p);
                children[p].push_back(node.name);
                ++indegree[node.name];
            }
        }
        std::vector<std::string> queue;
        for (const auto& [name, deg] : indegree)
            if (deg == 0) queue.push_back(name);
        std::size_t done = 0;
        while (!queue.empty()) {
            auto u = queue.back();
            queue.pop_back();
            ++done;
            for (const auto& v : children[u])
                if (--indegree[v] == 0) queue.push_back(v);
        }
        if (done != nodes.size()) throw ValidationError("dag spec: cycle detected");
        // CPT shapes and row normalization
        std::map<std::string, int> sizes;
        for (const auto& node : nodes) sizes[node.name] = node.domain_size;
        for (const auto& node : nodes) {
            std::size_t rows = 1;
            for (const auto& p : node.parents) rows *= sizes.at(p);
            if (node.cpt.size() != rows)
                throw ValidationError("dag spec: CPT row count mismatch at " + node.name);
            for (const auto& row : node.cpt) {
                if (static_cast<int>(row.size()) != node.domain_size)
                    throw ValidationError("dag spec: CPT row width mismatch at " + node.name);
                double s = 0.0;
                for (double v : row) {
                    if (v < 0.0) throw ValidationError("dag spec: negative CPT entry");
                    s += v;
                }
                if (std::fabs(s - 1.0) > 1e-12)
                    throw ValidationError("dag spec: CPT row does not sum to 1 at " + node.name);
            }
        }
    }

    std::vector<std::size_t> topological_order() const {
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].name] = i;
        std::vector<int> state(nodes.size(), 0);
        std::vector<std::size_t> order;
        std::vector<std::size_t> stack;
        for (std::size_t start = 0; start < nodes.size(); ++start) {
            if (state[start]) continue;
            // iterative DFS
            stack.push_back(start);
            while (!stack.empty()) {
                std::size_t u = stack.back();
                if (state[u] == 0) {
                    state[u] = 1;
                    for (const auto& p : nodes[u].parents) {
                        std::size_t v = pos.at(p);
                        if (state[v] == 0) stack.push_back(v);
                    }
                } else {
                    stack.pop_back();
                    if (state[u] == 1) {
                        state[u] = 2;
                        order.push_back(u);
                    }
                }
            }
        }
        return order;  // parents before children
    }
};

// Ancestral sampling; deterministic per (spec, n, seed) with per-record
// substreams.
inline Dataset generate(const CausalDagSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    const std::size_t d = spec.nodes.size();
    auto order = spec.topological_order();
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < d; ++i) pos[spec.nodes[i].name] = i;

    std::vector<std::vector<int>> columns(d, std::vector<int>(n));
    std::vector<std::vector<std::size_t>> parent_cols(d);
    for (std::size_t i = 0; i < d; ++i)
        for (const auto& p : spec.nodes[i].parents) parent_cols[i].push_back(pos.at(p));

    std::vector<int> record(d);
    for (std::size_t j = 0; j < n; ++j) {
        Rng rng(substream_seed(seed, "generate", j));
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const std::size_t i = order[oi];
            const auto& node = spec.nodes[i];
            std::size_t row = 0;
            for (std::size_t k = 0; k < parent_cols[i].size(); ++k)
                row = row * spec.nodes[parent_cols[i][k]].domain_size +
                      record[parent_cols[i][k]];
            record[i] = static_cast<int>(rng.next_categorical(node.cpt[row]));
        }
        for (std::size_t i = 0; i < d; ++i) columns[i][j] = record[i];
    }

    std::vector<CategoricalDomain> domains(d);
    for (std::size_t i = 0; i < d; ++i) {
        domains[i].attribute_name = spec.nodes[i].name;
        for (int v = 0; v < spec.nodes[i].domain_size; ++v) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "v%03d", v);
            domains[i].codes.emplace_back(buf);
        }
    }
    return Dataset(std::move(domains), std::move(columns));
}

// Dirichlet(1) CPT row with a minimum-probability floor, renormalized. The
// floor keeps fixture CPTs away from determinism, which breaks the
// asymptotic CI tests.
inline std::vector<double> random_cpt_row(int k, Rng& rng, double floor_p = 0.02) {
    auto row = rng.next_dirichlet1(k);
    double total = 0.0;
    for (auto& v : row) {
        v = std::max(v, floor_p);
        total += v;
    }
    for (auto& v : row) v /= total;
    return row;
}

struct RolesTemplate {
    int n_sensitive = 1;
    int n_inadmissible = 2;
    int n_additional = 0;
    int n_label_parents_inadmissible = 2;  // forced direct I -> Y edges
};

inline constexpr int kMaxRandomParents = 4;

// Random DAG over a fixed topological order V0..V_{d-2}, Y last. Roles per
// template; with the default 7-node template this reproduces the fixture
// layout S={V0}, I={V2,V4}, A={V1,V3,V5}.
inline std::pair<CausalDagSpec, RoleSpec> random_spec(int n_attrs, int domain_size,
                                                      double edge_density,
                                                      const RolesTemplate& tmpl,
                                                      std::uint64_t seed) {
    if (n_attrs < 4) throw ValidationError("random_spec: need at least 4 attributes");
    if (domain_size < 2) throw ValidationError("random_spec: domain size must be >= 2");
    const int n_observed = n_attrs - 1;  // last node is the label
    if (tmpl.n_sensitive + tmpl.n_inadmissible + tmpl.n_additional > n_observed)
        throw ValidationError("random_spec: roles template does not fit attribute count");
    if (tmpl.n_label_parents_inadmissible > tmpl.n_inadmissible)
        throw ValidationError("random_spec: more forced label parents than inadmissibles");

    RoleSpec roles;
    roles.label = "Y";
    std::vector<int> role(n_observed, -1);  // 0=S 1=I 2=A 3=W
    for (int i = 0; i < tmpl.n_sensitive; ++i) role[i] = 0;
    // additional attributes occupy the tail
    for (int i = n_observed - tmpl.n_additional; i < n_observed; ++i) role[i] = 3;
    // interleave inadmissible among the remaining middle positions
    int placed = 0;
    for (int i = tmpl.n_sensitive; i < n_observed - tmpl.n_additional; ++i) {
        int offset = i - tmpl.n_sensitive;
        if (placed < tmpl.n_inadmissible && offset % 2 == 1) {
            role[i] = 1;
            ++placed;
        }
    }
    for (int i = n_observed - tmpl.n_additional - 1;
         placed < tmpl.n_inadmissible && i >= tmpl.n_sensitive; --i) {
        if (role[i] == -1) {
            role[i] = 1;
            ++placed;
        }
    }
    for (int i = 0; i < n_observed; ++i)
        if (role[i] == -1) role[i] = 2;

    CausalDagSpec spec;
    Rng rng(substream_seed(seed, "random_spec"));
    std::vector<std::string> names;
    for (int i = 0; i < n_observed; ++i) names.push_back("V" + std::to_string(i));
    names.push_back("Y");

    for (int i = 0; i < n_attrs; ++i) {
        DagNode node;
        node.name = names[i];
        node.domain_size = i == n_attrs - 1 ? 2 : domain_size;  // binary label
        // random parents among earlier nodes
        std::vector<int> candidates;
        for (int p = 0; p < std::min(i, n_observed); ++p) candidates.push_back(p);
        for (int p : candidates) {
            if (static_cast<int>(node.parents.size()) >= kMaxRandomParents) break;
            if (rng.next_double() < edge_density) node.parents.push_back(names[p]);
        }
        if (i == n_attrs - 1) {
            // force the requested inadmissible -> Y edges
            std::vector<std::string> forced;
            for (int p = 0; p < n_observed && static_cast<int>(forced.size()) <
                                                  tmpl.n_label_parents_inadmissible;
                 ++p)
                if (role[p] == 1) forced.push_back(names[p]);
            for (const auto& f : forced)
                if (std::find(node.parents.begin(), node.parents.end(), f) ==
                    node.parents.end())
                    node.parents.push_back(f);
            while (static_cast<int>(node.parents.size()) >
                   kMaxRandomParents + tmpl.n_label_parents_inadmissible)
                node.parents.erase(node.parents.begin());
        }
        spec.nodes.push_back(std::move(node));
    }

    // fill CPTs
    std::map<std::string, int> sizes;
    for (const auto& node : spec.nodes) sizes[node.name] = node.domain_size;
    for (auto& node : spec.nodes) {
        std::size_t rows = 1;
        for (const auto& p : node.parents) rows *= sizes.at(p);
        node.cpt.reserve(rows);
        for (std::size_t r = 0; r < rows; ++r)
            node.cpt.push_back(random_cpt_row(node.domain_size, rng));
    }

    for (int i = 0; i < n_observed; ++i) {
        switch (role[i]) {
            case 0: roles.sensitive.push_back(names[i]); break;
            case 1: roles.inadmissible.push_back(names[i]); break;
            case 2: roles.admissible.push_back(names[i]); break;
            default: roles.additional.push_back(names[i]); break;
        }
    }
    spec.validate();
    return {std::move(spec), std::move(roles)};
}

inline nlohmann::json spec_to_json(const CausalDagSpec& spec) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : spec.nodes) {
        nodes.push_back({{"name", node.name},
                         {"domain_size", node.domain_size},
                         {"parents", node.parents},
                         {"cpt", node.cpt}});
    }
    return {{"version", "latentpre-dag-v1"}, {"nodes", nodes}};
}

inline CausalDagSpec spec_from_json(const nlohmann::json& j) {
    CausalDagSpec spec;
    for (const auto& nj : j.at("nodes")) {
        DagNode node;
        node.name = nj.at("name").get<std::string>();
        node.domain_size = nj.at("domain_size").get<int>();
        node.parents = nj.at("parents").get<std::vector<std::string>>();
        node.cpt = nj.at("cpt").get<std::vector<std::vector<double>>>();
        spec.nodes.push_back(std::move(node));
    }
    spec.validate();
    return spec;
}

}  // namespace latentpre
