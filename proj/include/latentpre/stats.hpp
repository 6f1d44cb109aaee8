#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "latentpre/dataset.hpp"
#include "latentpre/errors.hpp"

// Plug-in information measures in bits. Empirical (maximum-likelihood)
// estimators throughout, 0*log 0 == 0, results clamped at zero against
// floating-point noise.

namespace latentpre {

struct ContingencyTable {
    std::vector<int> dims;
    std::vector<std::int64_t> counts;  // row-major
    std::int64_t total = 0;

    static ContingencyTable from(const Dataset& ds,
                                 const std::vector<std::string>& attrs) {
        ContingencyTable t;
        std::vector<std::size_t> cols;
        std::size_t cells = 1;
        for (const auto& a : attrs) {
            std::size_t c = ds.col_index(a);
            cols.push_back(c);
            t.dims.push_back(ds.domain(c).size());
            cells *= ds.domain(c).size();
        }
        t.counts.assign(std::max<std::size_t>(cells, 1), 0);
        for (std::size_t j = 0; j < ds.n_records(); ++j) {
            std::size_t idx = 0;
            for (std::size_t k = 0; k < cols.size(); ++k)
                idx = idx * t.dims[k] + ds.column(cols[k])[j];
            ++t.counts[idx];
        }
        t.total = static_cast<std::int64_t>(ds.n_records());
        return t;
    }
};

namespace detail {

inline double entropy_from_counts(const std::vector<std::int64_t>& counts,
                                  std::int64_t total) {
    double h = 0.0;
    for (std::int64_t c : counts) {
        if (c > 0) {
            double p = static_cast<double>(c) / static_cast<double>(total);
            h -= p * std::log2(p);
        }
    }
    return std::max(h, 0.0);
}

// MI of a dense sx-by-sy count table holding n observations, in bits.
inline double mi_from_table(const std::vector<std::int64_t>& table, int sx, int sy,
                            std::int64_t n) {
    std::vector<std::int64_t> rx(sx, 0), cy(sy, 0);
    for (int a = 0; a < sx; ++a)
        for (int b = 0; b < sy; ++b) {
            rx[a] += table[a * sy + b];
            cy[b] += table[a * sy + b];
        }
    double mi = 0.0;
    const double dn = static_cast<double>(n);
    for (int a = 0; a < sx; ++a) {
        if (rx[a] == 0) continue;
        for (int b = 0; b < sy; ++b) {
            std::int64_t c = table[a * sy + b];
            if (c == 0 || cy[b] == 0) continue;
            double p = c / dn;
            mi += p * std::log2(c * dn / (static_cast<double>(rx[a]) * cy[b]));
        }
    }
    return std::max(mi, 0.0);
}

}  // namespace detail

inline double entropy(const Dataset& ds, const std::string& attr) {
    if (ds.n_records() == 0) throw ValidationError("entropy: empty dataset");
    std::size_t c = ds.col_index(attr);
    std::vector<std::int64_t> counts(ds.domain(c).size(), 0);
    for (int code : ds.column(c)) ++counts[code];
    return detail::entropy_from_counts(counts, ds.n_records());
}

// I(X;Y|Z) = sum_z P(z) I(X;Y | Z=z) over realized strata of z; empty z gives
// plain MI. Strata are processed in first-occurrence order.
inline double cond_mutual_info(const Dataset& ds, const std::string& x,
                               const std::string& y,
                               const std::vector<std::string>& z) {
    if (ds.n_records() == 0) throw ValidationError("cond_mutual_info: empty dataset");
    if (x == y) throw ValidationError("cond_mutual_info: x == y");
    for (const auto& zi : z)
        if (zi == x || zi == y)
            throw ValidationError("cond_mutual_info: conditioning set overlaps arguments");

    const auto& cx = ds.column(x);
    const auto& cy = ds.column(y);
    const int sx = ds.domain(x).size();
    const int sy = ds.domain(y).size();
    const std::size_t n = ds.n_records();

    StratumIndex strata = stratify(ds, z);
    // counting sort into stratum buckets
    std::vector<std::int64_t> stratum_size(strata.n_groups, 0);
    for (std::size_t j = 0; j < n; ++j) ++stratum_size[strata.group[j]];
    std::vector<std::size_t> offsets(strata.n_groups + 1, 0);
    for (int g = 0; g < strata.n_groups; ++g) offsets[g + 1] = offsets[g] + stratum_size[g];
    std::vector<std::uint32_t> order(n);
    {
        std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t j = 0; j < n; ++j) order[cursor[strata.group[j]]++] = j;
    }

    std::vector<std::int64_t> table(static_cast<std::size_t>(sx) * sy, 0);
    double cmi = 0.0;
    for (int g = 0; g < strata.n_groups; ++g) {
        const std::size_t begin = offsets[g], end = offsets[g + 1];
        for (std::size_t k = begin; k < end; ++k) {
            std::uint32_t j = order[k];
            ++table[static_cast<std::size_t>(cx[j]) * sy + cy[j]];
        }
        double w = static_cast<double>(end - begin) / static_cast<double>(n);
        cmi += w * detail::mi_from_table(table, sx, sy,
                                         static_cast<std::int64_t>(end - begin));
        for (std::size_t k = begin; k < end; ++k) {
            std::uint32_t j = order[k];
            table[static_cast<std::size_t>(cx[j]) * sy + cy[j]] = 0;
        }
    }
    return std::max(cmi, 0.0);
}

inline double mutual_info(const Dataset& ds, const std::string& x,
                          const std::string& y) {
    return cond_mutual_info(ds, x, y, {});
}

// Cross-set sum of pairwise CMI terms, the approximation of I(left; right | Z).
inline double pairwise_cmi_objective(const Dataset& ds,
                                     const std::vector<std::string>& left,
                                     const std::vector<std::string>& right,
                                     const std::vector<std::string>& z) {
    if (left.empty() || right.empty())
        throw ValidationError("pairwise_cmi_objective: empty side");
    std::set<std::string> seen(left.begin(), left.end());
    for (const auto& r : right)
        if (!seen.insert(r).second)
            throw ValidationError("pairwise_cmi_objective: sides overlap");
    for (const auto& zi : z)
        if (seen.count(zi))
            throw ValidationError("pairwise_cmi_objective: z overlaps sides");
    double total = 0.0;
    for (const auto& a : left)
        for (const auto& b : right) total += cond_mutual_info(ds, a, b, z);
    return total;
}

// I(X;Y) / sqrt(H(X) H(Y)); 0 when either column is constant.
inline double nmi(const Dataset& ds, const std::string& x, const std::string& y) {
    if (ds.n_records() == 0) throw ValidationError("nmi: empty dataset");
    double hx = entropy(ds, x);
    double hy = entropy(ds, y);
    if (hx <= 0.0 || hy <= 0.0) return 0.0;
    double v = mutual_info(ds, x, y) / std::sqrt(hx * hy);
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace latentpre
