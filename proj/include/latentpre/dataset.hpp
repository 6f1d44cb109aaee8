#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentpre/errors.hpp"

namespace latentpre {

struct CategoricalDomain {
    std::string attribute_name;
    std::vector<std::string> codes;  // sorted lexicographically, unique

    int size() const { return static_cast<int>(codes.size()); }

    int code_of(const std::string& label) const {
        auto it = std::lower_bound(codes.begin(), codes.end(), label);
        if (it == codes.end() || *it != label) return -1;
        return static_cast<int>(it - codes.begin());
    }
};

// Immutable column-oriented table of integer-coded categorical values.
class Dataset {
public:
    Dataset() = default;
    // n_records_if_empty only matters for zero-column datasets (projections).
    explicit Dataset(std::vector<CategoricalDomain> domains,
                     std::vector<std::vector<int>> columns,
                     std::size_t n_records_if_empty = 0)
        : domains_(std::move(domains)), columns_(std::move(columns)) {
        if (domains_.size() != columns_.size())
            throw ValidationError("domain/column count mismatch");
        n_records_ = columns_.empty() ? n_records_if_empty : columns_[0].size();
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (columns_[i].size() != n_records_)
                throw ValidationError("ragged columns");
            for (int code : columns_[i]) {
                if (code < 0 || code >= domains_[i].size())
                    throw ValidationError("code out of domain range in column " +
                                          domains_[i].attribute_name);
            }
            name_to_col_[domains_[i].attribute_name] = i;
        }
    }

    std::size_t n_records() const { return n_records_; }
    std::size_t n_attrs() const { return domains_.size(); }

    std::size_t col_index(const std::string& name) const {
        auto it = name_to_col_.find(name);
        if (it == name_to_col_.end())
            throw ValidationError("unknown attribute: " + name);
        return it->second;
    }
    bool has_attr(const std::string& name) const {
        return name_to_col_.count(name) > 0;
    }

    const CategoricalDomain& domain(std::size_t i) const { return domains_[i]; }
    const CategoricalDomain& domain(const std::string& name) const {
        return domains_[col_index(name)];
    }
    const std::vector<int>& column(std::size_t i) const { return columns_[i]; }
    const std::vector<int>& column(const std::string& name) const {
        return columns_[col_index(name)];
    }

    std::vector<std::string> attribute_names() const {
        std::vector<std::string> names;
        names.reserve(domains_.size());
        for (const auto& d : domains_) names.push_back(d.attribute_name);
        return names;
    }

private:
    std::vector<CategoricalDomain> domains_;
    std::vector<std::vector<int>> columns_;
    std::unordered_map<std::string, std::size_t> name_to_col_;
    std::size_t n_records_ = 0;
};

struct RoleSpec {
    std::vector<std::string> sensitive;
    std::vector<std::string> inadmissible;
    std::vector<std::string> admissible;
    std::vector<std::string> additional;
    std::string label;

    void validate(const Dataset& ds) const {
        std::set<std::string> seen;
        auto take = [&](const std::vector<std::string>& group,
                        const char* role) {
            for (const auto& name : group) {
                if (!ds.has_attr(name))
                    throw ValidationError(std::string("roles file names unknown attribute '") +
                                          name + "' as " + role);
                if (!seen.insert(name).second)
                    throw ValidationError("attribute assigned more than one role: " + name);
            }
        };
        take(sensitive, "sensitive");
        take(inadmissible, "inadmissible");
        take(admissible, "admissible");
        take(additional, "additional");
        if (label.empty()) throw ValidationError("roles file has no label");
        take({label}, "label");
        for (const auto& name : ds.attribute_names()) {
            if (!seen.count(name))
                throw ValidationError("unassigned attribute: " + name);
        }
        if (ds.domain(label).size() < 2)
            throw ValidationError("label domain must have at least 2 values");
    }
};

// --- CSV ---------------------------------------------------------------

namespace detail {

// RFC-4180 style: comma separated, double-quote escaping, quoted fields may
// contain commas, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool any_char = false;
    int c;
    while ((c = in.get()) != EOF) {
        char ch = static_cast<char>(c);
        any_char = true;
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && in.peek() == '\n') in.get();
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else {
            field.push_back(ch);
        }
    }
    if (in_quotes) throw ValidationError("unterminated quoted CSV field");
    if (!field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    if (!any_char) throw ValidationError("empty file");
    return rows;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace detail

inline Dataset encode_table(const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) throw ValidationError("missing header");
    const auto& header = rows[0];
    if (header.empty() || (header.size() == 1 && header[0].empty()))
        throw ValidationError("missing header");
    const std::size_t d = header.size();
    {
        std::set<std::string> uniq(header.begin(), header.end());
        if (uniq.size() != d) throw ValidationError("duplicate column name in header");
    }
    std::vector<std::set<std::string>> values(d);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != d)
            throw ValidationError("row " + std::to_string(r) + " has " +
                                  std::to_string(rows[r].size()) + " fields, expected " +
                                  std::to_string(d));
        for (std::size_t i = 0; i < d; ++i) {
            if (rows[r][i].empty())
                throw ValidationError("missing cell in row " + std::to_string(r) +
                                      ", column " + header[i]);
            values[i].insert(rows[r][i]);
        }
    }
    std::vector<CategoricalDomain> domains(d);
    std::vector<std::vector<int>> columns(d);
    for (std::size_t i = 0; i < d; ++i) {
        domains[i].attribute_name = header[i];
        domains[i].codes.assign(values[i].begin(), values[i].end());
        columns[i].reserve(rows.size() - 1);
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            columns[i].push_back(domains[i].code_of(rows[r][i]));
        }
    }
    return Dataset(std::move(domains), std::move(columns));
}

inline Dataset load_csv(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + csv_path);
    auto rows = detail::parse_csv(in);
    return encode_table(rows);
}

inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    const std::size_t d = ds.n_attrs();
    for (std::size_t i = 0; i < d; ++i) {
        if (i) out << ',';
        out << detail::csv_escape(ds.domain(i).attribute_name);
    }
    out << '\n';
    for (std::size_t j = 0; j < ds.n_records(); ++j) {
        for (std::size_t i = 0; i < d; ++i) {
            if (i) out << ',';
            out << detail::csv_escape(ds.domain(i).codes[ds.column(i)[j]]);
        }
        out << '\n';
    }
    if (!out) throw ValidationError("write failed: " + path);
}

// --- Roles file --------------------------------------------------------

inline RoleSpec parse_roles_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"sensitive", "inadmissible",
                                               "admissible", "additional", "label"};
    if (!j.is_object()) throw ValidationError("roles file must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key()))
            throw ValidationError("unknown key in roles file: " + it.key());
    }
    RoleSpec roles;
    auto get_list = [&](const char* key) -> std::vector<std::string> {
        if (!j.contains(key)) return {};
        if (!j.at(key).is_array())
            throw ValidationError(std::string("roles key '") + key + "' must be a list");
        return j.at(key).get<std::vector<std::string>>();
    };
    roles.sensitive = get_list("sensitive");
    roles.inadmissible = get_list("inadmissible");
    roles.admissible = get_list("admissible");
    roles.additional = get_list("additional");
    if (!j.contains("label") || !j.at("label").is_string())
        throw ValidationError("roles file requires a 'label' string");
    roles.label = j.at("label").get<std::string>();
    return roles;
}

inline RoleSpec load_roles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("roles file parse error: " + std::string(e.what()));
    }
    return parse_roles_json(j);
}

inline void write_roles(const RoleSpec& roles, const std::string& path) {
    nlohmann::json j;
    j["sensitive"] = roles.sensitive;
    j["inadmissible"] = roles.inadmissible;
    j["admissible"] = roles.admissible;
    j["additional"] = roles.additional;
    j["label"] = roles.label;
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline std::pair<Dataset, RoleSpec> load_dataset(const std::string& csv_path,
                                                 const std::string& roles_path) {
    Dataset ds = load_csv(csv_path);
    RoleSpec roles = load_roles(roles_path);
    roles.validate(ds);
    return {std::move(ds), std::move(roles)};
}

// --- Addressing --------------------------------------------------------

inline Dataset project(const Dataset& ds, const std::vector<std::string>& attrs) {
    std::vector<CategoricalDomain> domains;
    std::vector<std::vector<int>> columns;
    domains.reserve(attrs.size());
    columns.reserve(attrs.size());
    for (const auto& name : attrs) {
        std::size_t i = ds.col_index(name);
        domains.push_back(ds.domain(i));
        columns.push_back(ds.column(i));
    }
    return Dataset(std::move(domains), std::move(columns), ds.n_records());
}

// Per-record row-major joint index over the named attributes. Falls back to
// the lexicographic rank of realized code tuples when the full product domain
// exceeds 2^62 cells.
inline std::vector<std::int64_t> joint_config_index(
    const Dataset& ds, const std::vector<std::string>& attrs) {
    if (attrs.empty()) throw ValidationError("joint_config_index: empty attribute list");
    std::vector<std::size_t> cols;
    for (const auto& a : attrs) cols.push_back(ds.col_index(a));

    unsigned __int128 product = 1;
    bool overflow = false;
    for (std::size_t c : cols) {
        product *= static_cast<unsigned>(ds.domain(c).size());
        if (product > (static_cast<unsigned __int128>(1) << 62)) {
            overflow = true;
            break;
        }
    }
    const std::size_t n = ds.n_records();
    std::vector<std::int64_t> out(n);
    if (!overflow) {
        std::vector<std::int64_t> stride(cols.size());
        std::int64_t s = 1;
        for (std::size_t k = cols.size(); k-- > 0;) {
            stride[k] = s;
            s *= ds.domain(cols[k]).size();
        }
        for (std::size_t j = 0; j < n; ++j) {
            std::int64_t idx = 0;
            for (std::size_t k = 0; k < cols.size(); ++k)
                idx += stride[k] * ds.column(cols[k])[j];
            out[j] = idx;
        }
    } else {
        std::map<std::vector<int>, std::int64_t> rank;
        std::vector<int> tuple(cols.size());
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < cols.size(); ++k)
                tuple[k] = ds.column(cols[k])[j];
            rank.emplace(tuple, 0);
        }
        std::int64_t next = 0;
        for (auto& [_, id] : rank) id = next++;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < cols.size(); ++k)
                tuple[k] = ds.column(cols[k])[j];
            out[j] = rank.at(tuple);
        }
    }
    return out;
}

// Dense stratum labels: per-record group id in [0, n_groups), assigned in
// order of first occurrence. Used internally wherever only grouping matters.
struct StratumIndex {
    std::vector<int> group;  // per record
    int n_groups = 0;
};

inline StratumIndex stratify(const Dataset& ds, const std::vector<std::string>& attrs) {
    const std::size_t n = ds.n_records();
    StratumIndex out;
    out.group.assign(n, 0);
    if (attrs.empty()) {
        out.n_groups = n > 0 ? 1 : 0;
        return out;
    }
    std::vector<const std::vector<int>*> cols;
    std::vector<std::uint64_t> sizes;
    for (const auto& a : attrs) {
        std::size_t c = ds.col_index(a);
        cols.push_back(&ds.column(c));
        sizes.push_back(static_cast<std::uint64_t>(ds.domain(c).size()));
    }
    // pack codes into a 64-bit key when the product domain fits, else hash
    unsigned __int128 product = 1;
    for (auto s : sizes) product *= s;
    std::unordered_map<std::uint64_t, int> ids;
    ids.reserve(n);
    const bool packed = product <= (static_cast<unsigned __int128>(1) << 62);
    for (std::size_t j = 0; j < n; ++j) {
        std::uint64_t key;
        if (packed) {
            key = 0;
            for (std::size_t k = 0; k < cols.size(); ++k)
                key = key * sizes[k] + static_cast<std::uint64_t>((*cols[k])[j]);
        } else {
            key = 1469598103934665603ULL;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                key ^= static_cast<std::uint64_t>((*cols[k])[j]) + 0x9e3779b97f4a7c15ULL +
                       (key << 6) + (key >> 2);
                key *= 1099511628211ULL;
            }
        }
        auto [it, inserted] = ids.emplace(key, out.n_groups);
        if (inserted) ++out.n_groups;
        out.group[j] = it->second;
    }
    return out;
}

}  // namespace latentpre
