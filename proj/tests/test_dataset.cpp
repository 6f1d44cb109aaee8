#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "latentpre/dataset.hpp"
#include "latentpre/rng.hpp"
#include "oracle_utils.hpp"

using namespace latentpre;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("latentpre_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace

TEST_CASE("load_dataset encodes a small csv with roles") {
    TempDir dir;
    write_file(dir.file("d.csv"), "sex,income,Y\nm,low,0\nf,high,1\nf,low,0\n");
    write_file(dir.file("r.json"),
               R"({"sensitive":["sex"],"admissible":["income"],"label":"Y"})");
    auto [ds, roles] = load_dataset(dir.file("d.csv"), dir.file("r.json"));
    CHECK(ds.n_records() == 3);
    CHECK(ds.n_attrs() == 3);
    CHECK(ds.domain("sex").codes == std::vector<std::string>{"f", "m"});
    CHECK(ds.column("sex") == std::vector<int>{1, 0, 0});
    CHECK(roles.label == "Y");
}

TEST_CASE("roles validation rejects bad assignments") {
    TempDir dir;
    write_file(dir.file("d.csv"), "a,b,Y\n0,0,0\n1,1,1\n");

    SUBCASE("unassigned attribute") {
        write_file(dir.file("r.json"), R"({"sensitive":["a"],"label":"Y"})");
        CHECK_THROWS_WITH_AS(load_dataset(dir.file("d.csv"), dir.file("r.json")),
                             doctest::Contains("unassigned attribute"), ValidationError);
    }
    SUBCASE("double assignment") {
        write_file(dir.file("r.json"),
                   R"({"sensitive":["a"],"admissible":["a","b"],"label":"Y"})");
        CHECK_THROWS_AS(load_dataset(dir.file("d.csv"), dir.file("r.json")),
                        ValidationError);
    }
    SUBCASE("unknown key rejected") {
        write_file(dir.file("r.json"),
                   R"({"sensitive":["a"],"admissible":["b"],"label":"Y","extra":[]})");
        CHECK_THROWS_AS(load_dataset(dir.file("d.csv"), dir.file("r.json")),
                        ValidationError);
    }
    SUBCASE("label domain too small") {
        write_file(dir.file("d2.csv"), "a,b,Y\n0,0,1\n1,1,1\n");
        write_file(dir.file("r.json"),
                   R"({"sensitive":["a"],"admissible":["b"],"label":"Y"})");
        CHECK_THROWS_AS(load_dataset(dir.file("d2.csv"), dir.file("r.json")),
                        ValidationError);
    }
}

TEST_CASE("csv parsing handles quoting and rejects malformed input") {
    {
        std::istringstream in("a,b\n\"x,\"\"y\",z\n");
        auto rows = detail::parse_csv(in);
        REQUIRE(rows.size() == 2);
        CHECK(rows[1][0] == "x,\"y");
        CHECK(rows[1][1] == "z");
    }
    {
        std::istringstream in("");
        CHECK_THROWS_AS(detail::parse_csv(in), ValidationError);
    }
    {
        std::istringstream in("a,b\n1\n");
        CHECK_THROWS_AS(encode_table(detail::parse_csv(in)), ValidationError);
    }
    {
        std::istringstream in("a,b\n1,\n");  // empty cell
        CHECK_THROWS_AS(encode_table(detail::parse_csv(in)), ValidationError);
    }
}

TEST_CASE("csv round trip reproduces cell strings") {
    TempDir dir;
    std::string csv =
        "name,city,Y\n\"quo\"\"ted\",\"a,b\",0\nplain,york,1\nplain,\"a,b\",0\n";
    write_file(dir.file("in.csv"), csv);
    Dataset ds = load_csv(dir.file("in.csv"));
    write_csv(ds, dir.file("out.csv"));
    Dataset ds2 = load_csv(dir.file("out.csv"));
    REQUIRE(ds.n_records() == ds2.n_records());
    for (std::size_t i = 0; i < ds.n_attrs(); ++i) {
        CHECK(ds.domain(i).codes == ds2.domain(i).codes);
        CHECK(ds.column(i) == ds2.column(i));
    }
}

TEST_CASE("project preserves contents and record order") {
    auto ds = oracle::make_ds({"a", "b", "c"}, {2, 3, 2},
                              {{0, 1, 0, 1}, {2, 1, 0, 2}, {1, 1, 0, 0}});
    SUBCASE("identity") {
        auto p = project(ds, {"a", "b", "c"});
        for (std::size_t i = 0; i < 3; ++i) CHECK(p.column(i) == ds.column(i));
    }
    SUBCASE("empty projection keeps n_records") {
        auto p = project(ds, {});
        CHECK(p.n_attrs() == 0);
        CHECK(p.n_records() == 4);
    }
    SUBCASE("subset extraction is byte-identical") {
        auto p = project(ds, {"c", "a"});
        CHECK(p.column(0) == ds.column("c"));
        CHECK(p.column(1) == ds.column("a"));
    }
    SUBCASE("unknown attribute") {
        CHECK_THROWS_AS(project(ds, {"nope"}), ValidationError);
    }
}

TEST_CASE("joint_config_index row-major layout") {
    SUBCASE("two binary attributes") {
        auto ds = oracle::make_ds({"a", "b"}, {2, 2}, {{0}, {1}});
        CHECK(joint_config_index(ds, {"a", "b"})[0] == 1);
    }
    SUBCASE("single attribute equals raw code") {
        auto ds = oracle::make_ds({"a"}, {4}, {{3, 0, 2}});
        auto idx = joint_config_index(ds, {"a"});
        CHECK(idx == std::vector<std::int64_t>{3, 0, 2});
    }
    SUBCASE("three attributes (2,3,2)") {
        auto ds = oracle::make_ds({"a", "b", "c"}, {2, 3, 2}, {{1}, {2}, {0}});
        CHECK(joint_config_index(ds, {"a", "b", "c"})[0] == 10);
    }
    SUBCASE("bijection over the full product domain") {
        // enumerate all 12 configs of (2,3,2)
        std::vector<int> ca, cb, cc;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 2; ++c) {
                    ca.push_back(a);
                    cb.push_back(b);
                    cc.push_back(c);
                }
        auto ds = oracle::make_ds({"a", "b", "c"}, {2, 3, 2}, {ca, cb, cc});
        auto idx = joint_config_index(ds, {"a", "b", "c"});
        std::set<std::int64_t> distinct(idx.begin(), idx.end());
        CHECK(distinct.size() == 12);
        CHECK(*distinct.begin() == 0);
        CHECK(*distinct.rbegin() == 11);
    }
}

TEST_CASE("joint_config_index is injective on realized tuples") {
    // property over random small tables
    latentpre::Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        int k = 2 + static_cast<int>(rng.next_below(3));
        std::vector<int> sizes(k);
        std::vector<std::vector<int>> cols(k, std::vector<int>(60));
        std::vector<std::string> names;
        for (int i = 0; i < k; ++i) {
            sizes[i] = 2 + static_cast<int>(rng.next_below(3));
            names.push_back("a" + std::to_string(i));
            for (auto& v : cols[i]) v = static_cast<int>(rng.next_below(sizes[i]));
        }
        auto ds = oracle::make_ds(names, sizes, cols);
        auto idx = joint_config_index(ds, names);
        std::map<std::vector<int>, std::int64_t> seen;
        for (std::size_t j = 0; j < 60; ++j) {
            std::vector<int> tuple;
            for (int i = 0; i < k; ++i) tuple.push_back(cols[i][j]);
            auto [it, inserted] = seen.emplace(tuple, idx[j]);
            CHECK(it->second == idx[j]);
        }
        std::set<std::int64_t> ids;
        for (const auto& [_, id] : seen) CHECK(ids.insert(id).second);
    }
}
