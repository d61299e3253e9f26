#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>

#include "actevo/space.hpp"

using namespace actevo;

namespace {

// Independent shape oracle: enumerates ordered trees directly under the
// three structural rules (single input, binary nesting depth <= budget,
// every input leaf wrapped by at least one unary) and tallies by binary
// count. Written against the definition, not the closed form.
using BMap = std::map<int, BigInt>;

BMap& oracle(int j, int budget) {
    static std::map<std::pair<int, int>, BMap> memo;
    const auto key = std::make_pair(j, budget);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    BMap out;
    if (j >= 1) out[0] = 1;  // pure unary chain down to x, needs j >= 1
    for (int k = 0; k + 1 <= j; ++k) {
        // k unaries above a binary node, which needs budget
        if (budget < 1) break;
        const int rest = j - k - 1;
        for (int l = 0; l <= rest; ++l) {
            const BMap& left = oracle(l, budget - 1);
            const BMap& right = oracle(rest - l, budget - 1);
            for (const auto& [bl, cl] : left)
                for (const auto& [br, cr] : right) out[1 + bl + br] += cl * cr;
        }
    }
    return memo.emplace(key, std::move(out)).first->second;
}

}  // namespace

TEST_CASE("closed-form arrangements match direct enumeration") {
    for (int j = 1; j <= 12; ++j) {
        const BMap& direct = oracle(j, 2);
        BMap closed;
        for (const auto& r : shape_rows(j)) closed[r.b] = r.arrangements;
        CHECK(closed == direct);
        BigInt total = 0;
        for (const auto& [b, c] : direct) total += c;
        CHECK(count_shapes(j) == total);
    }
}

TEST_CASE("shape rows carry the frozen table") {
    struct Row {
        int j, b, u, e;
        long long arr;
    };
    const Row expected[] = {
        {1, 0, 1, 2, 1},  {2, 0, 2, 3, 1},  {3, 0, 3, 4, 1},  {3, 1, 2, 5, 1},
        {4, 0, 4, 5, 1},  {4, 1, 3, 6, 3},  {5, 0, 5, 6, 1},  {5, 1, 4, 7, 6},
        {5, 2, 3, 8, 2},  {6, 0, 6, 7, 1},  {6, 1, 5, 8, 10}, {6, 2, 4, 9, 10},
        {7, 0, 7, 8, 1},  {7, 1, 6, 9, 15}, {7, 2, 5, 10, 30}, {7, 3, 4, 11, 1},
    };
    std::map<int, std::vector<Row>> byj;
    for (const auto& r : expected) byj[r.j].push_back(r);
    for (const auto& [j, rows] : byj) {
        const auto got = shape_rows(j);
        REQUIRE(got.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(got[i].b == rows[i].b);
            CHECK(got[i].u == rows[i].u);
            CHECK(got[i].e == rows[i].e);
            CHECK(got[i].arrangements == rows[i].arr);
        }
    }
}

TEST_CASE("tier function counts are exact") {
    CHECK(count_functions(1) == 108);
    CHECK(count_functions(2) == 5832);
    CHECK(count_functions(3) == 427923);
    CHECK(count_functions(4) == 31177872);
    CHECK(count_functions(5) == BigInt("2210558364"));
    CHECK(count_functions(6) == BigInt("152059087566"));
    CHECK(count_functions(7) == BigInt("10015741690785"));
    CHECK(total_space_size() == BigInt("10170042948450"));
    CHECK(total_space_size(7) == total_space_size());
    CHECK(total_space_size(3) == 108 + 5832 + 427923);
}

TEST_CASE("tier counts decompose as ops times param placements") {
    // cross-check one tier against an explicit hand expansion
    // j=3: 27^3 * (1+4+6+4) + 27^2 * 7 * (1+5+10+10)
    const BigInt j3 = BigInt(27) * 27 * 27 * 15 + BigInt(27) * 27 * 7 * 26;
    CHECK(count_functions(3) == j3);
    // param cap 0 collapses the placement factor to 1
    CHECK(count_functions(2, 27, 7, 0) == BigInt(27) * 27);
}

TEST_CASE("balanced tier sizes") {
    CHECK(cafe_space_size(1) == 3456);
    CHECK(cafe_space_size(2) == BigInt("41278242816"));
    CHECK(cafe_space_size(3) == cafe_space_size(2) * cafe_space_size(2) * 3456);
    CHECK(cafe_space_size(0) == 0);
}

TEST_CASE("depth-1 enumeration is exhaustive and duplicate-free") {
    const auto all = enumerate_cafe_units();
    CHECK(all.size() == 3456);
    const std::set<std::string> uniq(all.begin(), all.end());
    CHECK(uniq.size() == 3456);
    CHECK(uniq.count("mul(arctan(x),min0(x))") == 1);
    CHECK(uniq.count("add(zero(x),zero(x))") == 1);
    // each string parses back into a depth-1 tree
    for (int i = 0; i < 3456; i += 97) {
        AfnGraph g = AfnGraph::parse(all[static_cast<std::size_t>(i)], OperatorTable::cafe());
        CHECK(g.depth() == 1);
        CHECK(g.node_count() == 3);
    }
}

TEST_CASE("fingerprint dedup on a two-operator table") {
    OperatorTable toy{SpaceTag::pangaea,
                      {{"id", [](double x) { return x; }, [](double) { return 1.0; }},
                       {"neg", [](double x) { return -x; }, [](double) { return -1.0; }}},
                      {{"add", [](double a, double b) { return a + b; },
                        [](double, double, double& da, double& db) { da = db = 1.0; }}}};
    const DedupResult r = enumerate_and_dedup(toy);
    CHECK(r.total == 4);
    CHECK(r.unique == 3);
    REQUIRE(r.representatives.size() == 3);
    // add(id,neg) and add(neg,id) are both zero; the least string represents
    CHECK(r.representatives[0] == "add(id(x),id(x))");
    CHECK(r.representatives[1] == "add(id(x),neg(x))");
    CHECK(r.representatives[2] == "add(neg(x),neg(x))");
}

TEST_CASE("dedup over the full safe table") {
    const DedupResult r = enumerate_and_dedup(OperatorTable::pangaea());
    CHECK(r.total == 5103);
    CHECK(r.unique >= 2855);  // 2913 within 2 percent
    CHECK(r.unique <= 2971);
    CHECK(r.representatives.size() == r.unique);
    CHECK(std::is_sorted(r.representatives.begin(), r.representatives.end()));
}
