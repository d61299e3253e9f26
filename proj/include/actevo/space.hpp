#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>
#include <vector>

#include "actevo/graph.hpp"

namespace actevo {

using BigInt = boost::multiprecision::cpp_int;

// Shape bookkeeping for single-input computation trees with ordered children,
// at most two binary nodes on any root-to-leaf path, and every input leaf
// wrapped by at least one unary. A shape with b binary and u unary operators
// has e = u + 2b + 1 edges.
struct ShapeRow {
    int b = 0;
    int u = 0;
    int e = 0;
    BigInt arrangements;
};

BigInt binomial(int n, int k);

// arrangements for a fixed (b, u); zero when b > 3 (impossible under the
// nesting cap) or u too small to connect the skeleton
BigInt count_arrangements(int b, int u);

// rows with j = b + u operators, b ascending, zero rows dropped
std::vector<ShapeRow> shape_rows(int j);

// total shapes with j operators
BigInt count_shapes(int j);

// functions with j operators: per row, arrangements * U^u * B^b * sum of
// C(e, i) for i = 0..E ways to place up to E multiplicative params
BigInt count_functions(int j, int unary_ops = 27, int binary_ops = 7, int max_params = 3);

BigInt total_space_size(int max_nodes = 7, int unary_ops = 27, int binary_ops = 7,
                        int max_params = 3);

// balanced-tree tiers: depth 1 is 24^2 * 6; each further level squares the
// subtree choices and keeps the fresh top unit
BigInt cafe_space_size(int depth);

// all 3456 depth-1 strings, binary-major then both unary slots, table order
std::vector<std::string> enumerate_cafe_units();

struct DedupResult {
    std::size_t total = 0;
    std::size_t unique = 0;
    // lexicographically least member of each fingerprint class, sorted
    std::vector<std::string> representatives;
};

// enumerates every bin(u1(x), u2(x)) over the table and groups by fingerprint
DedupResult enumerate_and_dedup(const OperatorTable& table);

}  // namespace actevo
