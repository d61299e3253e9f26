#include "actevo/space.hpp"

#include <algorithm>
#include <map>

namespace actevo {

BigInt binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    BigInt r = 1;
    for (int i = 0; i < k; ++i) {
        r *= n - i;
        r /= i + 1;
    }
    return r;
}

namespace {

// ways to arrange the binary skeleton alone under the depth cap
// b=0: empty, b=1: single, b=2: nested pair, b=3: one root over two nested
constexpr int kSkeletons[4] = {1, 1, 2, 1};

}  // namespace

BigInt count_arrangements(int b, int u) {
    if (b < 0 || u < 0 || b > 3) return 0;
    if (b + u < 1) return 0;
    // the u unaries fall into the skeleton's 2b + 1 chain segments; the b + 1
    // leaf chains must stay nonempty (every input is wrapped by a unary), so
    // the placements per skeleton are C(u + b - 1, 2b)
    return kSkeletons[b] * binomial(u + b - 1, 2 * b);
}

std::vector<ShapeRow> shape_rows(int j) {
    std::vector<ShapeRow> rows;
    for (int b = 0; b <= std::min(j, 3); ++b) {
        const int u = j - b;
        const BigInt arr = count_arrangements(b, u);
        if (arr == 0) continue;
        ShapeRow r;
        r.b = b;
        r.u = u;
        r.e = u + 2 * b + 1;
        r.arrangements = arr;
        rows.push_back(r);
    }
    return rows;
}

BigInt count_shapes(int j) {
    BigInt total = 0;
    for (const auto& r : shape_rows(j)) total += r.arrangements;
    return total;
}

BigInt count_functions(int j, int unary_ops, int binary_ops, int max_params) {
    BigInt total = 0;
    for (const auto& r : shape_rows(j)) {
        BigInt per_shape = 1;
        for (int i = 0; i < r.u; ++i) per_shape *= unary_ops;
        for (int i = 0; i < r.b; ++i) per_shape *= binary_ops;
        BigInt placements = 0;
        for (int i = 0; i <= max_params; ++i) placements += binomial(r.e, i);
        total += r.arrangements * per_shape * placements;
    }
    return total;
}

BigInt total_space_size(int max_nodes, int unary_ops, int binary_ops, int max_params) {
    BigInt total = 0;
    for (int j = 1; j <= max_nodes; ++j)
        total += count_functions(j, unary_ops, binary_ops, max_params);
    return total;
}

BigInt cafe_space_size(int depth) {
    if (depth < 1) return 0;
    const auto& t = OperatorTable::cafe();
    const BigInt unit = BigInt(t.unary.size()) * BigInt(t.unary.size()) * BigInt(t.binary.size());
    BigInt s = unit;
    for (int d = 2; d <= depth; ++d) s = s * s * unit;
    return s;
}

std::vector<std::string> enumerate_cafe_units() {
    const auto& t = OperatorTable::cafe();
    std::vector<std::string> out;
    out.reserve(t.binary.size() * t.unary.size() * t.unary.size());
    for (const auto& b : t.binary)
        for (const auto& u1 : t.unary)
            for (const auto& u2 : t.unary) {
                std::string s = b.name;
                s += '(';
                s += u1.name;
                s += "(x),";
                s += u2.name;
                s += "(x))";
                out.push_back(std::move(s));
            }
    return out;
}

DedupResult enumerate_and_dedup(const OperatorTable& table) {
    DedupResult res;
    std::map<Fingerprint, std::string> classes;
    for (std::size_t bi = 0; bi < table.binary.size(); ++bi)
        for (std::size_t u1 = 0; u1 < table.unary.size(); ++u1)
            for (std::size_t u2 = 0; u2 < table.unary.size(); ++u2) {
                std::vector<GNode> nodes{
                    {false, static_cast<std::int16_t>(u1), kInputX, kInputX},
                    {false, static_cast<std::int16_t>(u2), kInputX, kInputX},
                    {true, static_cast<std::int16_t>(bi), 0, 1},
                };
                AfnGraph g(table, std::move(nodes));
                ++res.total;
                std::string s = g.format();
                auto [it, fresh] = classes.emplace(g.fingerprint(), s);
                if (!fresh && s < it->second) it->second = std::move(s);
            }
    res.unique = classes.size();
    res.representatives.reserve(classes.size());
    for (auto& [fp, rep] : classes) res.representatives.push_back(std::move(rep));
    std::sort(res.representatives.begin(), res.representatives.end());
    return res;
}

}  // namespace actevo
