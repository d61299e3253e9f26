#pragma once

#include "actevo/graph.hpp"
#include "actevo/rng.hpp"

namespace actevo {

// Structural edits for safe-division-table graphs. Each call returns a fresh
// graph; the parent is never modified. Param sites ride along: a site stays
// attached to the edge into its consumer, and when a removal merges two edges
// the site on the removed node's kept input wins over the consumer's own.

enum class MutationKind : std::uint8_t { insert, remove, change, regenerate };
const char* to_string(MutationKind k);

inline constexpr std::size_t kMaxMutationNodes = 7;

// Inserts one operator, drawn uniformly from the union of the unary and
// binary lists, on a uniformly chosen edge (input feeds and the output stub
// count). A binary insert initializes its second operand to the operator's
// identity element, so the computed function is preserved bitwise:
//   add -> neg(zero(x))    sub -> zero(x)
//   mul, div, pow -> one(x)
//   max, min -> a copy of the first operand's subtree
AfnGraph mutate_insert(const AfnGraph& g, Rng& rng, bool* binary_inserted = nullptr);

// Removes a uniformly chosen node; a binary node keeps one input subtree,
// chosen uniformly. Requires at least two nodes. If the survivor is the bare
// input, the result is id(x).
AfnGraph mutate_remove(const AfnGraph& g, Rng& rng);

// Re-draws the operator at one uniformly chosen node until it differs from
// the current one (same arity). A table with a single operator of that arity
// returns the graph unchanged.
AfnGraph mutate_change(const AfnGraph& g, Rng& rng);

// Re-draws every node's operator uniformly within its arity. Draws are
// independent and may repeat the old operator.
AfnGraph mutate_regenerate(const AfnGraph& g, Rng& rng);

// Uniform choice among the four edits, with two redirects: a single-node
// graph turns remove into change, and a graph above kMaxMutationNodes is
// forced through remove. `applied` reports the edit that actually ran.
AfnGraph mutate(const AfnGraph& g, Rng& rng, MutationKind* applied = nullptr);

// Drops all param sites (structure and defaults untouched).
AfnGraph strip_params(const AfnGraph& g);

// Strips, then attaches min(k, edge_count) multiplicative params on distinct
// uniformly chosen edges. Labels are assigned alpha, beta, gamma in selection
// order; every site starts at exactly 1, so the fingerprint is unchanged.
// k outside {0..3} is clamped.
AfnGraph parameterize(const AfnGraph& g, int k, ParamGranularity gran, Rng& rng);

// Balanced two-unary-one-binary trees over the as-written table.
// depth 1: bin(u(x), u(x)); depth d: bin(u(T), u(T)) with T of depth d-1.
AfnGraph random_cafe_unit(Rng& rng);
AfnGraph random_cafe_tree(int depth, Rng& rng);

// Replaces the operator at one uniformly chosen node with a uniform draw of
// the same arity (the draw may repeat the old operator).
AfnGraph cafe_mutate(const AfnGraph& g, Rng& rng);

// Same-shape subtree exchange: picks a tree level uniformly, then a position
// within that level uniformly, and grafts b's subtree at that position into
// a. Crossing a graph with itself reproduces it exactly. Throws
// std::invalid_argument if the two trees differ in shape.
AfnGraph cafe_crossover(const AfnGraph& a, const AfnGraph& b, Rng& rng);

}  // namespace actevo
