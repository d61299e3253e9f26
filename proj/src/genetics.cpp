#include "actevo/genetics.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace actevo {
namespace {

struct EdgeRef {
    int node;  // consumer, or kOutputEdge
    int slot;
};

std::vector<EdgeRef> enumerate_edges(const AfnGraph& g) {
    std::vector<EdgeRef> out;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        out.push_back({static_cast<int>(i), 0});
        if (g.nodes()[i].is_binary) out.push_back({static_cast<int>(i), 1});
    }
    out.push_back({kOutputEdge, 0});
    return out;
}

// indices of the subtree rooted at src, ascending
std::vector<int> subtree_of(const AfnGraph& g, int src) {
    std::vector<char> mark(g.node_count(), 0);
    mark[static_cast<std::size_t>(src)] = 1;
    for (int i = src; i >= 0; --i) {
        if (!mark[static_cast<std::size_t>(i)]) continue;
        const GNode& n = g.nodes()[static_cast<std::size_t>(i)];
        if (n.in0 != kInputX) mark[static_cast<std::size_t>(n.in0)] = 1;
        if (n.is_binary && n.in1 != kInputX) mark[static_cast<std::size_t>(n.in1)] = 1;
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < mark.size(); ++i)
        if (mark[i]) out.push_back(static_cast<int>(i));
    return out;
}

int require_unary(const OperatorTable& t, const char* name) {
    const int i = t.find_unary(name);
    if (i < 0)
        throw std::logic_error(std::string("binary insert needs the '") + name +
                               "' operator in the table");
    return i;
}

}  // namespace

const char* to_string(MutationKind k) {
    switch (k) {
        case MutationKind::insert: return "insert";
        case MutationKind::remove: return "remove";
        case MutationKind::change: return "change";
        case MutationKind::regenerate: return "regenerate";
    }
    return "?";
}

AfnGraph mutate_insert(const AfnGraph& g, Rng& rng, bool* binary_inserted) {
    const OperatorTable& t = g.table();
    const auto edges = enumerate_edges(g);
    const EdgeRef e = edges[rng.index(edges.size())];
    const std::size_t total_ops = t.unary.size() + t.binary.size();
    const std::size_t pick = rng.index(total_ops);
    const bool is_bin = pick >= t.unary.size();
    const int op = is_bin ? static_cast<int>(pick - t.unary.size()) : static_cast<int>(pick);
    if (binary_inserted) *binary_inserted = is_bin;

    const int n = static_cast<int>(g.node_count());
    const int src = e.node == kOutputEdge
                        ? g.root()
                        : (e.slot == 0 ? g.nodes()[static_cast<std::size_t>(e.node)].in0
                                       : g.nodes()[static_cast<std::size_t>(e.node)].in1);
    const int pos = e.node == kOutputEdge ? n : e.node;

    // fresh nodes occupying [pos, pos+m)
    std::vector<GNode> fresh;
    std::vector<ParamSite> fresh_sites;
    if (!is_bin) {
        fresh.push_back({false, static_cast<std::int16_t>(op), src, kInputX});
    } else {
        const std::string_view name = t.binary[static_cast<std::size_t>(op)].name;
        if (name == "add") {
            fresh.push_back({false, static_cast<std::int16_t>(require_unary(t, "zero")), kInputX,
                             kInputX});
            fresh.push_back({false, static_cast<std::int16_t>(require_unary(t, "neg")), pos,
                             kInputX});
            fresh.push_back({true, static_cast<std::int16_t>(op), src, pos + 1});
        } else if (name == "sub") {
            fresh.push_back({false, static_cast<std::int16_t>(require_unary(t, "zero")), kInputX,
                             kInputX});
            fresh.push_back({true, static_cast<std::int16_t>(op), src, pos});
        } else if (name == "mul" || name == "div" || name == "pow") {
            fresh.push_back({false, static_cast<std::int16_t>(require_unary(t, "one")), kInputX,
                             kInputX});
            fresh.push_back({true, static_cast<std::int16_t>(op), src, pos});
        } else if (name == "max" || name == "min") {
            if (src == kInputX) {
                fresh.push_back({true, static_cast<std::int16_t>(op), kInputX, kInputX});
            } else {
                const auto sub = subtree_of(g, src);
                std::vector<int> remap(g.node_count(), -1);
                for (std::size_t r = 0; r < sub.size(); ++r)
                    remap[static_cast<std::size_t>(sub[r])] = pos + static_cast<int>(r);
                for (int q : sub) {
                    GNode c = g.nodes()[static_cast<std::size_t>(q)];
                    if (c.in0 != kInputX && remap[static_cast<std::size_t>(c.in0)] >= 0)
                        c.in0 = remap[static_cast<std::size_t>(c.in0)];
                    if (c.is_binary && c.in1 != kInputX &&
                        remap[static_cast<std::size_t>(c.in1)] >= 0)
                        c.in1 = remap[static_cast<std::size_t>(c.in1)];
                    fresh.push_back(c);
                }
                for (const auto& s : g.param_sites()) {
                    if (s.node >= 0 && remap[static_cast<std::size_t>(s.node)] >= 0) {
                        ParamSite c = s;
                        c.node = remap[static_cast<std::size_t>(s.node)];
                        fresh_sites.push_back(c);
                    }
                }
                fresh.push_back({true, static_cast<std::int16_t>(op), src,
                                 pos + static_cast<int>(sub.size()) - 1});
            }
        } else {
            throw std::logic_error("binary operator lacks an insert identity");
        }
    }
    const int m = static_cast<int>(fresh.size());
    const int new_node_idx = pos + m - 1;

    std::vector<GNode> nodes;
    nodes.reserve(static_cast<std::size_t>(n + m));
    for (int q = 0; q < pos; ++q) nodes.push_back(g.nodes()[static_cast<std::size_t>(q)]);
    for (const auto& f : fresh) nodes.push_back(f);
    for (int q = pos; q < n; ++q) {
        GNode c = g.nodes()[static_cast<std::size_t>(q)];
        if (c.in0 != kInputX && c.in0 >= pos) c.in0 += m;
        if (c.is_binary && c.in1 != kInputX && c.in1 >= pos) c.in1 += m;
        nodes.push_back(c);
    }
    if (e.node != kOutputEdge) {
        GNode& consumer = nodes[static_cast<std::size_t>(e.node + m)];
        (e.slot == 0 ? consumer.in0 : consumer.in1) = new_node_idx;
    }

    std::vector<ParamSite> sites;
    for (const auto& s : g.param_sites()) {
        ParamSite c = s;
        if (c.node >= pos) c.node += m;
        sites.push_back(c);
    }
    for (const auto& s : fresh_sites) sites.push_back(s);

    AfnGraph out(g.table(), std::move(nodes), std::move(sites));
    out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
    out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
    out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
    return out;
}

AfnGraph mutate_remove(const AfnGraph& g, Rng& rng) {
    const int n = static_cast<int>(g.node_count());
    if (n < 2) throw std::invalid_argument("remove needs at least two nodes");
    const int iu = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
    const GNode& u = g.nodes()[static_cast<std::size_t>(iu)];
    const int kept_slot = u.is_binary ? static_cast<int>(rng.index(2)) : 0;
    const int kept = kept_slot == 0 ? u.in0 : u.in1;

    const ParamSite* incoming = nullptr;
    for (const auto& s : g.param_sites())
        if (s.node == iu && s.slot == kept_slot) incoming = &s;

    std::vector<GNode> nodes = g.nodes();
    std::vector<ParamSite> sites;
    for (const auto& s : g.param_sites())
        if (s.node != iu) sites.push_back(s);

    auto replace_site = [&](int node, int slot) {
        sites.erase(std::remove_if(sites.begin(), sites.end(),
                                   [&](const ParamSite& s) {
                                       return s.node == node && s.slot == slot;
                                   }),
                    sites.end());
        ParamSite c = *incoming;
        c.node = node;
        c.slot = slot;
        sites.push_back(c);
    };

    for (int w = 0; w < n; ++w) {
        if (w == iu) continue;
        GNode& nd = nodes[static_cast<std::size_t>(w)];
        if (nd.in0 == iu) {
            nd.in0 = kept;
            if (incoming) replace_site(w, 0);
        }
        if (nd.is_binary && nd.in1 == iu) {
            nd.in1 = kept;
            if (incoming) replace_site(w, 1);
        }
    }

    int new_root = iu == n - 1 ? kept : n - 1;
    if (new_root == kInputX) {
        // bare input survives; represent it as id(x)
        const int id_op = g.table().find_unary("id");
        if (id_op < 0) throw std::logic_error("table lacks an identity operator");
        std::vector<GNode> one_node{{false, static_cast<std::int16_t>(id_op), kInputX, kInputX}};
        std::vector<ParamSite> kept_sites;
        if (incoming) {
            ParamSite c = *incoming;
            c.node = 0;
            c.slot = 0;
            kept_sites.push_back(c);
        }
        for (const auto& s : g.param_sites())
            if (s.node == kOutputEdge) kept_sites.push_back(s);
        AfnGraph out(g.table(), std::move(one_node), std::move(kept_sites));
        out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
        out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
        out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
        return out;
    }
    if (iu == n - 1 && incoming) {
        // removed the root: the merged edge is the output edge
        sites.erase(std::remove_if(sites.begin(), sites.end(),
                                   [](const ParamSite& s) { return s.node == kOutputEdge; }),
                    sites.end());
        ParamSite c = *incoming;
        c.node = kOutputEdge;
        c.slot = 0;
        sites.push_back(c);
    }

    // mark-compact from the new root
    std::vector<char> mark(static_cast<std::size_t>(n), 0);
    mark[static_cast<std::size_t>(new_root)] = 1;
    for (int i = new_root; i >= 0; --i) {
        if (!mark[static_cast<std::size_t>(i)] || i == iu) continue;
        const GNode& nd = nodes[static_cast<std::size_t>(i)];
        if (nd.in0 != kInputX) mark[static_cast<std::size_t>(nd.in0)] = 1;
        if (nd.is_binary && nd.in1 != kInputX) mark[static_cast<std::size_t>(nd.in1)] = 1;
    }
    mark[static_cast<std::size_t>(iu)] = 0;
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    std::vector<GNode> compact;
    for (int i = 0; i < n; ++i) {
        if (!mark[static_cast<std::size_t>(i)]) continue;
        remap[static_cast<std::size_t>(i)] = static_cast<int>(compact.size());
        GNode c = nodes[static_cast<std::size_t>(i)];
        if (c.in0 != kInputX) c.in0 = remap[static_cast<std::size_t>(c.in0)];
        if (c.is_binary && c.in1 != kInputX) c.in1 = remap[static_cast<std::size_t>(c.in1)];
        compact.push_back(c);
    }
    std::vector<ParamSite> live;
    for (const auto& s : sites) {
        if (s.node == kOutputEdge) {
            live.push_back(s);
            continue;
        }
        if (s.node >= 0 && mark[static_cast<std::size_t>(s.node)]) {
            ParamSite c = s;
            c.node = remap[static_cast<std::size_t>(s.node)];
            live.push_back(c);
        }
    }
    AfnGraph out(g.table(), std::move(compact), std::move(live));
    out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
    out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
    out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
    return out;
}

AfnGraph mutate_change(const AfnGraph& g, Rng& rng) {
    const OperatorTable& t = g.table();
    const int iu = static_cast<int>(rng.index(g.node_count()));
    std::vector<GNode> nodes = g.nodes();
    GNode& nd = nodes[static_cast<std::size_t>(iu)];
    const std::size_t arity_ops = nd.is_binary ? t.binary.size() : t.unary.size();
    if (arity_ops > 1) {
        std::int16_t next;
        do {
            next = static_cast<std::int16_t>(rng.index(arity_ops));
        } while (next == nd.op);
        nd.op = next;
    }
    AfnGraph out(t, std::move(nodes), g.param_sites());
    out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
    out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
    out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
    return out;
}

AfnGraph mutate_regenerate(const AfnGraph& g, Rng& rng) {
    const OperatorTable& t = g.table();
    std::vector<GNode> nodes = g.nodes();
    for (auto& nd : nodes) {
        const std::size_t arity_ops = nd.is_binary ? t.binary.size() : t.unary.size();
        nd.op = static_cast<std::int16_t>(rng.index(arity_ops));
    }
    AfnGraph out(t, std::move(nodes), g.param_sites());
    out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
    out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
    out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
    return out;
}

AfnGraph mutate(const AfnGraph& g, Rng& rng, MutationKind* applied) {
    if (g.node_count() > kMaxMutationNodes) {
        if (applied) *applied = MutationKind::remove;
        return mutate_remove(g, rng);
    }
    auto kind = static_cast<MutationKind>(rng.index(4));
    if (kind == MutationKind::remove && g.node_count() == 1) kind = MutationKind::change;
    if (applied) *applied = kind;
    switch (kind) {
        case MutationKind::insert: return mutate_insert(g, rng);
        case MutationKind::remove: return mutate_remove(g, rng);
        case MutationKind::change: return mutate_change(g, rng);
        case MutationKind::regenerate: return mutate_regenerate(g, rng);
    }
    throw std::logic_error("unreachable");
}

AfnGraph strip_params(const AfnGraph& g) {
    AfnGraph out(g.table(), g.nodes(), {});
    out.set_param_default(ParamLabel::alpha, g.param_defaults()[0]);
    out.set_param_default(ParamLabel::beta, g.param_defaults()[1]);
    out.set_param_default(ParamLabel::gamma, g.param_defaults()[2]);
    return out;
}

AfnGraph parameterize(const AfnGraph& g, int k, ParamGranularity gran, Rng& rng) {
    AfnGraph base = strip_params(g);
    const auto edges = enumerate_edges(base);
    k = std::clamp(k, 0, 3);
    k = std::min<int>(k, static_cast<int>(edges.size()));

    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<ParamSite> sites;
    for (int j = 0; j < k; ++j) {
        const std::size_t r =
            static_cast<std::size_t>(j) + rng.index(order.size() - static_cast<std::size_t>(j));
        std::swap(order[static_cast<std::size_t>(j)], order[r]);
        const EdgeRef e = edges[order[static_cast<std::size_t>(j)]];
        ParamSite s;
        s.node = e.node;
        s.slot = e.slot;
        s.label = static_cast<ParamLabel>(j);
        s.granularity = gran;
        s.init_value = 1.0;
        sites.push_back(s);
    }
    return AfnGraph(g.table(), base.nodes(), std::move(sites));
}

// ---------------------------------------------------------------- CAFE trees

namespace {

int build_cafe(int depth, std::vector<GNode>& out, const OperatorTable& t, Rng& rng) {
    int c0 = kInputX, c1 = kInputX;
    if (depth > 1) {
        c0 = build_cafe(depth - 1, out, t, rng);
        out.push_back({false, static_cast<std::int16_t>(rng.index(t.unary.size())), c0, kInputX});
        c0 = static_cast<int>(out.size()) - 1;
        c1 = build_cafe(depth - 1, out, t, rng);
        out.push_back({false, static_cast<std::int16_t>(rng.index(t.unary.size())), c1, kInputX});
        c1 = static_cast<int>(out.size()) - 1;
    } else {
        out.push_back({false, static_cast<std::int16_t>(rng.index(t.unary.size())), kInputX,
                       kInputX});
        c0 = static_cast<int>(out.size()) - 1;
        out.push_back({false, static_cast<std::int16_t>(rng.index(t.unary.size())), kInputX,
                       kInputX});
        c1 = static_cast<int>(out.size()) - 1;
    }
    out.push_back({true, static_cast<std::int16_t>(rng.index(t.binary.size())), c0, c1});
    return static_cast<int>(out.size()) - 1;
}

}  // namespace

AfnGraph random_cafe_unit(Rng& rng) { return random_cafe_tree(1, rng); }

AfnGraph random_cafe_tree(int depth, Rng& rng) {
    if (depth < 1) throw std::invalid_argument("tree depth must be positive");
    const OperatorTable& t = OperatorTable::cafe();
    std::vector<GNode> nodes;
    build_cafe(depth, nodes, t, rng);
    return AfnGraph(t, std::move(nodes));
}

AfnGraph cafe_mutate(const AfnGraph& g, Rng& rng) {
    const OperatorTable& t = g.table();
    const int iu = static_cast<int>(rng.index(g.node_count()));
    std::vector<GNode> nodes = g.nodes();
    GNode& nd = nodes[static_cast<std::size_t>(iu)];
    const std::size_t arity_ops = nd.is_binary ? t.binary.size() : t.unary.size();
    nd.op = static_cast<std::int16_t>(rng.index(arity_ops));
    return AfnGraph(t, std::move(nodes), g.param_sites());
}

AfnGraph cafe_crossover(const AfnGraph& a, const AfnGraph& b, Rng& rng) {
    const int n = static_cast<int>(a.node_count());
    if (b.node_count() != a.node_count())
        throw std::invalid_argument("crossover parents differ in shape");
    for (int i = 0; i < n; ++i) {
        const GNode& x = a.nodes()[static_cast<std::size_t>(i)];
        const GNode& y = b.nodes()[static_cast<std::size_t>(i)];
        if (x.is_binary != y.is_binary || x.in0 != y.in0 || (x.is_binary && x.in1 != y.in1))
            throw std::invalid_argument("crossover parents differ in shape");
    }

    // level of each node below the root
    std::vector<int> level(static_cast<std::size_t>(n), 0);
    for (int i = n - 1; i >= 0; --i) {
        const GNode& nd = a.nodes()[static_cast<std::size_t>(i)];
        if (nd.in0 != kInputX) level[static_cast<std::size_t>(nd.in0)] = level[static_cast<std::size_t>(i)] + 1;
        if (nd.is_binary && nd.in1 != kInputX)
            level[static_cast<std::size_t>(nd.in1)] = level[static_cast<std::size_t>(i)] + 1;
    }
    const int max_level = *std::max_element(level.begin(), level.end());
    const int pick_level = static_cast<int>(rng.index(static_cast<std::size_t>(max_level) + 1));
    std::vector<int> at_level;
    for (int i = 0; i < n; ++i)
        if (level[static_cast<std::size_t>(i)] == pick_level) at_level.push_back(i);
    const int pos = at_level[rng.index(at_level.size())];

    // postorder subtree occupies [lo, pos]
    std::vector<int> size(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) {
        const GNode& nd = a.nodes()[static_cast<std::size_t>(i)];
        if (nd.in0 != kInputX) size[static_cast<std::size_t>(i)] += size[static_cast<std::size_t>(nd.in0)];
        if (nd.is_binary && nd.in1 != kInputX)
            size[static_cast<std::size_t>(i)] += size[static_cast<std::size_t>(nd.in1)];
    }
    const int lo = pos - size[static_cast<std::size_t>(pos)] + 1;
    for (int i = lo; i <= pos; ++i) {
        const GNode& nd = a.nodes()[static_cast<std::size_t>(i)];
        if ((nd.in0 != kInputX && nd.in0 < lo) ||
            (nd.is_binary && nd.in1 != kInputX && nd.in1 < lo))
            throw std::logic_error("subtree is not contiguous");
    }

    std::vector<GNode> nodes = a.nodes();
    for (int i = lo; i <= pos; ++i)
        nodes[static_cast<std::size_t>(i)] = b.nodes()[static_cast<std::size_t>(i)];
    return AfnGraph(a.table(), std::move(nodes));
}

}  // namespace actevo
