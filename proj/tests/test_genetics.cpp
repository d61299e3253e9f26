#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>

#include "actevo/genetics.hpp"

using namespace actevo;

namespace {
const OperatorTable& P() { return OperatorTable::pangaea(); }
}

TEST_CASE("binary insert preserves the function bitwise") {
    Rng rng(101);
    int binaries = 0;
    for (int i = 0; i < 1000; ++i) {
        AfnGraph parent = random_initial_graph(P(), rng);
        bool is_bin = false;
        AfnGraph child = mutate_insert(parent, rng, &is_bin);
        if (is_bin) {
            ++binaries;
            CHECK(child.fingerprint() == parent.fingerprint());
        }
        CHECK(child.node_count() > parent.node_count());
    }
    CHECK(binaries > 100);  // 7 of 34 operators are binary
}

TEST_CASE("binary insert preserves parameterized functions too") {
    Rng rng(102);
    for (int i = 0; i < 200; ++i) {
        AfnGraph base = random_initial_graph(P(), rng);
        AfnGraph parent = parameterize(base, 2, ParamGranularity::per_channel, rng);
        bool is_bin = false;
        AfnGraph child = mutate_insert(parent, rng, &is_bin);
        if (is_bin) CHECK(child.fingerprint() == parent.fingerprint());
        CHECK(child.param_sites().size() >= parent.param_sites().size());
    }
}

TEST_CASE("insert draws operators from the whole union") {
    Rng rng(103);
    AfnGraph parent = AfnGraph::parse("tanh(x)", P());
    std::set<std::string> ops;
    for (int i = 0; i < 4000; ++i) {
        AfnGraph child = mutate_insert(parent, rng);
        for (const auto& n : child.nodes()) {
            if (n.is_binary)
                ops.insert(P().binary[static_cast<std::size_t>(n.op)].name);
            else
                ops.insert(P().unary[static_cast<std::size_t>(n.op)].name);
        }
    }
    // every operator of both arities eventually appears
    CHECK(ops.size() == P().unary.size() + P().binary.size());
}

TEST_CASE("remove shrinks and picks subtrees uniformly") {
    Rng rng(104);
    AfnGraph parent = AfnGraph::parse("mul(tanh(x),sigmoid(x))", P());
    std::map<std::string, int> seen;
    const int trials = 6000;
    for (int i = 0; i < trials; ++i) {
        AfnGraph child = mutate_remove(parent, rng);
        CHECK(child.node_count() < parent.node_count());
        ++seen[child.format()];
    }
    // removing the root keeps either subtree with equal odds: 1/6 each
    CHECK(seen["tanh(x)"] > 850);
    CHECK(seen["tanh(x)"] < 1150);
    CHECK(seen["sigmoid(x)"] > 850);
    CHECK(seen["sigmoid(x)"] < 1150);
    CHECK(seen["mul(x,sigmoid(x))"] > 1800);
    CHECK(seen["mul(tanh(x),x)"] > 1800);

    CHECK_THROWS_AS(mutate_remove(AfnGraph::parse("tanh(x)", P()), rng), std::invalid_argument);

    // root removal that keeps the bare input produces id(x)
    AfnGraph two = AfnGraph::parse("max(tanh(x),x)", P());
    bool saw_id = false;
    for (int i = 0; i < 200; ++i) {
        AfnGraph child = mutate_remove(two, rng);
        if (child.format() == "id(x)") saw_id = true;
    }
    CHECK(saw_id);
}

TEST_CASE("change always lands on a different operator") {
    Rng rng(105);
    AfnGraph parent = AfnGraph::parse("mul(tanh(x),sigmoid(x))", P());
    for (int i = 0; i < 300; ++i) {
        AfnGraph child = mutate_change(parent, rng);
        CHECK(child.node_count() == parent.node_count());
        int diffs = 0;
        for (std::size_t k = 0; k < child.node_count(); ++k)
            if (child.nodes()[k].op != parent.nodes()[k].op) ++diffs;
        CHECK(diffs == 1);
    }
}

TEST_CASE("regenerate resamples all nodes within arity") {
    Rng rng(106);
    AfnGraph parent = AfnGraph::parse("mul(tanh(x),sigmoid(x))", P());
    AfnGraph child = mutate_regenerate(parent, rng);
    CHECK(child.node_count() == 3);
    CHECK(child.nodes()[2].is_binary);
    CHECK(!child.nodes()[0].is_binary);

    // one operator per arity: regenerate reproduces the parent exactly
    OperatorTable tiny{SpaceTag::pangaea,
                       {{"id", [](double x) { return x; }, [](double) { return 1.0; }}},
                       {{"add", [](double a, double b) { return a + b; },
                         [](double, double, double& da, double& db) { da = db = 1.0; }}}};
    AfnGraph tparent = AfnGraph::parse("add(id(x),id(x))", tiny);
    CHECK(mutate_regenerate(tparent, rng).format() == tparent.format());
    CHECK(mutate_change(tparent, rng).format() == tparent.format());
}

TEST_CASE("mutation dispatcher is uniform on an ordinary parent") {
    Rng rng(107);
    AfnGraph parent = AfnGraph::parse("mul(tanh(x),sigmoid(x))", P());
    std::map<MutationKind, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        MutationKind applied;
        mutate(parent, rng, &applied);
        ++counts[applied];
    }
    for (auto kind : {MutationKind::insert, MutationKind::remove, MutationKind::change,
                      MutationKind::regenerate}) {
        const double f = static_cast<double>(counts[kind]) / n;
        CHECK(f > 0.23);
        CHECK(f < 0.27);
    }
}

TEST_CASE("single-node parents redirect remove to change") {
    Rng rng(108);
    AfnGraph parent = AfnGraph::parse("tanh(x)", P());
    std::map<MutationKind, int> counts;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        MutationKind applied;
        AfnGraph child = mutate(parent, rng, &applied);
        CHECK(applied != MutationKind::remove);
        ++counts[applied];
    }
    const double change_f = static_cast<double>(counts[MutationKind::change]) / n;
    CHECK(change_f > 0.45);
    CHECK(change_f < 0.55);
}

TEST_CASE("oversized parents are forced through remove") {
    Rng rng(109);
    AfnGraph parent = AfnGraph::parse("tanh(relu(sigmoid(erf(swish(selu(elu(gelu(x))))))))", P());
    REQUIRE(parent.node_count() == 8);
    for (int i = 0; i < 50; ++i) {
        MutationKind applied;
        AfnGraph child = mutate(parent, rng, &applied);
        CHECK(applied == MutationKind::remove);
        CHECK(child.node_count() == 7);
    }
}

TEST_CASE("parameterize attaches fresh unit params on distinct edges") {
    Rng rng(110);
    AfnGraph g = AfnGraph::parse("mul(tanh(x),sigmoid(x))", P());
    for (int k = 0; k <= 3; ++k) {
        AfnGraph h = parameterize(g, k, ParamGranularity::per_neuron, rng);
        CHECK(h.param_sites().size() == static_cast<std::size_t>(k));
        std::set<std::pair<int, int>> edges;
        std::set<ParamLabel> labels;
        for (const auto& s : h.param_sites()) {
            edges.insert({s.node, s.slot});
            labels.insert(s.label);
            CHECK(s.init_value == 1.0);
            CHECK(s.granularity == ParamGranularity::per_neuron);
        }
        CHECK(edges.size() == static_cast<std::size_t>(k));
        CHECK(labels.size() == static_cast<std::size_t>(k));
        CHECK(h.fingerprint() == g.fingerprint());
        if (k == 1) CHECK(h.param_sites()[0].label == ParamLabel::alpha);
    }
    // k clamps to the edge count
    AfnGraph small = AfnGraph::parse("tanh(x)", P());
    AfnGraph h = parameterize(small, 3, ParamGranularity::per_layer, rng);
    CHECK(h.param_sites().size() == 2);

    AfnGraph stripped = strip_params(h);
    CHECK(stripped.param_sites().empty());
    CHECK(stripped.format() == "tanh(x)");
}

TEST_CASE("cafe units and trees have the frozen shapes") {
    Rng rng(111);
    for (int i = 0; i < 50; ++i) {
        AfnGraph u = random_cafe_unit(rng);
        CHECK(u.node_count() == 3);
        CHECK(u.depth() == 1);
        CHECK(u.nodes()[2].is_binary);
        CHECK(!u.nodes()[0].is_binary);
        CHECK(!u.nodes()[1].is_binary);
        CHECK(&u.table() == &OperatorTable::cafe());
    }
    AfnGraph t2 = random_cafe_tree(2, rng);
    CHECK(t2.node_count() == 9);
    CHECK(t2.depth() == 2);
    AfnGraph t3 = random_cafe_tree(3, rng);
    CHECK(t3.node_count() == 21);
    CHECK(t3.depth() == 3);
    CHECK_THROWS_AS(random_cafe_tree(0, rng), std::invalid_argument);

    // parse of the printed form reproduces the layout
    AfnGraph rt = AfnGraph::parse(t2.format(), OperatorTable::cafe());
    CHECK(rt.format() == t2.format());
    for (std::size_t i = 0; i < rt.node_count(); ++i) {
        CHECK(rt.nodes()[i].is_binary == t2.nodes()[i].is_binary);
        CHECK(rt.nodes()[i].in0 == t2.nodes()[i].in0);
    }
}

TEST_CASE("cafe mutate swaps at most one node") {
    Rng rng(112);
    AfnGraph parent = random_cafe_tree(2, rng);
    for (int i = 0; i < 200; ++i) {
        AfnGraph child = cafe_mutate(parent, rng);
        CHECK(child.node_count() == parent.node_count());
        int diffs = 0;
        for (std::size_t k = 0; k < child.node_count(); ++k) {
            CHECK(child.nodes()[k].is_binary == parent.nodes()[k].is_binary);
            if (child.nodes()[k].op != parent.nodes()[k].op) ++diffs;
        }
        CHECK(diffs <= 1);
    }
}

TEST_CASE("cafe crossover grafts same-position subtrees") {
    Rng rng(113);
    AfnGraph a = random_cafe_tree(2, rng);
    AfnGraph b = random_cafe_tree(2, rng);

    // self-crossover reproduces the parent exactly
    for (int i = 0; i < 50; ++i) CHECK(cafe_crossover(a, a, rng).format() == a.format());

    // every node of a child comes from the matching position of a parent
    for (int i = 0; i < 300; ++i) {
        AfnGraph c = cafe_crossover(a, b, rng);
        CHECK(c.node_count() == a.node_count());
        for (std::size_t k = 0; k < c.node_count(); ++k) {
            const bool from_a = c.nodes()[k].op == a.nodes()[k].op;
            const bool from_b = c.nodes()[k].op == b.nodes()[k].op;
            CHECK((from_a || from_b));
        }
    }

    // whole-tree positions appear: some children equal b outright
    bool saw_b = false;
    for (int i = 0; i < 400 && !saw_b; ++i)
        saw_b = cafe_crossover(a, b, rng).format() == b.format();
    CHECK(saw_b);

    AfnGraph d3 = random_cafe_tree(3, rng);
    CHECK_THROWS_AS(cafe_crossover(a, d3, rng), std::invalid_argument);
}

TEST_CASE("mutations are reproducible under a fixed seed") {
    Rng r1(99), r2(99);
    AfnGraph p1 = random_initial_graph(P(), r1);
    AfnGraph p2 = random_initial_graph(P(), r2);
    for (int i = 0; i < 100; ++i) {
        p1 = mutate(p1, r1);
        p2 = mutate(p2, r2);
        CHECK(p1.format() == p2.format());
    }
}
