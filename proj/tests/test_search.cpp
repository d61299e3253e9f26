#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "actevo/genetics.hpp"
#include "actevo/search.hpp"

using namespace actevo;

namespace {

// Seed-independent pseudo-fitness in [0,1): FNV-1a of the format string.
// Deterministic across runs, so the drivers' own rng is the only rng.
double string_fitness(const AfnGraph& g) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const char ch : g.format()) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ULL;
    }
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

Evaluator toy_eval(std::atomic<int>* counter = nullptr) {
    return [counter](const AfnGraph& g, std::uint64_t) {
        if (counter) ++*counter;
        return EvalOutcome{string_fitness(g), false};
    };
}

std::string jsonl_of(const SearchReport& rep) {
    std::ostringstream out;
    rep.write_jsonl(out);
    return out.str();
}

}  // namespace

TEST_CASE("softmax fitness matches the pinned selection ratios") {
    const auto p = softmax_fitness({0.9, 0.1});
    CHECK(std::abs(p[0] / p[1] - 2.2255) < 2.2255 * 1e-3);

    const auto q = softmax_fitness({-0.01, -10.0});
    CHECK(std::abs(q[0] / q[1] - 21807.0) < 21807.0 * 1e-3);
    CHECK(std::abs(q[0] / q[1] - std::exp(9.99)) < 1e-9 * std::exp(9.99));

    const auto u = softmax_fitness({3.5, 3.5, 3.5, 3.5});
    for (const double v : u) CHECK(v == 0.25);

    const auto m = softmax_fitness({0.2, 0.8, 0.5});
    CHECK(m[1] > m[2]);
    CHECK(m[2] > m[0]);
    double sum = 0.0;
    for (const double v : m) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("softmax fitness is stable and shift-invariant") {
    // Huge scores must not overflow exp.
    const auto big = softmax_fitness({1000.0, 999.0});
    CHECK(std::isfinite(big[0]));
    CHECK(std::abs(big[0] / big[1] - std::exp(1.0)) < 1e-12 * std::exp(1.0));

    // Dyadic scores plus an exactly representable constant: the shifted
    // differences are exact, so the probabilities are bitwise identical.
    const std::vector<double> base = {0.5, 0.25, -0.75, 0.0};
    const auto p0 = softmax_fitness(base);
    std::vector<double> shifted = base;
    for (double& s : shifted) s += 3.0;
    const auto p1 = softmax_fitness(shifted);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(p0[i] == p1[i]);

    // All-floor populations degrade to uniform selection, not NaN.
    const auto fl = softmax_fitness({-1e6, -1e6, -1e6});
    for (const double v : fl) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);

    CHECK_THROWS_AS(softmax_fitness({}), EmptyPopulation);
    CHECK_THROWS_AS(softmax_fitness({0.1, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax_fitness({std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
}

TEST_CASE("failure floors and metric names") {
    CHECK(failure_floor(FitnessMetric::accuracy) == 0.0);
    CHECK(failure_floor(FitnessMetric::neg_loss) == -1e6);
    CHECK(fitness_metric_from("accuracy") == FitnessMetric::accuracy);
    CHECK(fitness_metric_from("neg_loss") == FitnessMetric::neg_loss);
    CHECK(std::string(to_string(FitnessMetric::neg_loss)) == "neg_loss");
    CHECK_THROWS_AS(fitness_metric_from("acc"), std::invalid_argument);
}

TEST_CASE("generational run keeps exact budget and composition") {
    CafeConfig cfg;
    cfg.population = 20;
    cfg.random_injections = 4;
    cfg.elites = 3;
    cfg.generations = 5;
    cfg.depth = 2;

    std::atomic<int> calls{0};
    Rng rng(99);
    const SearchReport rep =
        cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(&calls), rng);

    CHECK(calls.load() == 100);  // N * generations, elites re-evaluated
    CHECK(rep.evaluations == 100);
    CHECK(rep.history.size() == 100);
    CHECK(rep.failures == 0);
    REQUIRE(rep.generations.size() == 5);
    for (std::size_t g = 0; g < 5; ++g) {
        CHECK(rep.generations[g].first_birth == g * 20);
        CHECK(rep.generations[g].last_birth == g * 20 + 19);
    }
    for (std::size_t i = 0; i < rep.history.size(); ++i) {
        CHECK(rep.history[i].birth_index == i);
        CHECK(rep.history[i].status == CandidateStatus::ok);
        CHECK(rep.history[i].graph.depth() == 2);
        CHECK(rep.history[i].eval_log.size() == 1);
    }

    // Deterministic evaluator: elites keep their scores, so the per-generation
    // best can never drop, and neither can the running best.
    for (std::size_t g = 1; g < rep.generations.size(); ++g) {
        CHECK(rep.generations[g].best >= rep.generations[g - 1].best);
        CHECK(rep.generations[g].best_so_far >= rep.generations[g - 1].best_so_far);
    }

    // The previous generation's best graph is carried into the next one.
    for (std::size_t g = 1; g < 5; ++g) {
        std::size_t prev_best = (g - 1) * 20;
        for (std::size_t i = (g - 1) * 20; i < g * 20; ++i)
            if (rep.history[i].fitness.value() > rep.history[prev_best].fitness.value())
                prev_best = i;
        const std::string want = rep.history[prev_best].graph.format();
        bool found = false;
        for (std::size_t i = g * 20; i < (g + 1) * 20 && !found; ++i)
            found = rep.history[i].graph.format() == want;
        CHECK(found);
    }

    REQUIRE(rep.top.size() == 3);
    CHECK(rep.history[rep.top[0]].fitness.value() >= rep.history[rep.top[1]].fitness.value());
    CHECK(rep.history[rep.top[1]].fitness.value() >= rep.history[rep.top[2]].fitness.value());
    double global_best = -1.0;
    for (const auto& c : rep.history) global_best = std::max(global_best, c.fitness.value());
    CHECK(rep.history[rep.top[0]].fitness.value() == global_best);
    CHECK(rep.generations.back().best_so_far == global_best);
}

TEST_CASE("generational run replays byte-identically") {
    CafeConfig cfg;
    cfg.population = 12;
    cfg.random_injections = 3;
    cfg.elites = 2;
    cfg.generations = 4;
    cfg.depth = 1;

    auto run = [&](std::uint64_t seed, int workers) {
        Rng rng(seed);
        return cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(), rng,
                           FitnessMetric::accuracy, workers);
    };
    const SearchReport a = run(7, 1);
    const SearchReport b = run(7, 1);
    const SearchReport c = run(8, 1);
    const SearchReport d = run(7, 3);  // pool must not change the stream

    CHECK(jsonl_of(a) == jsonl_of(b));
    CHECK(a.summary_json() == b.summary_json());
    CHECK(jsonl_of(a) != jsonl_of(c));
    CHECK(jsonl_of(a) == jsonl_of(d));
    CHECK(a.summary_json() == d.summary_json());
}

TEST_CASE("generational run rejects bad configs") {
    Rng rng(1);
    CafeConfig cfg;
    cfg.population = 10;
    cfg.elites = 7;
    cfg.random_injections = 5;  // 12 > N
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = CafeConfig{};
    cfg.generations = 0;
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = CafeConfig{};
    cfg.depth = 0;
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = CafeConfig{};
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng),
                    std::invalid_argument);
}

TEST_CASE("evaluator failures floor the candidate and never abort") {
    CafeConfig cfg;
    cfg.population = 10;
    cfg.random_injections = 2;
    cfg.elites = 2;
    cfg.generations = 3;
    cfg.depth = 1;

    // Every call blows up; the run must still complete with exact accounting.
    const Evaluator always_throws = [](const AfnGraph&, std::uint64_t) -> EvalOutcome {
        throw EvaluatorFailure("metric exploded");
    };
    Rng rng(4);
    const SearchReport rep = cafe_evolve(cfg, OperatorTable::cafe(), always_throws, rng,
                                         FitnessMetric::neg_loss);
    CHECK(rep.evaluations == 30);
    CHECK(rep.failures == 30);
    for (const auto& c : rep.history) {
        CHECK(c.status == CandidateStatus::failed);
        CHECK(c.fitness.value() == -1e6);
    }

    // A NaN fitness without the failed flag counts as a failure too.
    const Evaluator nan_eval = [](const AfnGraph&, std::uint64_t) {
        return EvalOutcome{std::nan(""), false};
    };
    Rng rng2(4);
    const SearchReport rep2 = cafe_evolve(cfg, OperatorTable::cafe(), nan_eval, rng2);
    CHECK(rep2.failures == 30);
    for (const auto& c : rep2.history) CHECK(c.fitness.value() == 0.0);

    // Anything that is not an EvaluatorFailure propagates.
    const Evaluator hard_error = [](const AfnGraph&, std::uint64_t) -> EvalOutcome {
        throw std::runtime_error("bug, not a failed evaluation");
    };
    Rng rng3(4);
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::cafe(), hard_error, rng3),
                    std::runtime_error);
    Rng rng4(4);
    CHECK_THROWS_AS(cafe_evolve(cfg, OperatorTable::cafe(), hard_error, rng4,
                                FitnessMetric::accuracy, 2),
                    std::runtime_error);
}

TEST_CASE("xor trainer evaluator replays identically through the driver") {
    const Dataset data = make_dataset(DataKind::xor_points, 64, 0.05, 11);
    MlpSpec spec;
    spec.widths = {2, 4, 1};
    TrainConfig tcfg;
    tcfg.epochs = 4;
    tcfg.batch = 16;
    tcfg.lr = 0.2;
    const Evaluator eval =
        make_train_evaluator(data, spec, tcfg, FitnessMetric::accuracy);

    CafeConfig cfg;
    cfg.population = 8;
    cfg.random_injections = 2;
    cfg.elites = 2;
    cfg.generations = 2;
    cfg.depth = 1;

    Rng r1(21);
    const SearchReport a = cafe_evolve(cfg, OperatorTable::cafe(), eval, r1);
    Rng r2(21);
    const SearchReport b = cafe_evolve(cfg, OperatorTable::cafe(), eval, r2);
    CHECK(jsonl_of(a) == jsonl_of(b));
    CHECK(a.summary_json() == b.summary_json());
    CHECK(a.evaluations == 16);
    for (const auto& c : a.history) {
        CHECK(c.fitness.has_value());
        if (c.status == CandidateStatus::failed) CHECK(c.fitness.value() == 0.0);
        if (c.status == CandidateStatus::ok) {
            CHECK(c.fitness.value() >= 0.0);
            CHECK(c.fitness.value() <= 1.0);
        }
    }
}

TEST_CASE("train evaluator floors a diverging activation") {
    const Dataset data = make_dataset(DataKind::xor_points, 48, 0.05, 3);
    MlpSpec spec;
    spec.widths = {2, 4, 1};
    spec.init = InitScheme::he_normal;
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch = 16;
    const Evaluator eval = make_train_evaluator(data, spec, tcfg, FitnessMetric::neg_loss);

    // sqrt of a standardized feature goes NaN on the first batch.
    const EvalOutcome bad =
        eval(AfnGraph::parse("sqrt(x)", OperatorTable::cafe()), 0);
    CHECK(bad.failed);
    CHECK(bad.fitness == -1e6);

    const EvalOutcome good =
        eval(AfnGraph::parse("tanh(x)", OperatorTable::cafe()), 0);
    CHECK_FALSE(good.failed);
    CHECK(std::isfinite(good.fitness));
    CHECK(good.fitness > -1e6);
}

TEST_CASE("steady-state run spends exactly its budget") {
    RegEvoConfig cfg;
    cfg.population = 16;
    cfg.sample = 4;
    cfg.evaluations = 120;
    cfg.threshold = 0.0;  // nothing rejected

    Rng rng(31);
    const SearchReport rep =
        regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng);
    CHECK(rep.evaluations == 120);
    CHECK(rep.rejected == 0);
    CHECK(rep.failures == 0);
    REQUIRE(rep.population.size() == 16);
    // With every candidate accepted, the window is the 16 newest rows.
    for (std::size_t i = 0; i < 16; ++i) CHECK(rep.population[i] == 104 + i);

    REQUIRE(rep.top.size() == 10);
    for (std::size_t i = 1; i < rep.top.size(); ++i)
        CHECK(rep.history[rep.top[i - 1]].fitness.value() >=
              rep.history[rep.top[i]].fitness.value());

    // Every graph carries multiplicative param sites.
    for (const auto& c : rep.history)
        CHECK(c.graph.format().find("param:") != std::string::npos);

    Rng rng2(31);
    const SearchReport again =
        regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng2);
    CHECK(jsonl_of(rep) == jsonl_of(again));
    CHECK(rep.summary_json() == again.summary_json());
}

TEST_CASE("steady-state threshold rejects without spending less") {
    // Below-threshold children are counted, logged, and kept out of the window.
    const Evaluator piecewise = [](const AfnGraph& g, std::uint64_t) {
        const bool low = g.format().find("elu") != std::string::npos;
        return EvalOutcome{low ? 0.05 : 0.5, false};
    };
    RegEvoConfig cfg;
    cfg.population = 8;
    cfg.sample = 3;
    cfg.evaluations = 80;
    cfg.threshold = 0.2;

    Rng rng(17);
    const SearchReport rep =
        regularized_evolve(cfg, OperatorTable::pangaea(), piecewise, rng);
    CHECK(rep.evaluations == 80);

    std::size_t rejected_seen = 0;
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < rep.history.size(); ++i) {
        const Candidate& c = rep.history[i];
        if (i < 8) {
            // Initial members seed the window no matter their score.
            CHECK(c.status == CandidateStatus::ok);
            accepted.push_back(i);
            continue;
        }
        if (c.fitness.value() < 0.2) {
            CHECK(c.status == CandidateStatus::rejected);
            ++rejected_seen;
        } else {
            CHECK(c.status == CandidateStatus::ok);
            accepted.push_back(i);
        }
    }
    CHECK(rep.rejected == rejected_seen);
    CHECK(rejected_seen > 0);  // the operator table guarantees elu-bearing children

    // Age eviction: the window is exactly the newest P accepted rows, in birth
    // order, so every eviction removed the minimal birth_index.
    REQUIRE(accepted.size() >= 8);
    const std::vector<std::size_t> want(accepted.end() - 8, accepted.end());
    CHECK(rep.population == want);
    for (const std::size_t i : rep.population)
        CHECK(rep.history[i].status == CandidateStatus::ok);
}

TEST_CASE("steady-state async sampling is a deterministic mode") {
    RegEvoConfig cfg;
    cfg.population = 8;
    cfg.sample = 3;
    cfg.evaluations = 60;
    cfg.threshold = 0.0;
    cfg.async_sampling = true;

    Rng r1(5);
    const SearchReport a =
        regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), r1);
    Rng r2(5);
    const SearchReport b =
        regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), r2);
    CHECK(a.evaluations == 60);
    CHECK(jsonl_of(a) == jsonl_of(b));
    CHECK(a.population.size() == 8);
}

TEST_CASE("steady-state run rejects bad configs") {
    Rng rng(1);
    RegEvoConfig cfg;
    cfg.sample = 65;  // > P
    CHECK_THROWS_AS(regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = RegEvoConfig{};
    cfg.evaluations = 63;  // < P
    CHECK_THROWS_AS(regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = RegEvoConfig{};
    cfg.threshold = 1.5;
    CHECK_THROWS_AS(regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng),
                    std::invalid_argument);
    cfg = RegEvoConfig{};
    cfg.params = 4;
    CHECK_THROWS_AS(regularized_evolve(cfg, OperatorTable::pangaea(), toy_eval(), rng),
                    std::invalid_argument);
}

TEST_CASE("rerank averages two fresh runs") {
    const auto mk = [](const std::string& s, double fit, std::uint64_t birth) {
        Candidate c;
        c.graph = AfnGraph::parse(s, OperatorTable::cafe());
        c.fitness = fit;
        c.birth_index = birth;
        return c;
    };
    const std::vector<Candidate> top = {
        mk("mul(tanh(x),id(x))", 0.9, 0),
        mk("add(sin(x),cos(x))", 0.8, 1),
        mk("max(max0(x),id(x))", 0.7, 2),
        mk("sub(id(x),sin(x))", 0.6, 3),
    };

    // Stateful evaluator: per-graph call counter picks the scripted value.
    auto counts = std::make_shared<std::map<std::string, int>>();
    const Evaluator scripted = [counts](const AfnGraph& g, std::uint64_t) {
        const int call = (*counts)[g.format()]++;
        const std::string s = g.format();
        if (s.find("tanh") != std::string::npos)
            return EvalOutcome{call == 0 ? 0.6 : 0.8, false};  // mean 0.7
        if (s.find("cos") != std::string::npos)
            return EvalOutcome{0.95, false};
        if (s.find("max0") != std::string::npos)
            return EvalOutcome{0.1, false};
        return EvalOutcome{0.3, false};
    };

    Rng rng(2);
    const auto ranked = rerank(top, scripted, rng);
    REQUIRE(ranked.size() == 4);
    CHECK(ranked[0].candidate.graph.format() == "add(sin(x),cos(x))");
    CHECK(ranked[0].adjusted == 0.95);
    CHECK(ranked[1].adjusted == 0.7);  // exactly (0.6 + 0.8) / 2
    CHECK(ranked[1].candidate.graph.format() == "mul(tanh(x),id(x))");
    CHECK(ranked[2].adjusted == 0.3);
    CHECK(ranked[3].adjusted == 0.1);
    CHECK(ranked[0].finalist);
    CHECK(ranked[1].finalist);
    CHECK(ranked[2].finalist);
    CHECK_FALSE(ranked[3].finalist);
    for (const auto& r : ranked) {
        CHECK(r.candidate.fitness.value() == r.adjusted);
        CHECK(r.candidate.eval_log.size() == 2);
        CHECK_FALSE(r.both_failed);
    }
    CHECK_THROWS_AS(rerank({}, scripted, rng), std::invalid_argument);
}

TEST_CASE("rerank floors failed runs and sinks double failures") {
    const auto mk = [](const std::string& s, std::uint64_t birth) {
        Candidate c;
        c.graph = AfnGraph::parse(s, OperatorTable::cafe());
        c.fitness = 0.5;
        c.birth_index = birth;
        return c;
    };
    // tanh: one failed run plus a 0.9 run. sin: both runs fail. id: two zeros.
    auto counts = std::make_shared<std::map<std::string, int>>();
    const Evaluator mixed = [counts](const AfnGraph& g, std::uint64_t) -> EvalOutcome {
        const std::string s = g.format();
        const int call = (*counts)[s]++;
        if (s.find("tanh") != std::string::npos) {
            if (call == 0) return {0.0, true};
            return {0.9, false};
        }
        if (s.find("sin") != std::string::npos) return {0.0, true};
        return {0.0, false};
    };

    Rng rng(3);
    const auto ranked =
        rerank({mk("tanh(x)", 0), mk("sin(x)", 1), mk("id(x)", 2)}, mixed, rng);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].candidate.graph.format() == "tanh(x)");
    CHECK(ranked[0].adjusted == 0.45);  // mean(floor 0, 0.9)
    CHECK(ranked[0].runs_failed == std::pair<bool, bool>{true, false});
    // id ties the double failure's adjusted value but must stay above it.
    CHECK(ranked[1].candidate.graph.format() == "id(x)");
    CHECK(ranked[1].adjusted == 0.0);
    CHECK(ranked[2].candidate.graph.format() == "sin(x)");
    CHECK(ranked[2].both_failed);
    CHECK(ranked[2].runs_failed == std::pair<bool, bool>{true, true});
    CHECK(ranked[2].candidate.status == CandidateStatus::failed);

    // Under neg_loss the floor is the large negative sentinel.
    const Evaluator fail_all = [](const AfnGraph&, std::uint64_t) -> EvalOutcome {
        return {0.0, true};
    };
    Candidate c;
    c.graph = AfnGraph::parse("id(x)", OperatorTable::cafe());
    c.fitness = -0.4;
    c.metric = FitnessMetric::neg_loss;
    Rng rng2(4);
    const auto sunk = rerank({c}, fail_all, rng2);
    CHECK(sunk[0].adjusted == -1e6);
    CHECK(sunk[0].both_failed);
}

TEST_CASE("rerank with a deterministic evaluator preserves the ordering") {
    std::vector<Candidate> top;
    Rng gen(12);
    for (int i = 0; i < 5; ++i) {
        Candidate c;
        c.graph = random_cafe_tree(1, gen);
        c.fitness = string_fitness(c.graph);
        c.birth_index = static_cast<std::uint64_t>(i);
        top.push_back(c);
    }
    std::sort(top.begin(), top.end(), [](const Candidate& a, const Candidate& b) {
        return a.fitness.value() > b.fitness.value();
    });
    Rng rng(13);
    const auto ranked = rerank(top, toy_eval(), rng);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].candidate.graph.format() == top[i].graph.format());
        CHECK(ranked[i].adjusted == top[i].fitness.value());
    }
}

TEST_CASE("exhaustive depth-1 sweep covers the whole space once") {
    std::atomic<int> calls{0};
    const SearchReport rep = exhaustive_search(EnumerableSpace::s1, OperatorTable::cafe(),
                                               toy_eval(&calls), 77);
    CHECK(calls.load() == 3456);
    CHECK(rep.evaluations == 3456);
    CHECK(rep.failures == 0);

    std::set<std::string> seen;
    for (const auto& c : rep.history) seen.insert(c.graph.format());
    CHECK(seen.size() == 3456);
    CHECK(seen.count("mul(arctan(x),min0(x))") == 1);

    REQUIRE(rep.top.size() == 3);
    double best = -1.0;
    for (const auto& c : rep.history) best = std::max(best, c.fitness.value());
    CHECK(rep.history[rep.top[0]].fitness.value() == best);
    REQUIRE(rep.generations.size() == 1);
    CHECK(rep.generations[0].last_birth == 3455);

    const SearchReport again = exhaustive_search(EnumerableSpace::s1,
                                                 OperatorTable::cafe(), toy_eval(), 77);
    CHECK(jsonl_of(rep) == jsonl_of(again));
    CHECK_THROWS_AS(exhaustive_search(EnumerableSpace::s1, OperatorTable::pangaea(),
                                      toy_eval(), 0),
                    std::invalid_argument);
}

TEST_CASE("random depth-2 sampling reports in groups of fifty") {
    Rng rng(5);
    const SearchReport rep =
        random_search(500, OperatorTable::cafe(), 2, toy_eval(), rng);
    CHECK(rep.evaluations == 500);
    REQUIRE(rep.generations.size() == 10);
    for (std::size_t g = 0; g < 10; ++g) {
        CHECK(rep.generations[g].first_birth == g * 50);
        CHECK(rep.generations[g].last_birth == g * 50 + 49);
    }
    for (const auto& c : rep.history) {
        CHECK(c.graph.depth() == 2);
        CHECK(c.graph.node_count() == 9);
    }

    Rng r2(5);
    const SearchReport same =
        random_search(500, OperatorTable::cafe(), 2, toy_eval(), r2);
    CHECK(jsonl_of(rep) == jsonl_of(same));
    Rng r3(6);
    const SearchReport other =
        random_search(500, OperatorTable::cafe(), 2, toy_eval(), r3);
    CHECK(jsonl_of(rep) != jsonl_of(other));

    Rng r4(5);
    const SearchReport partial =
        random_search(120, OperatorTable::cafe(), 2, toy_eval(), r4);
    REQUIRE(partial.generations.size() == 3);
    CHECK(partial.generations[2].first_birth == 100);
    CHECK(partial.generations[2].last_birth == 119);
}

TEST_CASE("evolution plus rerank spends generations times population plus two per finalist") {
    CafeConfig cfg;
    cfg.population = 10;
    cfg.random_injections = 3;
    cfg.elites = 2;
    cfg.generations = 3;
    cfg.depth = 1;

    std::atomic<int> calls{0};
    const Evaluator eval = toy_eval(&calls);
    Rng rng(41);
    const SearchReport rep = cafe_evolve(cfg, OperatorTable::cafe(), eval, rng);
    CHECK(calls.load() == 30);

    std::vector<Candidate> finalists;
    for (const std::size_t i : rep.top) finalists.push_back(rep.history[i]);
    const auto ranked = rerank(finalists, eval, rng);
    CHECK(calls.load() == 36);  // 30 + 2 * 3, nothing hidden
    CHECK(ranked.size() == 3);
}

TEST_CASE("welch test pins the documented cases") {
    const std::vector<double> x = {1.0, 2.0, 3.0};
    const CompareResult same = compare_runs(x, x);
    CHECK(same.t_stat == 0.0);
    CHECK(same.p_value == 1.0);
    CHECK_FALSE(same.degenerate);
    CHECK(same.mean_a == same.mean_b);

    const CompareResult zero =
        compare_runs({1.0, 1.0, 1.0, 1.0}, {0.0, 0.0, 0.0, 0.0});
    CHECK(zero.degenerate);
    CHECK(zero.p_value == 0.0);
    CHECK(std::isinf(zero.t_stat));
    CHECK(zero.t_stat > 0.0);
    const CompareResult flipped =
        compare_runs({0.0, 0.0}, {1.0, 1.0});
    CHECK(flipped.t_stat < 0.0);
    CHECK(flipped.degenerate);

    const CompareResult flat = compare_runs({1.0, 1.0}, {1.0, 1.0});
    CHECK(flat.degenerate);
    CHECK(flat.t_stat == 0.0);
    CHECK(flat.p_value == 1.0);

    CHECK_THROWS_AS(compare_runs({1.0}, {1.0, 2.0}), InsufficientSamples);
    CHECK_THROWS_AS(compare_runs({1.0, 2.0}, {}), InsufficientSamples);
    CHECK_THROWS_AS(compare_runs({1.0, std::nan("")}, {1.0, 2.0}), InsufficientSamples);

    // Non-finite entries are dropped, not propagated.
    const CompareResult dropped =
        compare_runs({1.0, 2.0, std::numeric_limits<double>::infinity()}, {1.0, 2.0});
    CHECK(dropped.n_a == 2);
    CHECK(dropped.n_b == 2);
}

namespace {

// Two-sided Student-t tail by Simpson quadrature; independent of the
// implementation's distribution routines.
double t_two_sided_quadrature(double t, double nu) {
    const double log_norm = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                            0.5 * std::log(nu * M_PI);
    const auto density = [&](double u) {
        return std::exp(log_norm - (nu + 1.0) / 2.0 * std::log1p(u * u / nu));
    };
    const double lo = std::fabs(t);
    const double hi = lo + 80.0;
    const int n = 200000;  // even
    const double h = (hi - lo) / n;
    double acc = density(lo) + density(hi);
    for (int i = 1; i < n; ++i) acc += density(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return 2.0 * acc * h / 3.0;
}

}  // namespace

TEST_CASE("welch test agrees with a quadrature oracle") {
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> b = {2.0, 3.0, 4.0, 5.0};
    const CompareResult r = compare_runs(a, b);

    // Hand recomputation: equal variances 5/3, n 4 each.
    const double va = 5.0 / 3.0;
    const double se = std::sqrt(va / 4.0 + va / 4.0);
    CHECK(std::abs(r.t_stat - (-1.0) / se) < 1e-12);
    CHECK(std::abs(r.df - 6.0) < 1e-9);
    CHECK(std::abs(r.p_value - t_two_sided_quadrature(r.t_stat, r.df)) < 1e-8);

    const double z = 1.959963984540054;
    const double half = z * std::sqrt(va / 4.0);
    CHECK(std::abs(r.ci95_a.first - (2.5 - half)) < 1e-12);
    CHECK(std::abs(r.ci95_a.second - (2.5 + half)) < 1e-12);
    CHECK(std::abs(r.ci95_b.first - (3.5 - half)) < 1e-12);

    // Symmetry under swapping sides.
    const CompareResult s = compare_runs(b, a);
    CHECK(std::abs(s.p_value - r.p_value) < 1e-15);
    CHECK(std::abs(s.t_stat + r.t_stat) < 1e-15);
}

TEST_CASE("welch test separates shifted gaussian samples") {
    Rng rng(123);
    std::vector<double> a(50), b(50);
    for (double& v : a) v = 0.7 + 0.1 * rng.normal();
    for (double& v : b) v = 0.6 + 0.1 * rng.normal();
    const CompareResult r = compare_runs(a, b);
    CHECK(r.p_value < 0.001);
    CHECK(r.t_stat > 0.0);
    CHECK(std::abs(r.mean_a - 0.7) < 0.05);
    CHECK(std::abs(r.mean_b - 0.6) < 0.05);
    // CI half-widths scale like sd/sqrt(n).
    CHECK((r.ci95_a.second - r.ci95_a.first) / 2.0 < 0.05);
    CHECK((r.ci95_a.second - r.ci95_a.first) / 2.0 > 0.01);
}

TEST_CASE("report rows carry function, fitness, seed, birth, status") {
    CafeConfig cfg;
    cfg.population = 6;
    cfg.random_injections = 2;
    cfg.elites = 1;
    cfg.generations = 2;
    cfg.depth = 1;
    Rng rng(9);
    const SearchReport rep = cafe_evolve(cfg, OperatorTable::cafe(), toy_eval(), rng);

    std::istringstream lines(jsonl_of(rep));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        CHECK(line.find("\"function\":") != std::string::npos);
        CHECK(line.find("\"fitness\":") != std::string::npos);
        CHECK(line.find("\"seed\":") != std::string::npos);
        CHECK(line.find("\"birth_index\":" + std::to_string(rows)) != std::string::npos);
        CHECK(line.find("\"status\":\"ok\"") != std::string::npos);
        ++rows;
    }
    CHECK(rows == 12);

    const std::string summary = rep.summary_json();
    CHECK(summary.find("\"mode\": \"cafe\"") != std::string::npos);
    CHECK(summary.find("\"evaluations\": 12") != std::string::npos);
    CHECK(summary.find("\"generations\"") != std::string::npos);
    CHECK(summary.find("\"best\"") != std::string::npos);
    // The seed of every recorded evaluation is visible in the summary's top list.
    CHECK(summary.find("\"evals\"") != std::string::npos);
}
