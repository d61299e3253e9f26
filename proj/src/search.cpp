#include "actevo/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "actevo/genetics.hpp"
#include "actevo/space.hpp"
#include "json.hpp"

namespace actevo {

using json = nlohmann::ordered_json;

const char* to_string(FitnessMetric m) {
    return m == FitnessMetric::accuracy ? "accuracy" : "neg_loss";
}

FitnessMetric fitness_metric_from(const std::string& name) {
    if (name == "accuracy") return FitnessMetric::accuracy;
    if (name == "neg_loss") return FitnessMetric::neg_loss;
    throw std::invalid_argument("unknown fitness metric: " + name);
}

double failure_floor(FitnessMetric metric) {
    return metric == FitnessMetric::accuracy ? kFailedAccuracyFitness
                                             : kFailedNegLossFitness;
}

const char* to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::ok: return "ok";
        case CandidateStatus::failed: return "failed";
        case CandidateStatus::rejected: return "rejected";
    }
    return "ok";
}

std::vector<double> softmax_fitness(const std::vector<double>& scores) {
    if (scores.empty()) throw EmptyPopulation();
    for (double s : scores)
        if (!std::isfinite(s))
            throw std::invalid_argument("softmax_fitness: non-finite score");
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace {

EvalOutcome safe_eval(const Evaluator& eval, const AfnGraph& g, std::uint64_t seed) {
    EvalOutcome out;
    try {
        out = eval(g, seed);
    } catch (const EvaluatorFailure&) {
        out.failed = true;
    }
    if (!out.failed && !std::isfinite(out.fitness)) out.failed = true;
    return out;
}

// Seeds are fixed before dispatch, so the outcome vector does not depend on
// scheduling and a worker pool reproduces the serial run exactly.
std::vector<EvalOutcome> run_batch(const std::vector<const AfnGraph*>& graphs,
                                   const std::vector<std::uint64_t>& seeds,
                                   const Evaluator& eval, int workers) {
    const int n = static_cast<int>(graphs.size());
    std::vector<EvalOutcome> out(graphs.size());
    const int w = std::max(1, std::min(workers, n));
    if (w <= 1) {
        for (int i = 0; i < n; ++i) out[i] = safe_eval(eval, *graphs[i], seeds[i]);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    out[i] = safe_eval(eval, *graphs[i], seeds[i]);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

// One history row per evaluator invocation; birth_index is the row number.
void push_candidate(SearchReport& rep, AfnGraph g, std::uint64_t seed,
                    const EvalOutcome& out, FitnessMetric metric) {
    Candidate c;
    c.graph = std::move(g);
    c.metric = metric;
    c.birth_index = rep.history.size();
    if (out.failed) {
        c.fitness = failure_floor(metric);
        c.status = CandidateStatus::failed;
        ++rep.failures;
    } else {
        c.fitness = out.fitness;
    }
    c.eval_log.emplace_back(seed, *c.fitness);
    rep.history.push_back(std::move(c));
    rep.evaluations = rep.history.size();
}

std::vector<std::size_t> top_indices(const std::vector<Candidate>& hist, std::size_t k) {
    std::vector<std::size_t> idx(hist.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double fa = hist[a].fitness.value();
        const double fb = hist[b].fitness.value();
        if (fa != fb) return fa > fb;
        return a < b;
    });
    if (idx.size() > k) idx.resize(k);
    return idx;
}

void log_generation(SearchReport& rep, int index, std::size_t first, std::size_t last,
                    double& best_so_far) {
    GenerationLog log;
    log.index = index;
    log.first_birth = first;
    log.last_birth = last;
    double best = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        const double f = rep.history[i].fitness.value();
        best = std::max(best, f);
        sum += f;
    }
    log.best = best;
    log.mean = sum / static_cast<double>(last - first + 1);
    best_so_far = std::max(best_so_far, best);
    log.best_so_far = best_so_far;
    rep.generations.push_back(log);
}

std::size_t sample_cdf(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

const Candidate* SearchReport::best() const {
    return top.empty() ? nullptr : &history[top.front()];
}

void SearchReport::write_jsonl(std::ostream& out) const {
    for (const auto& c : history) {
        json row;
        row["function"] = c.graph.format();
        if (c.fitness)
            row["fitness"] = *c.fitness;
        else
            row["fitness"] = nullptr;
        row["seed"] = c.eval_log.empty() ? std::uint64_t{0} : c.eval_log.front().first;
        row["birth_index"] = c.birth_index;
        row["status"] = to_string(c.status);
        out << row.dump() << '\n';
    }
}

std::string SearchReport::summary_json() const {
    json doc;
    doc["mode"] = mode;
    doc["metric"] = to_string(metric);
    doc["seed"] = seed;
    doc["config"] = config_json.empty() ? json::object() : json::parse(config_json);
    doc["evaluations"] = evaluations;
    doc["failures"] = failures;
    doc["rejected"] = rejected;
    if (const Candidate* b = best()) {
        doc["best"] = json{{"function", b->graph.format()},
                           {"fitness", b->fitness.value()},
                           {"birth_index", b->birth_index}};
    } else {
        doc["best"] = nullptr;
    }
    doc["top"] = json::array();
    for (std::size_t i : top) {
        const Candidate& c = history[i];
        json seeds = json::array();
        for (const auto& [seed_used, fit] : c.eval_log) {
            seeds.push_back(json{{"seed", seed_used}, {"fitness", fit}});
        }
        doc["top"].push_back(json{{"function", c.graph.format()},
                                  {"fitness", c.fitness.value()},
                                  {"birth_index", c.birth_index},
                                  {"status", to_string(c.status)},
                                  {"evals", seeds}});
    }
    doc["generations"] = json::array();
    for (const auto& g : generations) {
        doc["generations"].push_back(json{{"index", g.index},
                                          {"first_birth", g.first_birth},
                                          {"last_birth", g.last_birth},
                                          {"best", g.best},
                                          {"mean", g.mean},
                                          {"best_so_far", g.best_so_far}});
    }
    if (mode == "regularized") {
        json pop = json::array();
        for (std::size_t i : population) pop.push_back(history[i].birth_index);
        doc["population"] = pop;
    }
    return doc.dump(2) + "\n";
}

SearchReport cafe_evolve(const CafeConfig& cfg, const OperatorTable& table,
                         const Evaluator& eval, Rng& rng, FitnessMetric metric,
                         int workers) {
    if (table.tag != SpaceTag::cafe)
        throw std::invalid_argument("cafe_evolve: balanced trees are defined over the core-unit table");
    if (cfg.population < 1) throw std::invalid_argument("cafe_evolve: population must be positive");
    if (cfg.elites < 0 || cfg.random_injections < 0)
        throw std::invalid_argument("cafe_evolve: elites and random_injections must be non-negative");
    const int children = cfg.population - cfg.elites - cfg.random_injections;
    if (children < 0)
        throw std::invalid_argument("cafe_evolve: elites + random_injections exceed population");
    if (cfg.generations < 1) throw std::invalid_argument("cafe_evolve: generations must be positive");
    if (cfg.depth < 1) throw std::invalid_argument("cafe_evolve: depth must be positive");

    SearchReport rep;
    rep.mode = "cafe";
    rep.metric = metric;
    rep.config_json = json{{"population", cfg.population},
                           {"random_injections", cfg.random_injections},
                           {"elites", cfg.elites},
                           {"generations", cfg.generations},
                           {"depth", cfg.depth}}
                          .dump();

    const std::size_t n = static_cast<std::size_t>(cfg.population);
    double best_so_far = -std::numeric_limits<double>::infinity();
    for (int gen = 0; gen < cfg.generations; ++gen) {
        std::vector<AfnGraph> members;
        members.reserve(n);
        if (gen == 0) {
            for (std::size_t i = 0; i < n; ++i)
                members.push_back(random_cafe_tree(cfg.depth, rng));
        } else {
            const std::size_t prev = static_cast<std::size_t>(gen - 1) * n;
            std::vector<double> scores(n);
            for (std::size_t i = 0; i < n; ++i)
                scores[i] = rep.history[prev + i].fitness.value();

            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return a < b;
            });
            for (int e = 0; e < cfg.elites; ++e)
                members.push_back(rep.history[prev + order[static_cast<std::size_t>(e)]].graph);
            for (int r = 0; r < cfg.random_injections; ++r)
                members.push_back(random_cafe_tree(cfg.depth, rng));
            const std::vector<double> probs = softmax_fitness(scores);
            for (int c = 0; c < children; ++c) {
                const std::size_t pa = sample_cdf(probs, rng);
                const std::size_t pb = sample_cdf(probs, rng);
                AfnGraph child = cafe_crossover(rep.history[prev + pa].graph,
                                                rep.history[prev + pb].graph, rng);
                members.push_back(cafe_mutate(child, rng));
            }
        }

        std::vector<std::uint64_t> seeds(n);
        for (auto& s : seeds) s = rng.next_u64();
        std::vector<const AfnGraph*> ptrs(n);
        for (std::size_t i = 0; i < n; ++i) ptrs[i] = &members[i];
        const std::vector<EvalOutcome> outcomes = run_batch(ptrs, seeds, eval, workers);

        const std::size_t first = rep.history.size();
        for (std::size_t i = 0; i < n; ++i)
            push_candidate(rep, std::move(members[i]), seeds[i], outcomes[i], metric);
        log_generation(rep, gen, first, rep.history.size() - 1, best_so_far);
    }
    rep.top = top_indices(rep.history, 3);
    return rep;
}

SearchReport regularized_evolve(const RegEvoConfig& cfg, const OperatorTable& table,
                                const Evaluator& eval, Rng& rng, FitnessMetric metric) {
    if (cfg.population < 1)
        throw std::invalid_argument("regularized_evolve: population must be positive");
    if (cfg.sample < 1 || cfg.sample > cfg.population)
        throw std::invalid_argument("regularized_evolve: sample must lie in [1, population]");
    if (cfg.evaluations < cfg.population)
        throw std::invalid_argument(
            "regularized_evolve: evaluations must cover the initial population");
    if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0))
        throw std::invalid_argument("regularized_evolve: threshold must lie in [0, 1]");
    if (cfg.params < 0 || cfg.params > 3)
        throw std::invalid_argument("regularized_evolve: params must lie in [0, 3]");

    SearchReport rep;
    rep.mode = "regularized";
    rep.metric = metric;
    rep.config_json = json{{"population", cfg.population},
                           {"sample", cfg.sample},
                           {"evaluations", cfg.evaluations},
                           {"threshold", cfg.threshold},
                           {"params", cfg.params},
                           {"granularity", to_string(cfg.granularity)},
                           {"async_sampling", cfg.async_sampling}}
                          .dump();

    const std::size_t p = static_cast<std::size_t>(cfg.population);
    const std::size_t budget = static_cast<std::size_t>(cfg.evaluations);
    std::vector<std::size_t> window;  // accepted members, oldest first
    window.reserve(p + 1);

    for (std::size_t i = 0; i < p; ++i) {
        AfnGraph g = parameterize(random_initial_graph(table, rng), cfg.params,
                                  cfg.granularity, rng);
        const std::uint64_t seed = rng.next_u64();
        const EvalOutcome outcome = safe_eval(eval, g, seed);
        push_candidate(rep, std::move(g), seed, outcome, metric);
        window.push_back(rep.history.size() - 1);
    }

    while (rep.history.size() < budget) {
        // Tournament: S draws with replacement, best by fitness, older wins ties.
        std::size_t parent = 0;
        bool have_parent = false;
        for (int s = 0; s < cfg.sample; ++s) {
            std::size_t pick;
            if (cfg.async_sampling) {
                const std::size_t tail = std::min(p, rep.history.size());
                pick = rep.history.size() - tail + rng.index(tail);
            } else {
                pick = window[rng.index(window.size())];
            }
            if (!have_parent) {
                parent = pick;
                have_parent = true;
                continue;
            }
            const double fp = rep.history[pick].fitness.value();
            const double fb = rep.history[parent].fitness.value();
            if (fp > fb || (fp == fb && pick < parent)) parent = pick;
        }

        AfnGraph child = parameterize(mutate(rep.history[parent].graph, rng), cfg.params,
                                      cfg.granularity, rng);
        const std::uint64_t seed = rng.next_u64();
        const EvalOutcome outcome = safe_eval(eval, child, seed);
        push_candidate(rep, std::move(child), seed, outcome, metric);

        Candidate& c = rep.history.back();
        if (c.fitness.value() < cfg.threshold) {
            if (c.status == CandidateStatus::ok) {
                c.status = CandidateStatus::rejected;
                ++rep.rejected;
            }
            continue;  // counted toward the budget, never inserted
        }
        window.push_back(rep.history.size() - 1);
        if (window.size() > p) window.erase(window.begin());  // front holds the min birth_index
    }

    rep.population = window;
    rep.top = top_indices(rep.history, 10);
    return rep;
}

std::vector<RerankedCandidate> rerank(const std::vector<Candidate>& top,
                                      const Evaluator& full_eval, Rng& rng, int workers) {
    if (top.empty()) throw std::invalid_argument("rerank: empty candidate list");

    std::vector<std::uint64_t> seeds(top.size() * 2);
    for (auto& s : seeds) s = rng.next_u64();
    std::vector<const AfnGraph*> ptrs(top.size() * 2);
    for (std::size_t i = 0; i < top.size(); ++i) {
        ptrs[2 * i] = &top[i].graph;
        ptrs[2 * i + 1] = &top[i].graph;
    }
    const std::vector<EvalOutcome> outcomes = run_batch(ptrs, seeds, full_eval, workers);

    std::vector<RerankedCandidate> out(top.size());
    for (std::size_t i = 0; i < top.size(); ++i) {
        const EvalOutcome& a = outcomes[2 * i];
        const EvalOutcome& b = outcomes[2 * i + 1];
        const double floor = failure_floor(top[i].metric);
        const double va = a.failed ? floor : a.fitness;
        const double vb = b.failed ? floor : b.fitness;
        RerankedCandidate& r = out[i];
        r.candidate = top[i];
        r.adjusted = (va + vb) / 2.0;
        r.both_failed = a.failed && b.failed;
        r.runs_failed = {a.failed, b.failed};
        r.candidate.fitness = r.adjusted;
        if (r.both_failed) r.candidate.status = CandidateStatus::failed;
        r.candidate.eval_log.emplace_back(seeds[2 * i], va);
        r.candidate.eval_log.emplace_back(seeds[2 * i + 1], vb);
    }
    std::sort(out.begin(), out.end(), [](const RerankedCandidate& a, const RerankedCandidate& b) {
        if (a.both_failed != b.both_failed) return !a.both_failed;
        if (a.adjusted != b.adjusted) return a.adjusted > b.adjusted;
        return a.candidate.birth_index < b.candidate.birth_index;
    });
    for (std::size_t i = 0; i < out.size() && i < 3; ++i) out[i].finalist = true;
    return out;
}

SearchReport exhaustive_search(EnumerableSpace space, const OperatorTable& table,
                               const Evaluator& eval, std::uint64_t seed_base,
                               int workers) {
    if (space != EnumerableSpace::s1)
        throw std::invalid_argument("exhaustive_search: only the depth-1 space is enumerable");
    if (table.tag != SpaceTag::cafe)
        throw std::invalid_argument("exhaustive_search: the depth-1 space is defined over the core-unit table");

    const std::vector<std::string> strings = enumerate_cafe_units();
    std::vector<AfnGraph> graphs;
    graphs.reserve(strings.size());
    for (const auto& s : strings) graphs.push_back(AfnGraph::parse(s, table));

    SearchReport rep;
    rep.mode = "exhaustive";
    rep.metric = FitnessMetric::accuracy;
    rep.config_json = json{{"space", "depth1"}, {"seed_base", seed_base}}.dump();

    std::vector<std::uint64_t> seeds(graphs.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = mix_seed(seed_base, i);
    std::vector<const AfnGraph*> ptrs(graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) ptrs[i] = &graphs[i];
    const std::vector<EvalOutcome> outcomes = run_batch(ptrs, seeds, eval, workers);

    double best_so_far = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < graphs.size(); ++i)
        push_candidate(rep, std::move(graphs[i]), seeds[i], outcomes[i],
                       FitnessMetric::accuracy);
    log_generation(rep, 0, 0, rep.history.size() - 1, best_so_far);
    rep.top = top_indices(rep.history, 3);
    return rep;
}

SearchReport random_search(int budget, const OperatorTable& table, int depth,
                           const Evaluator& eval, Rng& rng, int workers) {
    if (budget < 1) throw std::invalid_argument("random_search: budget must be positive");
    if (depth < 1) throw std::invalid_argument("random_search: depth must be positive");
    if (table.tag != SpaceTag::cafe)
        throw std::invalid_argument("random_search: balanced trees are defined over the core-unit table");

    SearchReport rep;
    rep.mode = "random";
    rep.metric = FitnessMetric::accuracy;
    rep.config_json = json{{"budget", budget}, {"depth", depth}}.dump();

    constexpr int kGroup = 50;
    double best_so_far = -std::numeric_limits<double>::infinity();
    int remaining = budget;
    int gen = 0;
    while (remaining > 0) {
        const int chunk = std::min(kGroup, remaining);
        std::vector<AfnGraph> members;
        members.reserve(static_cast<std::size_t>(chunk));
        for (int i = 0; i < chunk; ++i) members.push_back(random_cafe_tree(depth, rng));
        std::vector<std::uint64_t> seeds(static_cast<std::size_t>(chunk));
        for (auto& s : seeds) s = rng.next_u64();
        std::vector<const AfnGraph*> ptrs(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) ptrs[i] = &members[i];
        const std::vector<EvalOutcome> outcomes = run_batch(ptrs, seeds, eval, workers);

        const std::size_t first = rep.history.size();
        for (std::size_t i = 0; i < members.size(); ++i)
            push_candidate(rep, std::move(members[i]), seeds[i], outcomes[i],
                           FitnessMetric::accuracy);
        log_generation(rep, gen++, first, rep.history.size() - 1, best_so_far);
        remaining -= chunk;
    }
    rep.top = top_indices(rep.history, 3);
    return rep;
}

namespace {

double sample_mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

CompareResult compare_runs(const std::vector<double>& a, const std::vector<double>& b) {
    auto finite_of = [](const std::vector<double>& v) {
        std::vector<double> out;
        out.reserve(v.size());
        for (double x : v)
            if (std::isfinite(x)) out.push_back(x);
        return out;
    };
    const std::vector<double> fa = finite_of(a);
    const std::vector<double> fb = finite_of(b);
    if (fa.size() < 2)
        throw InsufficientSamples("compare_runs: side a has fewer than 2 finite entries");
    if (fb.size() < 2)
        throw InsufficientSamples("compare_runs: side b has fewer than 2 finite entries");

    CompareResult r;
    r.n_a = fa.size();
    r.n_b = fb.size();
    r.mean_a = sample_mean(fa);
    r.mean_b = sample_mean(fb);
    const double va = sample_var(fa, r.mean_a);
    const double vb = sample_var(fb, r.mean_b);
    const double na = static_cast<double>(fa.size());
    const double nb = static_cast<double>(fb.size());

    constexpr double kZ95 = 1.959963984540054;
    const double half_a = kZ95 * std::sqrt(va / na);
    const double half_b = kZ95 * std::sqrt(vb / nb);
    r.ci95_a = {r.mean_a - half_a, r.mean_a + half_a};
    r.ci95_b = {r.mean_b - half_b, r.mean_b + half_b};

    const double sa2 = va / na;
    const double sb2 = vb / nb;
    const double se2 = sa2 + sb2;
    if (se2 == 0.0) {
        r.degenerate = true;
        if (r.mean_a == r.mean_b) {
            r.t_stat = 0.0;
            r.p_value = 1.0;
        } else {
            r.t_stat = std::copysign(std::numeric_limits<double>::infinity(),
                                     r.mean_a - r.mean_b);
            r.p_value = 0.0;
        }
        return r;
    }
    r.t_stat = (r.mean_a - r.mean_b) / std::sqrt(se2);
    r.df = se2 * se2 / (sa2 * sa2 / (na - 1.0) + sb2 * sb2 / (nb - 1.0));
    if (r.t_stat == 0.0) {
        r.p_value = 1.0;
        return r;
    }
    const boost::math::students_t_distribution<double> dist(r.df);
    const double tail = boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_stat)));
    r.p_value = std::min(1.0, 2.0 * tail);
    return r;
}

Evaluator make_train_evaluator(Dataset data, MlpSpec base, TrainConfig train_cfg,
                               FitnessMetric metric) {
    return [data = std::move(data), base = std::move(base), train_cfg,
            metric](const AfnGraph& g, std::uint64_t seed) {
        MlpSpec spec = base;
        spec.activation = g;
        TrainConfig cfg = train_cfg;
        cfg.seed = seed;
        const TrainResult result = train(spec, data, cfg);
        EvalOutcome out;
        out.fitness = fitness(result, metric);
        out.failed = result.status == TrainStatus::failed_nonfinite;
        return out;
    };
}

}  // namespace actevo
