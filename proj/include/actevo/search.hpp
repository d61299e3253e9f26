#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "actevo/graph.hpp"
#include "actevo/nnet.hpp"
#include "actevo/rng.hpp"

namespace actevo {

// Search drivers over activation-function graphs: exhaustive and random
// baselines, generational evolution over balanced trees, and steady-state
// regularized evolution. Every evaluator invocation appends exactly one
// candidate record, so report row counts double as the budget ledger.

struct EmptyPopulation : std::runtime_error {
    EmptyPopulation() : std::runtime_error("softmax_fitness: empty score list") {}
};

// An evaluator may throw this instead of returning failed=true. The drivers
// catch it, floor the candidate, and keep going; no other exception type is
// absorbed.
struct EvaluatorFailure : std::runtime_error {
    explicit EvaluatorFailure(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientSamples : std::runtime_error {
    explicit InsufficientSamples(const std::string& what) : std::runtime_error(what) {}
};

struct EvalOutcome {
    double fitness = 0.0;
    bool failed = false;
};

// Must be a pure function of (graph, seed): the drivers pre-assign seeds in
// birth order, which is what makes worker-pool runs replay byte-identically.
// A non-finite fitness with failed=false is treated as a failure.
using Evaluator = std::function<EvalOutcome(const AfnGraph&, std::uint64_t)>;

const char* to_string(FitnessMetric m);
FitnessMetric fitness_metric_from(const std::string& name);

// Fitness assigned to failed evaluations: 0 for accuracy, -1e6 for neg_loss.
double failure_floor(FitnessMetric metric);

enum class CandidateStatus : std::uint8_t { ok, failed, rejected };
const char* to_string(CandidateStatus s);

struct Candidate {
    AfnGraph graph;
    std::optional<double> fitness;  // present iff evaluated; floored on failure
    FitnessMetric metric = FitnessMetric::accuracy;
    std::uint64_t birth_index = 0;  // strictly increasing across the run
    CandidateStatus status = CandidateStatus::ok;
    std::vector<std::pair<std::uint64_t, double>> eval_log;  // (seed, fitness)
};

// p_i = e^{s_i} / sum_j e^{s_j}, computed with max-subtraction. Adding a
// constant to every score leaves the vector unchanged (bitwise, whenever the
// shifted scores are exactly representable). Throws EmptyPopulation on an
// empty list and std::invalid_argument on non-finite scores.
std::vector<double> softmax_fitness(const std::vector<double>& scores);

struct CafeConfig {
    int population = 50;         // N, evaluated in full every generation
    int random_injections = 10;  // m fresh random trees per generation
    int elites = 5;              // carried over (and re-evaluated)
    int generations = 10;        // counts the initial random generation
    int depth = 2;               // balanced-tree depth of every member
};

struct RegEvoConfig {
    int population = 64;      // P
    int sample = 16;          // tournament size S, sampled with replacement
    int evaluations = 1000;   // C, total budget including the P initial evals
    double threshold = 0.20;  // V; a child below it is counted but not inserted
    int params = 3;           // param sites attached to every new graph
    ParamGranularity granularity = ParamGranularity::per_layer;
    // Parents sampled from the P most recently evaluated candidates instead
    // of the sliding-window population.
    bool async_sampling = false;
};

struct GenerationLog {
    int index = 0;
    std::uint64_t first_birth = 0;  // inclusive
    std::uint64_t last_birth = 0;   // inclusive
    double best = 0.0;
    double mean = 0.0;
    double best_so_far = 0.0;  // running max over every evaluation so far
};

struct SearchReport {
    std::string mode;  // "cafe" | "regularized" | "exhaustive" | "random"
    FitnessMetric metric = FitnessMetric::accuracy;
    std::uint64_t seed = 0;  // informational; set by the caller that owns the rng
    std::string config_json;
    std::vector<Candidate> history;          // one entry per evaluator invocation
    std::vector<GenerationLog> generations;  // empty for modes without groups
    std::vector<std::size_t> top;            // indices into history, best first
    std::vector<std::size_t> population;     // regularized: final window, birth order
    std::size_t evaluations = 0;             // == history.size()
    std::size_t failures = 0;
    std::size_t rejected = 0;

    const Candidate* best() const;  // first `top` entry, nullptr when empty
    // One compact JSON object per history row:
    //   {"function":..., "fitness":..., "seed":..., "birth_index":..., "status":...}
    void write_jsonl(std::ostream& out) const;
    std::string summary_json() const;
};

// Generational evolution over depth-`cfg.depth` balanced trees. Every
// generation evaluates all N members (elites again, so their eval history
// accumulates across rows); budget is exactly N * generations. Children are
// bred from 2*(N - elites - m) parent draws over the softmax of the previous
// generation's fitness, crossover then node-swap mutation. Returns top-3 over
// the whole history plus per-generation logs.
SearchReport cafe_evolve(const CafeConfig& cfg, const OperatorTable& table,
                         const Evaluator& eval, Rng& rng,
                         FitnessMetric metric = FitnessMetric::accuracy,
                         int workers = 1);

// Steady-state evolution: P initial parameterized graphs (these count toward
// C), then repeat { sample S with replacement, best is parent, mutate and
// re-parameterize, evaluate } until exactly C evaluations. A child below
// `threshold` is recorded as rejected and never enters the population; an
// accepted insertion evicts the member with the smallest birth_index, keeping
// the window at P. Returns top-10 over the whole history.
SearchReport regularized_evolve(const RegEvoConfig& cfg, const OperatorTable& table,
                                const Evaluator& eval, Rng& rng,
                                FitnessMetric metric = FitnessMetric::accuracy);

struct RerankedCandidate {
    Candidate candidate;  // fitness := adjusted mean; eval_log gains both runs
    double adjusted = 0.0;
    bool both_failed = false;
    std::pair<bool, bool> runs_failed{false, false};
    bool finalist = false;  // among the top 3 after reranking
};

// Two independent full-budget evaluations per candidate; adjusted fitness is
// their mean, with a failed run counted at the metric floor. Sorted by
// adjusted fitness; candidates failing both runs rank below everything else.
std::vector<RerankedCandidate> rerank(const std::vector<Candidate>& top,
                                      const Evaluator& full_eval, Rng& rng,
                                      int workers = 1);

enum class EnumerableSpace { s1 };

// Evaluates every depth-1 tree over the as-written table (3,456 strings, no
// duplicates). Per-candidate seeds are mixed deterministically from
// seed_base. Returns top-3.
SearchReport exhaustive_search(EnumerableSpace space, const OperatorTable& table,
                               const Evaluator& eval, std::uint64_t seed_base = 0,
                               int workers = 1);

// `budget` uniform depth-`depth` trees, reported in groups of 50 for parity
// with the generational logs.
SearchReport random_search(int budget, const OperatorTable& table, int depth,
                           const Evaluator& eval, Rng& rng, int workers = 1);

struct CompareResult {
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::pair<double, double> ci95_a;  // normal approximation, z = 1.95996...
    std::pair<double, double> ci95_b;
    double t_stat = 0.0;   // +-inf when both variances vanish and means differ
    double p_value = 1.0;  // two-sided Welch; 0 in the degenerate unequal case
    double df = 0.0;       // Welch-Satterthwaite; 0 in degenerate cases
    bool degenerate = false;  // zero pooled variance shortcut applied
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

// Welch two-sample t-test on the finite entries of each list. Throws
// InsufficientSamples unless both sides keep at least two.
CompareResult compare_runs(const std::vector<double>& a, const std::vector<double>& b);

// Adapts the MLP trainer as an Evaluator: the candidate graph becomes the
// activation of `base`, the per-call seed becomes the training seed, and a
// failed run reports failed=true with the metric floor as fitness.
Evaluator make_train_evaluator(Dataset data, MlpSpec base, TrainConfig train_cfg,
                               FitnessMetric metric);

}  // namespace actevo
