// actevo: evolutionary search over activation functions, plus the analysis
// commands around it (space counting, dedup, moment propagation, run
// comparison). Exit codes: 0 ok, 1 config error, 2 self-check mismatch,
// 3 runtime failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "actevo/autoinit.hpp"
#include "actevo/config.hpp"
#include "actevo/genetics.hpp"
#include "actevo/nnet.hpp"
#include "actevo/search.hpp"
#include "actevo/space.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace actevo;

namespace {

constexpr const char* kVersion = "actevo 0.1.0";

std::string now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::string resolve_out_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("ACTEVO_OUT"); env && *env) return env;
    return "runs";
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// --- config field access; every failure names the dotted path -------------

std::string joined(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

const json& sub_table(const json& doc, const std::string& key) {
    static const json empty = json::object();
    auto it = doc.find(key);
    if (it == doc.end()) return empty;
    if (!it->is_object()) throw ConfigError(key, "expected a table");
    return *it;
}

std::string get_str(const json& tbl, const std::string& prefix, const std::string& key,
                    const std::string& def) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (!it->is_string()) throw ConfigError(joined(prefix, key), "expected a string");
    return it->get<std::string>();
}

std::string require_str(const json& tbl, const std::string& prefix, const std::string& key) {
    auto it = tbl.find(key);
    if (it == tbl.end()) throw ConfigError(joined(prefix, key), "required field is missing");
    if (!it->is_string()) throw ConfigError(joined(prefix, key), "expected a string");
    return it->get<std::string>();
}

long long get_int(const json& tbl, const std::string& prefix, const std::string& key,
                  long long def, long long lo, long long hi) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (!it->is_number_integer())
        throw ConfigError(joined(prefix, key), "expected an integer");
    const long long v = it->get<long long>();
    if (v < lo || v > hi)
        throw ConfigError(joined(prefix, key),
                          "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

double get_num(const json& tbl, const std::string& prefix, const std::string& key, double def) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (!it->is_number()) throw ConfigError(joined(prefix, key), "expected a number");
    return it->get<double>();
}

bool get_bool(const json& tbl, const std::string& prefix, const std::string& key, bool def) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (!it->is_boolean()) throw ConfigError(joined(prefix, key), "expected true or false");
    return it->get<bool>();
}

std::uint64_t get_seed_field(const json& tbl, const std::string& prefix, const std::string& key,
                             std::uint64_t def) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (it->is_number_unsigned()) return it->get<std::uint64_t>();
    if (it->is_number_integer()) {
        const long long v = it->get<long long>();
        if (v >= 0) return static_cast<std::uint64_t>(v);
    }
    throw ConfigError(joined(prefix, key), "expected a non-negative integer");
}

std::vector<int> get_int_list(const json& tbl, const std::string& prefix, const std::string& key,
                              std::vector<int> def) {
    auto it = tbl.find(key);
    if (it == tbl.end()) return def;
    if (!it->is_array()) throw ConfigError(joined(prefix, key), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *it) {
        if (!e.is_number_integer())
            throw ConfigError(joined(prefix, key), "expected an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

ParamGranularity granularity_from_name(const std::string& name, const std::string& field) {
    if (name == "per_layer") return ParamGranularity::per_layer;
    if (name == "per_channel") return ParamGranularity::per_channel;
    if (name == "per_neuron") return ParamGranularity::per_neuron;
    throw ConfigError(field, "expected per_layer, per_channel, or per_neuron");
}

// --- evaluation logging ----------------------------------------------------

// Deterministic stand-in evaluator for smoke runs: a hash of the formatted
// function and the seed, mapped to [0, 1). No training involved.
EvalOutcome toy_outcome(const AfnGraph& g, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : g.format()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return {static_cast<double>(h >> 11) * 0x1.0p-53, false};
}

// Shared by every evaluation of a run: caches on (function, seed) so resumed
// runs skip completed work, and appends a provisional row per fresh result so
// an interrupted run leaves a usable log. The final candidates.jsonl is
// rewritten from the report, which restores birth order regardless of worker
// completion order.
struct EvalLogger {
    std::mutex mu;
    std::map<std::pair<std::string, std::uint64_t>, EvalOutcome> cache;
    std::ofstream out;
    std::uint64_t appended = 0;
    FitnessMetric metric = FitnessMetric::accuracy;
    Evaluator base;

    EvalOutcome run(const AfnGraph& g, std::uint64_t seed) {
        const std::string fn = g.format();
        const std::pair<std::string, std::uint64_t> key{fn, seed};
        {
            std::lock_guard<std::mutex> lock(mu);
            auto it = cache.find(key);
            if (it != cache.end()) return it->second;
        }
        EvalOutcome o;
        try {
            o = base(g, seed);
        } catch (const EvaluatorFailure&) {
            o = {0.0, true};
        }
        if (!std::isfinite(o.fitness)) o.failed = true;
        std::lock_guard<std::mutex> lock(mu);
        auto [it, inserted] = cache.emplace(key, o);
        if (inserted && out.is_open()) {
            json row;
            row["function"] = fn;
            row["fitness"] = o.failed ? failure_floor(metric) : o.fitness;
            row["seed"] = seed;
            row["birth_index"] = appended++;
            row["status"] = o.failed ? "failed" : "ok";
            out << row.dump() << '\n';
            out.flush();
        }
        return it->second;
    }
};

std::size_t load_cache(const fs::path& p,
                       std::map<std::pair<std::string, std::uint64_t>, EvalOutcome>& cache) {
    std::ifstream in(p);
    if (!in) return 0;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json row = json::parse(line, nullptr, false);
        if (row.is_discarded()) break;  // truncated tail; nothing after it is trusted
        if (!row.contains("function") || !row.contains("seed") || !row.contains("fitness") ||
            row["fitness"].is_null())
            continue;
        const bool failed = row.value("status", "ok") == "failed";
        cache.emplace(std::pair{row["function"].get<std::string>(), row["seed"].get<std::uint64_t>()},
                      EvalOutcome{row["fitness"].get<double>(), failed});
        ++rows;
    }
    return rows;
}

// --- evolve ----------------------------------------------------------------

struct EvolveSetup {
    std::string name;
    std::string mode;
    std::string table_name;
    std::uint64_t seed = 0;
    int workers = 1;
    FitnessMetric metric = FitnessMetric::accuracy;
    int rerank_top = 3;
    CafeConfig cafe;
    RegEvoConfig reg;
    int random_budget = 200;
    int random_depth = 2;
    std::string dataset = "toy";
    Evaluator search_eval;
    Evaluator rerank_eval;
    json snapshot;  // resolved config, workers excluded; identity for resume
};

EvolveSetup parse_evolve_config(const std::string& path, std::optional<std::uint64_t> seed_override,
                                std::optional<int> workers_override) {
    const json doc = json::parse(load_config_json(path));
    if (!doc.is_object()) throw ConfigError("config", "top level must be a table");

    EvolveSetup s;
    s.mode = require_str(doc, "", "mode");
    if (s.mode != "cafe" && s.mode != "regularized" && s.mode != "exhaustive" && s.mode != "random")
        throw ConfigError("mode", "must be one of cafe, regularized, exhaustive, random");
    s.name = get_str(doc, "", "name", fs::path(path).stem().string());
    if (s.name.empty() || s.name.find('/') != std::string::npos)
        throw ConfigError("name", "must be a non-empty path component");
    s.table_name = get_str(doc, "", "table", s.mode == "regularized" ? "pangaea" : "cafe");
    if (s.table_name != "cafe" && s.table_name != "pangaea")
        throw ConfigError("table", "must be cafe or pangaea");
    if (s.mode != "regularized" && s.table_name != "cafe")
        throw ConfigError("table", "mode '" + s.mode + "' requires the cafe operator table");
    s.seed = seed_override ? *seed_override : get_seed_field(doc, "", "seed", 0);
    const int default_workers =
        static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    s.workers = workers_override ? *workers_override
                                 : static_cast<int>(get_int(doc, "", "workers", default_workers, 1, 256));
    try {
        s.metric = fitness_metric_from(get_str(doc, "", "metric", "accuracy"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError("metric", e.what());
    }
    if ((s.mode == "exhaustive" || s.mode == "random") && s.metric != FitnessMetric::accuracy)
        throw ConfigError("metric", "mode '" + s.mode + "' reports accuracy only");

    const json& search = sub_table(doc, "search");
    json search_snap = json::object();
    if (s.mode == "cafe") {
        s.cafe.population = static_cast<int>(get_int(search, "search", "population", 50, 1, 100000));
        s.cafe.random_injections =
            static_cast<int>(get_int(search, "search", "random_injections", 10, 0, 100000));
        s.cafe.elites = static_cast<int>(get_int(search, "search", "elites", 5, 0, 100000));
        s.cafe.generations = static_cast<int>(get_int(search, "search", "generations", 10, 1, 100000));
        s.cafe.depth = static_cast<int>(get_int(search, "search", "depth", 2, 1, 6));
        if (s.cafe.elites + s.cafe.random_injections > s.cafe.population)
            throw ConfigError("search.elites", "elites + random_injections exceed population");
        s.rerank_top = static_cast<int>(get_int(search, "search", "rerank_top", 3, 0, 1000));
        search_snap = {{"population", s.cafe.population},
                       {"random_injections", s.cafe.random_injections},
                       {"elites", s.cafe.elites},
                       {"generations", s.cafe.generations},
                       {"depth", s.cafe.depth},
                       {"rerank_top", s.rerank_top}};
    } else if (s.mode == "regularized") {
        s.reg.population = static_cast<int>(get_int(search, "search", "population", 64, 1, 100000));
        s.reg.sample = static_cast<int>(get_int(search, "search", "sample", 16, 1, 100000));
        if (s.reg.sample > s.reg.population)
            throw ConfigError("search.sample", "must not exceed population");
        s.reg.evaluations =
            static_cast<int>(get_int(search, "search", "evaluations", 1000, 1, 100000000));
        if (s.reg.evaluations < s.reg.population)
            throw ConfigError("search.evaluations", "must cover the initial population");
        s.reg.threshold = get_num(search, "search", "threshold", 0.20);
        if (!(s.reg.threshold >= 0.0 && s.reg.threshold <= 1.0))
            throw ConfigError("search.threshold", "must lie in [0, 1]");
        s.reg.params = static_cast<int>(get_int(search, "search", "params", 3, 0, 3));
        s.reg.async_sampling = get_bool(search, "search", "async_sampling", false);
        s.rerank_top = static_cast<int>(get_int(search, "search", "rerank_top", 10, 0, 1000));
        search_snap = {{"population", s.reg.population},
                       {"sample", s.reg.sample},
                       {"evaluations", s.reg.evaluations},
                       {"threshold", s.reg.threshold},
                       {"params", s.reg.params},
                       {"async_sampling", s.reg.async_sampling},
                       {"rerank_top", s.rerank_top}};
    } else if (s.mode == "random") {
        s.random_budget = static_cast<int>(get_int(search, "search", "budget", 200, 1, 100000000));
        s.random_depth = static_cast<int>(get_int(search, "search", "depth", 2, 1, 6));
        s.rerank_top = static_cast<int>(get_int(search, "search", "rerank_top", 3, 0, 1000));
        search_snap = {{"budget", s.random_budget},
                       {"depth", s.random_depth},
                       {"rerank_top", s.rerank_top}};
    } else {  // exhaustive
        s.rerank_top = static_cast<int>(get_int(search, "search", "rerank_top", 3, 0, 1000));
        search_snap = {{"rerank_top", s.rerank_top}};
    }

    const json& task = sub_table(doc, "task");
    s.dataset = get_str(task, "task", "dataset", "toy");
    const ParamGranularity gran =
        granularity_from_name(get_str(task, "task", "granularity", "per_layer"), "task.granularity");
    if (s.mode == "regularized") s.reg.granularity = gran;

    json task_snap = json::object();
    task_snap["dataset"] = s.dataset;
    task_snap["granularity"] = to_string(gran);
    if (s.dataset == "toy") {
        s.search_eval = toy_outcome;
        s.rerank_eval = toy_outcome;
    } else {
        DataKind kind;
        try {
            kind = data_kind_from(s.dataset);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("task.dataset", e.what());
        }
        const int n = static_cast<int>(get_int(task, "task", "n", 200, 1, 10000000));
        const double noise = get_num(task, "task", "noise", 0.1);
        if (noise < 0.0) throw ConfigError("task.noise", "must be non-negative");
        const std::uint64_t data_seed = get_seed_field(task, "task", "data_seed", 1);
        const std::string csv_path = get_str(task, "task", "csv_path", "");
        if (kind == DataKind::csv && csv_path.empty())
            throw ConfigError("task.csv_path", "required for dataset \"csv\"");
        const std::vector<int> widths = get_int_list(task, "task", "widths", {2, 8, 1});
        if (widths.size() < 2 ||
            std::any_of(widths.begin(), widths.end(), [](int w) { return w < 1; }))
            throw ConfigError("task.widths", "need at least two positive layer widths");
        InitScheme init;
        try {
            init = init_scheme_from(get_str(task, "task", "init", "autoinit"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("task.init", e.what());
        }
        TrainConfig tc;
        tc.epochs = static_cast<int>(get_int(task, "task", "epochs", 10, 1, 1000000));
        tc.batch = static_cast<int>(get_int(task, "task", "batch", 32, 1, 1000000));
        tc.lr = get_num(task, "task", "lr", 0.05);
        if (!(tc.lr > 0.0)) throw ConfigError("task.lr", "must be positive");
        tc.momentum = get_num(task, "task", "momentum", 0.9);
        if (!(tc.momentum >= 0.0 && tc.momentum < 1.0))
            throw ConfigError("task.momentum", "must lie in [0, 1)");
        tc.nesterov = get_bool(task, "task", "nesterov", false);
        tc.weight_decay = get_num(task, "task", "weight_decay", 0.0);
        if (tc.weight_decay < 0.0) throw ConfigError("task.weight_decay", "must be non-negative");
        const std::vector<int> decay_epochs = get_int_list(task, "task", "decay_epochs", {});
        for (std::size_t i = 0; i < decay_epochs.size(); ++i)
            if (decay_epochs[i] < 0 || (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]))
                throw ConfigError("task.decay_epochs", "must be strictly increasing and non-negative");
        tc.decay_epochs = decay_epochs;
        tc.decay_factor = get_num(task, "task", "decay_factor", 0.2);
        if (!(tc.decay_factor > 0.0 && tc.decay_factor <= 1.0))
            throw ConfigError("task.decay_factor", "must lie in (0, 1]");
        const int rerank_epochs =
            static_cast<int>(get_int(task, "task", "rerank_epochs", tc.epochs, 1, 1000000));

        Dataset data;
        try {
            data = make_dataset(kind, n, noise, data_seed, csv_path);
        } catch (const std::exception& e) {
            throw ConfigError("task.dataset", e.what());
        }
        if (widths.front() != static_cast<int>(data.x.cols()))
            throw ConfigError("task.widths",
                              "first width must equal the dataset feature count (" +
                                  std::to_string(data.x.cols()) + ")");
        if (!(widths.back() == data.classes || (data.classes == 2 && widths.back() == 1)))
            throw ConfigError("task.widths",
                              "last width must be " + std::to_string(data.classes) +
                                  (data.classes == 2 ? " or 1" : ""));

        MlpSpec base;
        base.widths = widths;
        base.granularity = gran;
        base.init = init;
        s.search_eval = make_train_evaluator(data, base, tc, s.metric);
        TrainConfig rerank_tc = tc;
        rerank_tc.epochs = rerank_epochs;
        s.rerank_eval = make_train_evaluator(data, base, rerank_tc, s.metric);

        task_snap["n"] = n;
        task_snap["noise"] = noise;
        task_snap["data_seed"] = data_seed;
        if (kind == DataKind::csv) task_snap["csv_path"] = csv_path;
        task_snap["widths"] = widths;
        task_snap["init"] = to_string(init);
        task_snap["epochs"] = tc.epochs;
        task_snap["batch"] = tc.batch;
        task_snap["lr"] = tc.lr;
        task_snap["momentum"] = tc.momentum;
        task_snap["nesterov"] = tc.nesterov;
        task_snap["weight_decay"] = tc.weight_decay;
        task_snap["decay_epochs"] = tc.decay_epochs;
        task_snap["decay_factor"] = tc.decay_factor;
        task_snap["rerank_epochs"] = rerank_epochs;
    }

    json snap = json::object();
    snap["name"] = s.name;
    snap["mode"] = s.mode;
    snap["table"] = s.table_name;
    snap["seed"] = s.seed;
    snap["metric"] = to_string(s.metric);
    snap["search"] = search_snap;
    snap["task"] = task_snap;
    s.snapshot = snap;
    return s;
}

int cmd_evolve(const std::string& config_path, std::optional<std::uint64_t> seed_override,
               std::optional<int> workers_override, const std::string& out_flag) {
    EvolveSetup s = parse_evolve_config(config_path, seed_override, workers_override);
    const fs::path run_dir = fs::path(resolve_out_root(out_flag)) / s.name;
    fs::create_directories(run_dir / "reports");
    const std::string started = now_iso8601();

    const fs::path manifest_path = run_dir / "manifest.json";
    json manifest = json::array();
    if (fs::exists(manifest_path)) {
        manifest = json::parse(slurp(manifest_path));
        if (!manifest.is_array()) throw std::runtime_error("corrupt manifest: " + manifest_path.string());
        if (!manifest.empty() && manifest.back().value("config", json()) != s.snapshot)
            throw ConfigError("config", "run directory \"" + run_dir.string() +
                                            "\" holds a run with a different configuration");
    }

    const fs::path cand_path = run_dir / "candidates.jsonl";
    EvalLogger logger;
    logger.metric = s.metric;
    const std::size_t cached = load_cache(cand_path, logger.cache);
    logger.appended = cached;
    logger.out.open(cand_path, std::ios::app);
    const Evaluator eval = [&logger](const AfnGraph& g, std::uint64_t seed) {
        return logger.run(g, seed);
    };

    const OperatorTable& table =
        s.table_name == "cafe" ? OperatorTable::cafe() : OperatorTable::pangaea();
    Rng rng(s.seed);
    logger.base = s.search_eval;
    SearchReport rep;
    if (s.mode == "cafe") {
        rep = cafe_evolve(s.cafe, table, eval, rng, s.metric, s.workers);
    } else if (s.mode == "regularized") {
        rep = regularized_evolve(s.reg, table, eval, rng, s.metric);
    } else if (s.mode == "exhaustive") {
        rep = exhaustive_search(EnumerableSpace::s1, table, eval, s.seed, s.workers);
    } else {
        rep = random_search(s.random_budget, table, s.random_depth, eval, rng, s.workers);
    }
    rep.seed = s.seed;

    std::vector<RerankedCandidate> ranked;
    const std::size_t k = std::min<std::size_t>(s.rerank_top, rep.top.size());
    if (k > 0) {
        std::vector<Candidate> picked;
        picked.reserve(k);
        for (std::size_t i = 0; i < k; ++i) picked.push_back(rep.history[rep.top[i]]);
        logger.base = s.rerank_eval;
        ranked = rerank(picked, eval, rng, s.workers);
    }

    // Authoritative log: search rows in birth order, then the rerank runs
    // continuing the same index sequence. Byte-identical across reruns.
    logger.out.close();
    {
        std::ofstream fresh(cand_path, std::ios::trunc);
        if (!fresh) throw std::runtime_error("cannot write " + cand_path.string());
        rep.write_jsonl(fresh);
        std::uint64_t birth = rep.history.size();
        for (const auto& r : ranked) {
            const auto& log = r.candidate.eval_log;
            for (int run = 0; run < 2; ++run) {
                const auto& [sd, val] = log[log.size() - 2 + run];
                const bool failed = run == 0 ? r.runs_failed.first : r.runs_failed.second;
                json row;
                row["function"] = r.candidate.graph.format();
                row["fitness"] = val;
                row["seed"] = sd;
                row["birth_index"] = birth++;
                row["status"] = failed ? "failed" : "ok";
                fresh << row.dump() << '\n';
            }
        }
    }

    json summary = json::object();
    summary["name"] = s.name;
    const json rep_doc = json::parse(rep.summary_json());
    for (const auto& [key, value] : rep_doc.items()) summary[key] = value;
    summary["accounting"] = {{"search_evaluations", rep.evaluations},
                             {"rerank_evaluations", 2 * ranked.size()},
                             {"total", rep.evaluations + 2 * ranked.size()}};
    json rerank_doc = json::array();
    for (const auto& r : ranked) {
        json e;
        e["function"] = r.candidate.graph.format();
        e["adjusted"] = r.adjusted;
        e["both_failed"] = r.both_failed;
        e["finalist"] = r.finalist;
        e["birth_index"] = r.candidate.birth_index;
        json runs = json::array();
        const auto& log = r.candidate.eval_log;
        for (int run = 0; run < 2; ++run) {
            const auto& [sd, val] = log[log.size() - 2 + run];
            const bool failed = run == 0 ? r.runs_failed.first : r.runs_failed.second;
            runs.push_back({{"seed", sd}, {"fitness", val}, {"status", failed ? "failed" : "ok"}});
        }
        e["runs"] = runs;
        rerank_doc.push_back(e);
    }
    summary["rerank"] = rerank_doc;
    spill(run_dir / "summary.json", summary.dump(2) + "\n");

    json top3 = json::array();
    if (!ranked.empty()) {
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i)
            top3.push_back({{"function", ranked[i].candidate.graph.format()},
                            {"fitness", ranked[i].adjusted},
                            {"birth_index", ranked[i].candidate.birth_index}});
    } else {
        for (std::size_t i = 0; i < rep.top.size() && i < 3; ++i) {
            const Candidate& c = rep.history[rep.top[i]];
            top3.push_back({{"function", c.graph.format()},
                            {"fitness", c.fitness ? json(*c.fitness) : json()},
                            {"birth_index", c.birth_index}});
        }
    }
    spill(run_dir / "reports" / "top3.json", top3.dump(2) + "\n");

    json record;
    record["command"] = "evolve";
    record["version"] = kVersion;
    record["seed"] = s.seed;
    record["workers"] = s.workers;
    record["started"] = started;
    record["finished"] = now_iso8601();
    record["config"] = s.snapshot;
    record["artifacts"] = {{"candidates", "candidates.jsonl"},
                           {"summary", "summary.json"},
                           {"top3", "reports/top3.json"}};
    manifest.push_back(record);
    spill(manifest_path, manifest.dump(2) + "\n");

    std::cout << "run " << run_dir.string() << "\n";
    std::cout << "mode " << s.mode << " table " << s.table_name << " seed " << s.seed << "\n";
    std::cout << "evaluations " << rep.evaluations + 2 * ranked.size() << " (search "
              << rep.evaluations << ", rerank " << 2 * ranked.size() << ", cached " << cached
              << ")\n";
    if (!ranked.empty()) {
        std::cout << "best " << ranked.front().candidate.graph.format() << " fitness "
                  << fmt_g(ranked.front().adjusted) << "\n";
    } else if (const Candidate* b = rep.best()) {
        std::cout << "best " << b->graph.format() << " fitness " << fmt_g(b->fitness.value_or(0.0))
                  << "\n";
    }
    return 0;
}

// --- count-space -----------------------------------------------------------

int cmd_count_space(bool cafe_only, int max_nodes) {
    bool ok = true;
    if (cafe_only) {
        const BigInt s1 = cafe_space_size(1);
        const BigInt s2 = cafe_space_size(2);
        std::cout << "S1 " << s1 << "\n";
        std::cout << "S2 " << s2 << "\n";
        ok = s1 == 3456 && s2 == 41278242816LL;
    } else {
        static const long long expected[7] = {108LL,          5832LL,        427923LL,
                                              31177872LL,     2210558364LL,  152059087566LL,
                                              10015741690785LL};
        BigInt total = 0;
        for (int j = 1; j <= max_nodes; ++j) {
            const BigInt g = count_functions(j);
            total += g;
            std::cout << j << " " << g << "\n";
            if (j <= 7 && g != expected[j - 1]) ok = false;
        }
        std::cout << "total " << total << "\n";
        if (total != total_space_size(max_nodes)) ok = false;
        if (max_nodes == 7 && total != 10170042948450LL) ok = false;
    }
    if (!ok) {
        std::cerr << "self-check failed: computed sizes diverge from the pinned constants\n";
        return 2;
    }
    return 0;
}

// --- dedup -----------------------------------------------------------------

int cmd_dedup(const std::string& out_flag) {
    const DedupResult res = enumerate_and_dedup(OperatorTable::pangaea());
    constexpr std::size_t kTarget = 2913;
    const double deviation =
        100.0 * (static_cast<double>(res.unique) - static_cast<double>(kTarget)) / kTarget;
    std::cout << "total " << res.total << "\n";
    std::cout << "unique " << res.unique << "\n";
    std::cout << "target " << kTarget << "\n";
    char dev[32];
    std::snprintf(dev, sizeof dev, "%+.2f%%", deviation);
    std::cout << "deviation " << dev << "\n";

    const fs::path out_dir = resolve_out_root(out_flag);
    fs::create_directories(out_dir);
    const fs::path rep_path = out_dir / "representatives.txt";
    {
        std::ofstream out(rep_path);
        if (!out) throw std::runtime_error("cannot write " + rep_path.string());
        for (const std::string& r : res.representatives) out << r << '\n';
    }
    std::cout << "representatives " << rep_path.string() << "\n";

    // +-2% around the target is the accepted band for the collapsed count.
    const bool ok = res.total == 5103 && res.unique >= 2855 && res.unique <= 2971;
    if (!ok) {
        std::cerr << "self-check failed: counts fall outside the accepted band\n";
        return 2;
    }
    return 0;
}

// --- analyze-init ----------------------------------------------------------

int cmd_analyze_init(const std::string& net_path, const std::string& out_flag,
                     const std::string& family_name) {
    const InitFamily family =
        family_name == "uniform" ? InitFamily::uniform : InitFamily::normal;
    NetworkSpec net;
    try {
        net = NetworkSpec::from_json(slurp(net_path));
    } catch (const std::runtime_error& e) {
        throw;  // unreadable file stays a runtime failure
    } catch (const std::exception& e) {
        throw ConfigError("network", e.what());
    }
    const InitPlan plan = propagate(net, family);

    std::printf("%-20s %-16s %12s %12s  %s\n", "layer", "kind", "mu", "nu", "init");
    for (const auto& entry : plan.entries) {
        std::string init_col = "-";
        if (entry.fallback)
            init_col = "fallback identity";
        else if (entry.scale)
            init_col = entry.family + " scale=" + fmt_g(*entry.scale);
        std::printf("%-20s %-16s %12s %12s  %s\n", entry.name.c_str(), to_string(entry.kind),
                    fmt_g(entry.moments.mu).c_str(), fmt_g(entry.moments.nu).c_str(),
                    init_col.c_str());
    }

    const fs::path out_dir = resolve_out_root(out_flag);
    fs::create_directories(out_dir);
    const fs::path plan_path = out_dir / "init_plan.json";
    spill(plan_path, plan.to_json());
    std::cout << "plan " << plan_path.string() << "\n";
    return 0;
}

// --- compare ---------------------------------------------------------------

// Final cohort of a run: the last generation's evaluations when the mode
// groups them, otherwise the surviving population window.
std::vector<double> final_cohort(const fs::path& dir) {
    const json summary = json::parse(slurp(dir / "summary.json"));
    std::map<std::uint64_t, std::pair<double, std::string>> rows;
    {
        std::ifstream in(dir / "candidates.jsonl");
        if (!in) throw std::runtime_error("cannot read " + (dir / "candidates.jsonl").string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json row = json::parse(line, nullptr, false);
            if (row.is_discarded()) break;
            if (!row.contains("birth_index") || !row.contains("fitness") ||
                row["fitness"].is_null())
                continue;
            rows[row["birth_index"].get<std::uint64_t>()] = {row["fitness"].get<double>(),
                                                             row.value("status", "ok")};
        }
    }
    std::vector<double> vals;
    const auto gens = summary.find("generations");
    const auto pop = summary.find("population");
    if (gens != summary.end() && gens->is_array() && !gens->empty()) {
        const json& last = gens->back();
        const std::uint64_t first = last["first_birth"].get<std::uint64_t>();
        const std::uint64_t final = last["last_birth"].get<std::uint64_t>();
        for (std::uint64_t b = first; b <= final; ++b) {
            const auto it = rows.find(b);
            if (it != rows.end() && it->second.second != "rejected")
                vals.push_back(it->second.first);
        }
    } else if (pop != summary.end() && pop->is_array()) {
        for (const auto& b : *pop) {
            const auto it = rows.find(b.get<std::uint64_t>());
            if (it != rows.end()) vals.push_back(it->second.first);
        }
    }
    return vals;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b) {
    const std::vector<double> a = final_cohort(dir_a);
    const std::vector<double> b = final_cohort(dir_b);
    const CompareResult r = compare_runs(a, b);

    std::cout << "| run | n | mean | 95% CI |\n";
    std::cout << "|---|---|---|---|\n";
    std::cout << "| " << dir_a << " | " << r.n_a << " | " << fmt_g(r.mean_a) << " | ["
              << fmt_g(r.ci95_a.first) << ", " << fmt_g(r.ci95_a.second) << "] |\n";
    std::cout << "| " << dir_b << " | " << r.n_b << " | " << fmt_g(r.mean_b) << " | ["
              << fmt_g(r.ci95_b.first) << ", " << fmt_g(r.ci95_b.second) << "] |\n";
    std::cout << "\nWelch t = " << fmt_g(r.t_stat) << ", df = " << fmt_g(r.df)
              << ", p = " << fmt_g(r.p_value);
    if (r.degenerate) std::cout << " (degenerate: zero variance on both sides)";
    std::cout << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evolutionary search over activation functions"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_flag = 0;
    int workers_flag = 0;
    std::string out_flag;
    auto* ev = app.add_subcommand("evolve", "run a configured search into a run directory");
    ev->add_option("--config", config_path, "TOML or JSON config file")->required();
    auto* seed_opt = ev->add_option("--seed", seed_flag, "override the config seed");
    auto* workers_opt =
        ev->add_option("--workers", workers_flag, "override the worker count")->check(CLI::Range(1, 256));
    ev->add_option("--out", out_flag, "output root (default: ACTEVO_OUT or ./runs)");

    bool cafe_only = false;
    int max_nodes = 7;
    auto* cs = app.add_subcommand("count-space", "print search-space sizes and self-verify");
    cs->add_flag("--cafe", cafe_only, "print the balanced-tree space sizes instead");
    cs->add_option("--max-nodes", max_nodes, "largest core-unit node count")->check(CLI::Range(1, 9));

    std::string dd_out;
    auto* dd = app.add_subcommand("dedup", "enumerate the three-node space and collapse duplicates");
    dd->add_option("--out", dd_out, "output root for the representatives list");

    std::string net_path, ai_out, family = "normal";
    auto* ai = app.add_subcommand("analyze-init",
                                  "propagate moments through a network spec and plan the init");
    ai->add_option("network", net_path, "network spec (json)")->required();
    ai->add_option("--out", ai_out, "output root for init_plan.json");
    ai->add_option("--family", family, "weight distribution family")
        ->check(CLI::IsMember({"normal", "uniform"}));

    std::string dir_a, dir_b;
    auto* cp = app.add_subcommand("compare", "Welch comparison of two run directories");
    cp->add_option("run_a", dir_a, "first run directory")->required();
    cp->add_option("run_b", dir_b, "second run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*ev)
            return cmd_evolve(config_path,
                              seed_opt->count() ? std::optional<std::uint64_t>(seed_flag)
                                                : std::nullopt,
                              workers_opt->count() ? std::optional<int>(workers_flag) : std::nullopt,
                              out_flag);
        if (*cs) return cmd_count_space(cafe_only, max_nodes);
        if (*dd) return cmd_dedup(dd_out);
        if (*ai) return cmd_analyze_init(net_path, ai_out, family);
        if (*cp) return cmd_compare(dir_a, dir_b);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
