#include "actevo/autoinit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Dense>

#include "json.hpp"

namespace actevo {
namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;

double phi(double t) { return std::exp(-0.5 * t * t) / kSqrt2Pi; }

// QUADPACK 7-15 Gauss-Kronrod pair on [-1, 1]
constexpr double kKX[8] = {0.991455371120813, 0.949107912342759, 0.864864423359769,
                           0.741531185599394, 0.586087235467691, 0.405845151377397,
                           0.207784955007898, 0.0};
constexpr double kKW[8] = {0.022935322010529, 0.063092092629979, 0.104790010322250,
                           0.140653259715525, 0.169004726639267, 0.190350578064785,
                           0.204432940075298, 0.209482141084728};
constexpr double kGW[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                           0.417959183673469};

struct Panel {
    double a, b;
    double integral;
    double err;
};

template <class F>
Panel eval_panel(const F& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double k15 = 0.0, g7 = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double v1 = f(mid - half * kKX[i]);
        const double v2 = f(mid + half * kKX[i]);
        k15 += kKW[i] * (v1 + v2);
        if (i % 2 == 1) g7 += kGW[(i - 1) / 2] * (v1 + v2);
    }
    const double vm = f(mid);
    k15 += kKW[7] * vm;
    g7 += kGW[3] * vm;
    k15 *= half;
    g7 *= half;
    return {a, b, k15, std::fabs(k15 - g7)};
}

constexpr double kAbsTol = 1e-8;
constexpr double kRelTol = 1e-6;
constexpr std::size_t kMaxPanels = 4000;

// probabilists' Hermite nodes/weights for the N(0,1) weight, Golub-Welsch
void hermite_rule(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        const double off = std::sqrt(static_cast<double>(i + 1));
        jacobi(i, i + 1) = off;
        jacobi(i + 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        weights[static_cast<std::size_t>(i)] = v0 * v0;
    }
}

template <class F>
double hermite_expect(const F& g, int n) {
    static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::vector<double> x, w;
        hermite_rule(n, x, w);
        it = cache.emplace(n, std::make_pair(std::move(x), std::move(w))).first;
    }
    const auto& [x, w] = it->second;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * g(x[i]);
    return s;
}

}  // namespace

ScalarFn as_scalar_fn(const AfnGraph& g) {
    auto shared = std::make_shared<AfnGraph>(g);
    return [shared](double x) { return shared->eval_scalar(x); };
}

AfnGraph named_activation(std::string_view name) {
    std::string n(name);
    if (n == "identity") n = "id";
    std::string text = n + "(x)";
    return AfnGraph::parse(text, OperatorTable::pangaea());
}

double gauss_expect(const ScalarFn& f, double mu, double sigma) {
    // integrate g(t) = f(mu + sigma t) phi(t); widen the window until the
    // integrand itself has decayed
    auto g = [&](double t) { return f(mu + sigma * t) * phi(t); };
    double half_width = 12.0;
    while (half_width < 37.0) {
        const double lo = std::fabs(g(-half_width));
        const double hi = std::fabs(g(half_width));
        if ((std::isfinite(lo) && std::isfinite(hi) && lo < 1e-14 && hi < 1e-14)) break;
        half_width += 8.0;
    }

    std::deque<Panel> panels;
    const int initial = 8;
    for (int i = 0; i < initial; ++i) {
        const double a = -half_width + 2.0 * half_width * i / initial;
        const double b = -half_width + 2.0 * half_width * (i + 1) / initial;
        panels.push_back(eval_panel(g, a, b));
    }
    while (panels.size() < kMaxPanels) {
        double total = 0.0, err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < panels.size(); ++i) {
            total += panels[i].integral;
            err += panels[i].err;
            if (panels[i].err > panels[worst].err) worst = i;
        }
        if (std::isfinite(total) && err <= std::max(kAbsTol, kRelTol * std::fabs(total)))
            return total;
        if (!std::isfinite(total)) break;
        const Panel w = panels[worst];
        if (w.b - w.a < 1e-13) break;
        panels[worst] = eval_panel(g, w.a, 0.5 * (w.a + w.b));
        panels.push_back(eval_panel(g, 0.5 * (w.a + w.b), w.b));
    }
    double total = 0.0, err = 0.0;
    for (const auto& p : panels) {
        total += p.integral;
        err += p.err;
    }
    // adaptivity failed; try fixed high-order rules on the same expectation
    auto raw = [&](double t) { return f(mu + sigma * t); };
    const double gh_hi = hermite_expect(raw, 128);
    const double gh_lo = hermite_expect(raw, 96);
    if (std::isfinite(gh_hi) && std::isfinite(gh_lo) &&
        std::fabs(gh_hi - gh_lo) <= std::max(10 * kAbsTol, 10 * kRelTol * std::fabs(gh_hi)))
        return gh_hi;
    throw QuadratureNonConvergence("Gaussian expectation did not converge",
                                   std::isfinite(total) ? total : gh_hi,
                                   std::isfinite(err) ? err : std::fabs(gh_hi - gh_lo));
}

MomentPair activation_moments(const ScalarFn& f, MomentPair in) {
    if (!(in.nu > 0.0)) throw std::invalid_argument("activation moments need nu > 0");
    const double sigma = std::sqrt(in.nu);
    const double m1 = gauss_expect(f, in.mu, sigma);
    const double m2 = gauss_expect([&](double x) { const double v = f(x); return v * v; },
                                   in.mu, sigma);
    double nu = m2 - m1 * m1;
    if (nu < 0.0) {
        if (nu < -1e-10)
            throw QuadratureNonConvergence("variance estimate negative beyond round-off", nu,
                                           1e-10);
        nu = 0.0;
    }
    return {m1, nu};
}

MomentPair activation_moments(const AfnGraph& f, MomentPair in) {
    return activation_moments(as_scalar_fn(f), in);
}

ScalarFn center(const ScalarFn& f) {
    const double mean = gauss_expect(f, 0.0, 1.0);
    return [f, mean](double x) { return f(x) - mean; };
}

ScalarFn center(const AfnGraph& f) { return center(as_scalar_fn(f)); }

double dense_init_scale(int fan_in, MomentPair in) {
    if (fan_in < 1) throw std::invalid_argument("fan_in must be at least 1");
    const double second = in.nu + in.mu * in.mu;
    if (!(second > 0.0)) throw std::invalid_argument("dense input needs nu + mu^2 > 0");
    return 1.0 / std::sqrt(static_cast<double>(fan_in) * second);
}

double glorot_uniform_halfwidth(int fan_in, int fan_out) {
    return std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
}

double he_normal_std(int fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

const char* to_string(LayerSpec::Kind k) {
    using K = LayerSpec::Kind;
    switch (k) {
        case K::input: return "input";
        case K::dense: return "dense";
        case K::activation: return "activation";
        case K::dropout: return "dropout";
        case K::pooling: return "pooling";
        case K::normalization: return "normalization";
        case K::add: return "add";
        case K::average: return "average";
        case K::subtract: return "subtract";
        case K::multiply: return "multiply";
        case K::concat: return "concat";
        case K::padding: return "padding";
        case K::shape_identity: return "shape_identity";
        case K::matmul: return "matmul";
        case K::reduce: return "reduce";
        case K::unknown: return "unknown";
    }
    return "?";
}

LayerSpec::Kind layer_kind_from(std::string_view name) {
    using K = LayerSpec::Kind;
    static const std::map<std::string_view, K> table = {
        {"input", K::input},         {"dense", K::dense},
        {"activation", K::activation}, {"dropout", K::dropout},
        {"pooling", K::pooling},     {"normalization", K::normalization},
        {"add", K::add},             {"average", K::average},
        {"subtract", K::subtract},   {"multiply", K::multiply},
        {"concat", K::concat},       {"padding", K::padding},
        {"shape_identity", K::shape_identity}, {"matmul", K::matmul},
        {"reduce", K::reduce},
    };
    auto it = table.find(name);
    return it == table.end() ? K::unknown : it->second;
}

namespace {

void require_arity(const LayerSpec& l, const std::vector<MomentPair>& ins, std::size_t want) {
    if (ins.size() != want)
        throw std::invalid_argument(std::string(to_string(l.kind)) + " layer expects " +
                                    std::to_string(want) + " inputs, got " +
                                    std::to_string(ins.size()));
}

MomentPair max_pool_mc(const MomentPair& in, int k, std::uint64_t seed) {
    Rng rng(seed);
    const double sd = std::sqrt(std::max(in.nu, 0.0));
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t s = 0; s < kPoolSamples; ++s) {
        double m = -1e308;
        for (int i = 0; i < k; ++i) m = std::max(m, in.mu + sd * rng.normal());
        sum += m;
        sumsq += m * m;
    }
    const double n = static_cast<double>(kPoolSamples);
    const double mu = sum / n;
    return {mu, sumsq / n - mu * mu};
}

}  // namespace

MomentPair layer_moments(const LayerSpec& layer, const std::vector<MomentPair>& ins,
                         std::uint64_t pool_seed, bool* fallback) {
    using K = LayerSpec::Kind;
    if (fallback) *fallback = false;
    switch (layer.kind) {
        case K::input:
            return layer.data;
        case K::dense:
            require_arity(layer, ins, 1);
            (void)dense_init_scale(layer.fan_in, ins[0]);  // validates the input
            return {0.0, 1.0};
        case K::activation: {
            require_arity(layer, ins, 1);
            if (layer.activation) return activation_moments(*layer.activation, ins[0]);
            return activation_moments(named_activation(layer.named_fn), ins[0]);
        }
        case K::dropout: {
            require_arity(layer, ins, 1);
            const double keep = 1.0 - layer.rate;
            if (!(keep > 0.0)) throw std::invalid_argument("dropout rate must be below 1");
            if (layer.spatial) return {ins[0].mu * keep, ins[0].nu * keep};
            return {ins[0].mu, ins[0].nu / keep};
        }
        case K::pooling: {
            require_arity(layer, ins, 1);
            if (layer.pool_k < 1) throw std::invalid_argument("pool window must be at least 1");
            if (layer.max_pool) return max_pool_mc(ins[0], layer.pool_k, pool_seed);
            return {ins[0].mu, ins[0].nu / layer.pool_k};
        }
        case K::normalization:
            require_arity(layer, ins, 1);
            return {0.0, 1.0};
        case K::add: {
            if (ins.empty()) throw std::invalid_argument("add needs inputs");
            MomentPair out{0.0, 0.0};
            for (const auto& m : ins) {
                out.mu += m.mu;
                out.nu += m.nu;
            }
            return out;
        }
        case K::average: {
            if (ins.empty()) throw std::invalid_argument("average needs inputs");
            MomentPair out{0.0, 0.0};
            for (const auto& m : ins) {
                out.mu += m.mu;
                out.nu += m.nu;
            }
            const double n = static_cast<double>(ins.size());
            return {out.mu / n, out.nu / (n * n)};
        }
        case K::subtract:
            require_arity(layer, ins, 2);
            return {ins[0].mu - ins[1].mu, ins[0].nu + ins[1].nu};
        case K::multiply: {
            if (ins.empty()) throw std::invalid_argument("multiply needs inputs");
            double mu_prod = 1.0, second_prod = 1.0, musq_prod = 1.0;
            for (const auto& m : ins) {
                mu_prod *= m.mu;
                second_prod *= m.nu + m.mu * m.mu;
                musq_prod *= m.mu * m.mu;
            }
            return {mu_prod, second_prod - musq_prod};
        }
        case K::concat: {
            if (ins.size() != layer.concat_sizes.size() || ins.empty())
                throw std::invalid_argument("concat needs one size per input");
            double total = 0.0;
            for (int c : layer.concat_sizes) {
                if (c <= 0) throw std::invalid_argument("concat sizes must be positive");
                total += c;
            }
            double mu = 0.0, second = 0.0;
            for (std::size_t i = 0; i < ins.size(); ++i) {
                const double w = layer.concat_sizes[i] / total;
                mu += w * ins[i].mu;
                second += w * (ins[i].nu + ins[i].mu * ins[i].mu);
            }
            return {mu, second - mu * mu};
        }
        case K::padding: {
            require_arity(layer, ins, 1);
            const double keep = 1.0 - layer.pad_fraction;
            return {ins[0].mu * keep, ins[0].nu * keep};
        }
        case K::shape_identity:
            require_arity(layer, ins, 1);
            return ins[0];
        case K::matmul: {
            require_arity(layer, ins, 2);
            const double n = static_cast<double>(layer.inner_dim);
            const double s1 = ins[0].nu + ins[0].mu * ins[0].mu;
            const double s2 = ins[1].nu + ins[1].mu * ins[1].mu;
            return {n * ins[0].mu * ins[1].mu,
                    n * (s1 * s2 - ins[0].mu * ins[0].mu * ins[1].mu * ins[1].mu)};
        }
        case K::reduce: {
            require_arity(layer, ins, 1);
            const double d = static_cast<double>(layer.reduce_d);
            if (layer.reduce_mean) return {ins[0].mu, ins[0].nu / d};
            return {d * ins[0].mu, d * ins[0].nu};
        }
        case K::unknown:
            if (fallback) *fallback = true;
            if (ins.empty()) return {0.0, 1.0};
            return ins[0];
    }
    throw std::logic_error("unreachable");
}

NetworkSpec NetworkSpec::from_json(std::string_view doc) {
    const auto j = nlohmann::json::parse(doc);
    NetworkSpec net;
    net.target_variance = j.value("target_variance", 1.0);
    for (const auto& e : j.at("layers")) {
        LayerSpec l;
        l.name = e.at("name").get<std::string>();
        const std::string kind = e.at("kind").get<std::string>();
        l.kind = layer_kind_from(kind);
        l.raw_kind = kind;
        if (e.contains("inputs"))
            for (const auto& in : e.at("inputs")) l.inputs.push_back(in.get<std::string>());
        l.fan_in = e.value("fan_in", 1);
        if (e.contains("fn")) l.named_fn = e.at("fn").get<std::string>();
        if (e.contains("graph")) {
            const std::string text = e.at("graph").get<std::string>();
            const std::string table = e.value("table", std::string("pangaea"));
            l.activation = std::make_shared<AfnGraph>(AfnGraph::parse(
                text, table == "cafe" ? OperatorTable::cafe() : OperatorTable::pangaea()));
        }
        l.rate = e.value("rate", 0.0);
        l.spatial = e.value("spatial", false);
        if (e.contains("op")) l.max_pool = e.at("op").get<std::string>() == "max";
        l.pool_k = e.value("K", 1);
        if (e.contains("sizes"))
            for (const auto& c : e.at("sizes")) l.concat_sizes.push_back(c.get<int>());
        l.pad_fraction = e.value("z", 0.0);
        l.inner_dim = e.value("n", 1);
        l.reduce_d = e.value("D", 1);
        if (e.contains("mode")) l.reduce_mean = e.at("mode").get<std::string>() != "sum";
        l.data.mu = e.value("mu", 0.0);
        l.data.nu = e.value("nu", 1.0);
        net.layers.push_back(std::move(l));
    }
    return net;
}

InitPlan propagate(const NetworkSpec& net, InitFamily family, std::uint64_t pool_seed) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!index.emplace(net.layers[i].name, i).second)
            throw std::invalid_argument("duplicate layer name: " + net.layers[i].name);
    }
    for (const auto& l : net.layers)
        for (const auto& in : l.inputs)
            if (!index.count(in))
                throw std::invalid_argument("layer " + l.name + " references missing input " + in);

    InitPlan plan;
    plan.target_variance = net.target_variance;
    plan.pool_seed = pool_seed;
    std::map<std::string, MomentPair> computed;
    std::vector<char> done(net.layers.size(), 0);
    bool progress = true;
    while (progress) {
        progress = false;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (done[i]) continue;
            const LayerSpec& l = net.layers[i];
            bool ready = true;
            for (const auto& in : l.inputs) ready = ready && computed.count(in) > 0;
            if (!ready) continue;
            std::vector<MomentPair> ins;
            for (const auto& in : l.inputs) ins.push_back(computed.at(in));

            InitPlan::Entry entry;
            entry.name = l.name;
            entry.kind = l.kind;
            if (l.kind == LayerSpec::Kind::dense) {
                if (ins.size() != 1)
                    throw std::invalid_argument("dense layer " + l.name + " expects 1 input");
                const double base = dense_init_scale(l.fan_in, ins[0]);
                const double scale = base * std::sqrt(net.target_variance);
                entry.scale = family == InitFamily::uniform ? std::sqrt(3.0) * scale : scale;
                entry.family = family == InitFamily::uniform ? "uniform" : "normal";
                entry.moments = {0.0, net.target_variance};
            } else {
                bool fb = false;
                entry.moments = layer_moments(l, ins, pool_seed, &fb);
                entry.fallback = fb;
            }
            if (!std::isfinite(entry.moments.mu) || !std::isfinite(entry.moments.nu))
                throw NonFiniteMoments("non-finite moments at layer " + l.name, l.name);
            computed[l.name] = entry.moments;
            plan.entries.push_back(std::move(entry));
            done[i] = 1;
            progress = true;
        }
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (!done[i])
            throw CyclicGraph("layer " + net.layers[i].name + " sits on a cycle",
                              net.layers[i].name);
    return plan;
}

const InitPlan::Entry* InitPlan::find(std::string_view name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::string InitPlan::to_json() const {
    nlohmann::ordered_json doc;
    doc["target_variance"] = target_variance;
    doc["pool_seed"] = pool_seed;
    auto& layers = doc["layers"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        nlohmann::ordered_json je;
        je["name"] = e.name;
        je["kind"] = to_string(e.kind);
        je["mu"] = e.moments.mu;
        je["nu"] = e.moments.nu;
        if (e.scale) {
            je["family"] = e.family;
            je["scale"] = *e.scale;
        }
        if (e.fallback) je["fallback"] = "identity";
        layers.push_back(std::move(je));
    }
    return doc.dump(2);
}

MomentPair affine_chain_moments(double alpha, double beta, int length, MomentPair in) {
    if (length < 0) throw std::invalid_argument("chain length must be nonnegative");
    double geo;
    double beta_l;
    if (beta == 1.0) {
        geo = static_cast<double>(length);
        beta_l = 1.0;
    } else {
        beta_l = std::pow(beta, length);
        geo = (beta_l - 1.0) / (beta - 1.0);
    }
    return {beta_l * in.mu + alpha * geo, std::pow(beta, 2 * length) * in.nu};
}

namespace {

McResult summarize(const std::vector<double>& ys) {
    const double n = static_cast<double>(ys.size());
    double sum = 0.0;
    for (double y : ys) sum += y;
    const double mean = sum / n;
    double m2 = 0.0, m4 = 0.0;
    for (double y : ys) {
        const double d = y - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    McResult r;
    r.m = {mean, m2};
    r.se_mu = std::sqrt(m2 / n);
    r.se_nu = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    r.samples = ys.size();
    return r;
}

}  // namespace

McResult mc_moment_oracle(const ScalarFn& f, MomentPair in, std::size_t samples,
                          std::uint64_t seed) {
    if (samples < 1000) throw std::invalid_argument("oracle needs at least 1000 samples");
    Rng rng(seed);
    const double sd = std::sqrt(std::max(in.nu, 0.0));
    std::vector<double> ys(samples);
    for (auto& y : ys) y = f(in.mu + sd * rng.normal());
    return summarize(ys);
}

McResult mc_moment_oracle(const LayerSpec& layer, const std::vector<MomentPair>& ins,
                          std::size_t samples, std::uint64_t seed) {
    using K = LayerSpec::Kind;
    if (samples < 1000) throw std::invalid_argument("oracle needs at least 1000 samples");
    Rng rng(seed);
    auto draw = [&](const MomentPair& m) {
        return m.mu + std::sqrt(std::max(m.nu, 0.0)) * rng.normal();
    };
    std::vector<double> ys(samples);
    switch (layer.kind) {
        case K::input:
            for (auto& y : ys) y = draw(layer.data);
            break;
        case K::dense: {
            const double std_w = dense_init_scale(layer.fan_in, ins.at(0));
            for (auto& y : ys) {
                double acc = 0.0;
                for (int i = 0; i < layer.fan_in; ++i)
                    acc += std_w * rng.normal() * draw(ins[0]);
                y = acc;
            }
            break;
        }
        case K::activation: {
            ScalarFn f = layer.activation ? as_scalar_fn(*layer.activation)
                                          : as_scalar_fn(named_activation(layer.named_fn));
            for (auto& y : ys) y = f(draw(ins.at(0)));
            break;
        }
        case K::dropout: {
            const double keep = 1.0 - layer.rate;
            for (auto& y : ys) {
                const bool kept = rng.uniform() < keep;
                const double x = draw(ins.at(0));
                y = kept ? (layer.spatial ? x : x / keep) : 0.0;
            }
            break;
        }
        case K::pooling:
            for (auto& y : ys) {
                if (layer.max_pool) {
                    double m = -1e308;
                    for (int i = 0; i < layer.pool_k; ++i) m = std::max(m, draw(ins.at(0)));
                    y = m;
                } else {
                    double acc = 0.0;
                    for (int i = 0; i < layer.pool_k; ++i) acc += draw(ins.at(0));
                    y = acc / layer.pool_k;
                }
            }
            break;
        case K::normalization: {
            for (auto& y : ys) y = draw(ins.at(0));
            double sum = 0.0;
            for (double y : ys) sum += y;
            const double mean = sum / static_cast<double>(samples);
            double var = 0.0;
            for (double y : ys) var += (y - mean) * (y - mean);
            var /= static_cast<double>(samples);
            const double sd = std::sqrt(var);
            for (auto& y : ys) y = (y - mean) / sd;
            break;
        }
        case K::add:
            for (auto& y : ys) {
                double acc = 0.0;
                for (const auto& m : ins) acc += draw(m);
                y = acc;
            }
            break;
        case K::average:
            for (auto& y : ys) {
                double acc = 0.0;
                for (const auto& m : ins) acc += draw(m);
                y = acc / static_cast<double>(ins.size());
            }
            break;
        case K::subtract:
            for (auto& y : ys) y = draw(ins.at(0)) - draw(ins.at(1));
            break;
        case K::multiply:
            for (auto& y : ys) {
                double acc = 1.0;
                for (const auto& m : ins) acc *= draw(m);
                y = acc;
            }
            break;
        case K::concat: {
            double total = 0.0;
            for (int c : layer.concat_sizes) total += c;
            for (auto& y : ys) {
                double pick = rng.uniform() * total;
                std::size_t idx = 0;
                while (idx + 1 < ins.size() && pick >= layer.concat_sizes[idx]) {
                    pick -= layer.concat_sizes[idx];
                    ++idx;
                }
                y = draw(ins.at(idx));
            }
            break;
        }
        case K::padding:
            for (auto& y : ys)
                y = rng.uniform() < layer.pad_fraction ? 0.0 : draw(ins.at(0));
            break;
        case K::shape_identity:
        case K::unknown:
            for (auto& y : ys) y = draw(ins.at(0));
            break;
        case K::matmul:
            for (auto& y : ys) {
                double acc = 0.0;
                for (int i = 0; i < layer.inner_dim; ++i) acc += draw(ins.at(0)) * draw(ins.at(1));
                y = acc;
            }
            break;
        case K::reduce:
            for (auto& y : ys) {
                double acc = 0.0;
                for (int i = 0; i < layer.reduce_d; ++i) acc += draw(ins.at(0));
                y = layer.reduce_mean ? acc / layer.reduce_d : acc;
            }
            break;
    }
    return summarize(ys);
}

}  // namespace actevo
