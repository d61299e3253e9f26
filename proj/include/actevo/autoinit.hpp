#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "actevo/graph.hpp"
#include "actevo/rng.hpp"

namespace actevo {

// mu is the signal mean, nu its variance
struct MomentPair {
    double mu = 0.0;
    double nu = 1.0;
};

using ScalarFn = std::function<double(double)>;

// wraps a graph (copied) for use where a plain callable is expected
ScalarFn as_scalar_fn(const AfnGraph& g);

// builtin activation by name over the safe table, e.g. "relu", "tanh";
// "identity" maps to id
AfnGraph named_activation(std::string_view name);

class QuadratureNonConvergence : public std::runtime_error {
  public:
    QuadratureNonConvergence(const std::string& what, double estimate, double bound)
        : std::runtime_error(what), estimate(estimate), error_bound(bound) {}
    double estimate;
    double error_bound;
};

class CyclicGraph : public std::runtime_error {
  public:
    CyclicGraph(const std::string& what, std::string layer)
        : std::runtime_error(what), layer(std::move(layer)) {}
    std::string layer;
};

class NonFiniteMoments : public std::runtime_error {
  public:
    NonFiniteMoments(const std::string& what, std::string layer)
        : std::runtime_error(what), layer(std::move(layer)) {}
    std::string layer;
};

// Gaussian expectation E[f(Z)], Z ~ N(mu, sigma^2), adaptive bisected
// Gauss-Kronrod panels; throws QuadratureNonConvergence when the error bound
// stays above max(1e-8, 1e-6 |I|)
double gauss_expect(const ScalarFn& f, double mu, double sigma);

// law-of-the-unconscious-statistician moments of f under N(in.mu, in.nu);
// requires in.nu > 0. Tiny negative variances from round-off clamp to zero.
MomentPair activation_moments(const ScalarFn& f, MomentPair in);
MomentPair activation_moments(const AfnGraph& f, MomentPair in);

// f minus its standard Gaussian mean; zero-mean inputs come back unchanged
ScalarFn center(const ScalarFn& f);
ScalarFn center(const AfnGraph& f);

// variance-scaling weight std for a dense layer: 1/sqrt(fan_in (nu + mu^2));
// the uniform family uses half-width sqrt(3) * std
double dense_init_scale(int fan_in, MomentPair in);
double glorot_uniform_halfwidth(int fan_in, int fan_out);
double he_normal_std(int fan_in);

struct LayerSpec {
    enum class Kind {
        input,
        dense,
        activation,
        dropout,
        pooling,
        normalization,
        add,
        average,
        subtract,
        multiply,
        concat,
        padding,
        shape_identity,
        matmul,
        reduce,
        unknown,
    };
    Kind kind = Kind::shape_identity;
    std::string name;
    std::vector<std::string> inputs;

    int fan_in = 1;                         // dense
    std::shared_ptr<AfnGraph> activation;   // activation: graph form
    std::string named_fn;                   // activation: builtin name
    double rate = 0.0;                      // dropout
    bool spatial = false;                   // dropout flavor
    bool max_pool = false;                  // pooling op
    int pool_k = 1;                         // pooling window
    std::vector<int> concat_sizes;          // concat C_i
    double pad_fraction = 0.0;              // padding z
    int inner_dim = 1;                      // matmul n
    int reduce_d = 1;                       // reduce D
    bool reduce_mean = true;                // reduce mode
    MomentPair data{0.0, 1.0};              // input statistics
    std::string raw_kind;                   // preserved for unknown kinds
};

const char* to_string(LayerSpec::Kind k);
LayerSpec::Kind layer_kind_from(std::string_view name);

inline constexpr std::uint64_t kDefaultPoolSeed = 0x9001ULL;
inline constexpr std::size_t kPoolSamples = 100000;

// one analytic step; `fallback` reports the unknown-kind identity path.
// Max pooling is the one sampled formula: S samples from the given seed.
MomentPair layer_moments(const LayerSpec& layer, const std::vector<MomentPair>& ins,
                         std::uint64_t pool_seed = kDefaultPoolSeed,
                         bool* fallback = nullptr);

struct NetworkSpec {
    std::vector<LayerSpec> layers;  // DAG by name references
    double target_variance = 1.0;   // nu*
    static NetworkSpec from_json(std::string_view doc);
};

struct InitPlan {
    struct Entry {
        std::string name;
        LayerSpec::Kind kind = LayerSpec::Kind::shape_identity;
        MomentPair moments;             // post-layer
        std::optional<double> scale;    // dense only, nu*-adjusted
        std::string family;             // dense only: "normal" or "uniform"
        bool fallback = false;          // unknown kind propagated as identity
    };
    std::vector<Entry> entries;  // topological order
    double target_variance = 1.0;
    std::uint64_t pool_seed = kDefaultPoolSeed;
    std::string to_json() const;
    const Entry* find(std::string_view name) const;
};

enum class InitFamily { normal, uniform };

// full topological traversal; biases are implicitly zero-initialized
InitPlan propagate(const NetworkSpec& net, InitFamily family = InitFamily::normal,
                   std::uint64_t pool_seed = kDefaultPoolSeed);

// mu_out = beta^L mu_in + alpha (beta^{L-1} + ... + 1), nu_out = beta^{2L} nu_in
MomentPair affine_chain_moments(double alpha, double beta, int length, MomentPair in);

struct McResult {
    MomentPair m;
    double se_mu = 0.0;
    double se_nu = 0.0;
    std::size_t samples = 0;
};

McResult mc_moment_oracle(const ScalarFn& f, MomentPair in, std::size_t samples,
                          std::uint64_t seed);
// samples the layer's actual computation on Gaussian inputs
McResult mc_moment_oracle(const LayerSpec& layer, const std::vector<MomentPair>& ins,
                          std::size_t samples, std::uint64_t seed);

}  // namespace actevo
