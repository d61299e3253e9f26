#pragma once
// Activation functions as rooted operator computation graphs: parsing,
// evaluation (scalar and forward-mode dual), fingerprinting, and the
// indicator-function constructions.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "actevo/rng.hpp"

namespace actevo {

enum class SpaceTag { cafe, pangaea };

// Output magnitude cap for the saturating (pangaea) table. Every node output
// is clamped to [-kSaturation, kSaturation], which keeps evaluation total:
// no inf can enter a later op, so no NaN can be produced.
inline constexpr double kSaturation = 1e38;
inline constexpr double kCafeEpsilon = 1e-7;  // the eps in x1/(x2+eps), log(|x+eps|)

struct UnaryOpDef {
    const char* name;
    double (*f)(double);
    double (*df)(double);  // right-hand derivative at kinks
};

struct BinaryOpDef {
    const char* name;
    double (*f)(double, double);
    void (*df)(double a, double b, double& da, double& db);
};

class OperatorTable {
public:
    SpaceTag tag;
    std::vector<UnaryOpDef> unary;
    std::vector<BinaryOpDef> binary;

    static const OperatorTable& cafe();      // 24 unary, 6 binary
    static const OperatorTable& pangaea();   // 27 unary, 7 binary

    bool saturating() const { return tag == SpaceTag::pangaea; }

    int find_unary(std::string_view name) const;
    int find_binary(std::string_view name) const;
};

// Operator node. Inputs refer to earlier nodes by index; kInputX means the
// graph input symbol x. Nodes are stored in topological order, root last.
inline constexpr int kInputX = -1;

struct GNode {
    bool is_binary = false;
    std::int16_t op = 0;
    int in0 = kInputX;
    int in1 = kInputX;  // binary only
};

enum class ParamLabel : std::uint8_t { alpha = 0, beta = 1, gamma = 2 };
enum class ParamGranularity : std::uint8_t { per_layer, per_channel, per_neuron };

const char* to_string(ParamLabel l);
const char* to_string(ParamGranularity g);

// Multiplicative learnable parameter on one edge. The edge is identified by
// its consumer: (node, slot), or the output stub when node == kOutputEdge.
inline constexpr int kOutputEdge = -2;

struct ParamSite {
    int node = kOutputEdge;  // consumer node index, or kOutputEdge
    int slot = 0;            // 0 or 1
    ParamLabel label = ParamLabel::alpha;
    ParamGranularity granularity = ParamGranularity::per_channel;
    double init_value = 1.0;
};

struct EvalFlags {
    bool nonfinite = false;        // some intermediate or the output was non-finite (cafe)
    bool saturated = false;        // some node hit the saturation cap (pangaea)
};

struct DualResult {
    double value = 0.0;
    double d_dx = 0.0;
    std::array<double, 3> d_dparam{0.0, 0.0, 0.0};  // alpha, beta, gamma
    bool nonfinite_derivative = false;
    EvalFlags flags;
};

class ParseError : public std::runtime_error {
public:
    enum class Kind { UnknownOperator, ArityMismatch, SyntaxError };
    ParseError(Kind k, std::string token, std::size_t pos, const std::string& what)
        : std::runtime_error(what), kind(k), token(std::move(token)), position(pos) {}
    Kind kind;
    std::string token;
    std::size_t position;
};

class Fingerprint {
public:
    static constexpr std::size_t kProbes = 1000;

    explicit Fingerprint(std::array<double, kProbes> outputs);

    const std::array<double, kProbes>& outputs() const { return outputs_; }
    // canonical little-endian bytes, NaNs normalized so NaN == NaN
    const std::vector<std::uint8_t>& key() const { return key_; }

    bool operator==(const Fingerprint& o) const { return key_ == o.key_; }
    bool operator!=(const Fingerprint& o) const { return !(*this == o); }
    bool operator<(const Fingerprint& o) const { return key_ < o.key_; }

    // The fixed probe set: 1000 standard-normal draws under a fixed global
    // seed, clamped to [-5, 5].
    static const std::array<double, kProbes>& probes();

private:
    std::array<double, kProbes> outputs_;
    std::vector<std::uint8_t> key_;
};

class AfnGraph {
public:
    AfnGraph() = default;
    AfnGraph(const OperatorTable& table, std::vector<GNode> nodes,
             std::vector<ParamSite> sites = {});

    const OperatorTable& table() const { return *table_; }
    const std::vector<GNode>& nodes() const { return nodes_; }
    const std::vector<ParamSite>& param_sites() const { return sites_; }
    int root() const { return static_cast<int>(nodes_.size()) - 1; }
    std::size_t node_count() const { return nodes_.size(); }

    // Edges, paper convention: one per unary input, two per binary input,
    // plus the output stub. edge_count == nodes + binaries + 1.
    std::size_t edge_count() const;

    // Default parameter values used when the caller passes none; 1.0 unless
    // a constructor (build_indicator) binds something else.
    const std::array<double, 3>& param_defaults() const { return param_defaults_; }
    void set_param_default(ParamLabel l, double v);

    bool has_params() const { return !sites_.empty(); }

    double eval_scalar(double x, const std::array<double, 3>& params,
                       EvalFlags* flags = nullptr) const;
    double eval_scalar(double x, EvalFlags* flags = nullptr) const {
        return eval_scalar(x, param_defaults_, flags);
    }

    DualResult eval_dual(double x, const std::array<double, 3>& params) const;
    DualResult eval_dual(double x) const { return eval_dual(x, param_defaults_); }

    Fingerprint fingerprint() const;

    std::string format() const;
    std::string to_json() const;  // canonical document: nodes, edges, params

    static AfnGraph parse(std::string_view text, const OperatorTable& table);
    static AfnGraph from_json(std::string_view doc);

    // structural validation; throws std::logic_error on violation
    void validate() const;

    // max number of binary nodes on a root-to-x path; a CAFE S_d tree has
    // depth() == d
    int depth() const;

private:
    friend class GraphBuilder;
    const OperatorTable* table_ = nullptr;
    std::vector<GNode> nodes_;
    std::vector<ParamSite> sites_;
    std::array<double, 3> param_defaults_{1.0, 1.0, 1.0};

    // per-edge param label index (-1 none), rebuilt on construction
    std::vector<std::int8_t> edge_label_;
    std::int8_t out_label_ = -1;
    void rebuild_edge_index();
};

// Either unary1(unary2(x)) or binary(unary1(x), unary2(x)), equally likely;
// operators uniform over the table.
AfnGraph random_initial_graph(const OperatorTable& table, Rng& rng);

enum class IndicatorKind { left_open, right_open, interval, point };

class InvalidInterval : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Indicator graphs from the safe-division constructions:
//   left_open:  1 iff x < b      (bound b via beta)
//   right_open: 1 iff x > a      (bound a via alpha)
//   interval:   1 iff a < x < b
//   point:      1 iff x == a
// Bounds are bound as default param values on the returned graph.
AfnGraph build_indicator(IndicatorKind kind, double a, double b,
                         const OperatorTable& table);

}  // namespace actevo
