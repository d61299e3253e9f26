#include "actevo/graph.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

namespace actevo {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

double sigmoid_(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

double gauss_pdf_(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }
double gauss_cdf_(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

// ---- CAFE operators: evaluated as written, non-finite values propagate ----

double cf_zero(double) { return 0.0; }
double cf_one(double) { return 1.0; }
double cf_id(double x) { return x; }
double cf_neg(double x) { return -x; }
double cf_abs(double x) { return std::fabs(x); }
double cf_square(double x) { return x * x; }
double cf_cube(double x) { return x * x * x; }
double cf_sqrt(double x) { return std::sqrt(x); }  // NaN for x<0, as written
double cf_exp(double x) { return std::exp(x); }
double cf_expnsq(double x) { return std::exp(-x * x); }
double cf_softplus(double x) { return softplus_(x); }
double cf_logabs(double x) { return std::log(std::fabs(x + kCafeEpsilon)); }
double cf_sin(double x) { return std::sin(x); }
double cf_sinh(double x) { return std::sinh(x); }
double cf_arcsinh(double x) { return std::asinh(x); }
double cf_cos(double x) { return std::cos(x); }
double cf_cosh(double x) { return std::cosh(x); }
double cf_tanh(double x) { return std::tanh(x); }
double cf_arctan(double x) { return std::atan(x); }
double cf_max0(double x) { return x > 0.0 ? x : 0.0; }
double cf_min0(double x) { return x < 0.0 ? x : 0.0; }
double cf_sigmoid(double x) { return sigmoid_(x); }
double cf_erf(double x) { return std::erf(x); }
double cf_sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

double d_zero(double) { return 0.0; }
double d_one(double) { return 0.0; }
double d_id(double) { return 1.0; }
double d_neg(double) { return -1.0; }
double d_abs(double x) { return x >= 0.0 ? 1.0 : -1.0; }
double d_square(double x) { return 2.0 * x; }
double d_cube(double x) { return 3.0 * x * x; }
double d_sqrt(double x) { return 0.5 / std::sqrt(x); }
double d_exp(double x) { return std::exp(x); }
double d_expnsq(double x) { return -2.0 * x * std::exp(-x * x); }
double d_softplus(double x) { return sigmoid_(x); }
double d_logabs(double x) { return 1.0 / (x + kCafeEpsilon); }
double d_sin(double x) { return std::cos(x); }
double d_sinh(double x) { return std::cosh(x); }
double d_arcsinh(double x) { return 1.0 / std::sqrt(1.0 + x * x); }
double d_cos(double x) { return -std::sin(x); }
double d_cosh(double x) { return std::sinh(x); }
double d_tanh(double x) { const double t = std::tanh(x); return 1.0 - t * t; }
double d_arctan(double x) { return 1.0 / (1.0 + x * x); }
double d_max0(double x) { return x >= 0.0 ? 1.0 : 0.0; }
double d_min0(double x) { return x < 0.0 ? 1.0 : 0.0; }
double d_sigmoid(double x) { const double s = sigmoid_(x); return s * (1.0 - s); }
double d_erf(double x) { return 2.0 / std::sqrt(kPi) * std::exp(-x * x); }
double d_sinc(double x) { return x == 0.0 ? 0.0 : (x * std::cos(x) - std::sin(x)) / (x * x); }

double cb_add(double a, double b) { return a + b; }
double cb_sub(double a, double b) { return a - b; }
double cb_mul(double a, double b) { return a * b; }
double cb_div(double a, double b) { return a / (b + kCafeEpsilon); }
double cb_max(double a, double b) { return a >= b ? a : b; }
double cb_min(double a, double b) { return a <= b ? a : b; }

void db_add(double, double, double& da, double& db) { da = 1.0; db = 1.0; }
void db_sub(double, double, double& da, double& db) { da = 1.0; db = -1.0; }
void db_mul(double a, double b, double& da, double& db) { da = b; db = a; }
void db_div(double a, double b, double& da, double& db) {
    const double d = b + kCafeEpsilon;
    da = 1.0 / d;
    db = -a / (d * d);
}
void db_max(double a, double b, double& da, double& db) {
    da = a >= b ? 1.0 : 0.0;
    db = a >= b ? 0.0 : 1.0;
}
void db_min(double a, double b, double& da, double& db) {
    da = a <= b ? 1.0 : 0.0;
    db = a <= b ? 0.0 : 1.0;
}

// ---- PANGAEA operators: total under safe rules; node outputs saturate ----

double pg_sqrt_abs(double x) { return std::sqrt(std::fabs(x)); }
double pg_log1p_abs(double x) { return std::log1p(std::fabs(x)); }
double pg_swish(double x) { return x * sigmoid_(x); }
double pg_selu(double x) {
    return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}
double pg_elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }
double pg_leaky(double x) { return x >= 0.0 ? x : 0.01 * x; }
double pg_softsign(double x) { return x / (1.0 + std::fabs(x)); }
double pg_gelu(double x) { return x * gauss_cdf_(x); }

double d_sqrt_abs(double x) {
    return x >= 0.0 ? 0.5 / std::sqrt(x) : -0.5 / std::sqrt(-x);
}
double d_log1p_abs(double x) { return x >= 0.0 ? 1.0 / (1.0 + x) : -1.0 / (1.0 - x); }
double d_swish(double x) {
    const double s = sigmoid_(x);
    return s + x * s * (1.0 - s);
}
double d_selu(double x) {
    return x >= 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}
double d_elu(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }
double d_relu(double x) { return x >= 0.0 ? 1.0 : 0.0; }
double d_leaky(double x) { return x >= 0.0 ? 1.0 : 0.01; }
double d_softsign(double x) {
    const double d = 1.0 + std::fabs(x);
    return 1.0 / (d * d);
}
double d_gelu(double x) { return gauss_cdf_(x) + x * gauss_pdf_(x); }

// Safe division: exactly 0 when the denominator is 0.
double pb_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }
void dpb_div(double a, double b, double& da, double& db) {
    if (b == 0.0) {
        da = 0.0;
        db = 0.0;
        return;
    }
    da = 1.0 / b;
    db = -a / (b * b);
}

// Sign-preserving exponentiation: sign(a)*|a|^b with pow(0, b) = 0.
// pow(a, 1) must return a verbatim: the binary-insert rule initializes the
// exponent to 1 and requires bitwise function preservation.
double pb_pow(double a, double b) {
    if (b == 1.0) return a;  // checked before the zero rule so pow(-0, 1) keeps its sign
    if (a == 0.0) return 0.0;
    return std::copysign(std::pow(std::fabs(a), b), a);
}
void dpb_pow(double a, double b, double& da, double& db) {
    if (a == 0.0) {
        da = 0.0;
        db = 0.0;
        return;
    }
    const double aa = std::fabs(a);
    da = b * std::pow(aa, b - 1.0);
    db = std::copysign(std::pow(aa, b), a) * std::log(aa);
}

const OperatorTable& cafe_table() {
    static const OperatorTable t{
        SpaceTag::cafe,
        {
            {"zero", cf_zero, d_zero},
            {"one", cf_one, d_one},
            {"id", cf_id, d_id},
            {"neg", cf_neg, d_neg},
            {"abs", cf_abs, d_abs},
            {"square", cf_square, d_square},
            {"cube", cf_cube, d_cube},
            {"sqrt", cf_sqrt, d_sqrt},
            {"exp", cf_exp, d_exp},
            {"exp_neg_square", cf_expnsq, d_expnsq},
            {"softplus", cf_softplus, d_softplus},
            {"log_abs", cf_logabs, d_logabs},
            {"sin", cf_sin, d_sin},
            {"sinh", cf_sinh, d_sinh},
            {"arcsinh", cf_arcsinh, d_arcsinh},
            {"cos", cf_cos, d_cos},
            {"cosh", cf_cosh, d_cosh},
            {"tanh", cf_tanh, d_tanh},
            {"arctan", cf_arctan, d_arctan},
            {"max0", cf_max0, d_max0},
            {"min0", cf_min0, d_min0},
            {"sigmoid", cf_sigmoid, d_sigmoid},
            {"erf", cf_erf, d_erf},
            {"sinc", cf_sinc, d_sinc},
        },
        {
            {"add", cb_add, db_add},
            {"sub", cb_sub, db_sub},
            {"mul", cb_mul, db_mul},
            {"div", cb_div, db_div},
            {"max", cb_max, db_max},
            {"min", cb_min, db_min},
        },
    };
    return t;
}

const OperatorTable& pangaea_table() {
    static const OperatorTable t{
        SpaceTag::pangaea,
        {
            {"zero", cf_zero, d_zero},
            {"one", cf_one, d_one},
            {"id", cf_id, d_id},
            {"neg", cf_neg, d_neg},
            {"abs", cf_abs, d_abs},
            {"square", cf_square, d_square},
            {"cube", cf_cube, d_cube},
            {"sqrt_abs", pg_sqrt_abs, d_sqrt_abs},
            {"exp", cf_exp, d_exp},
            {"exp_neg_square", cf_expnsq, d_expnsq},
            {"softplus", cf_softplus, d_softplus},
            {"log1p_abs", pg_log1p_abs, d_log1p_abs},
            {"asinh", cf_arcsinh, d_arcsinh},
            {"atan", cf_arctan, d_arctan},
            {"sinh", cf_sinh, d_sinh},
            {"cosh", cf_cosh, d_cosh},
            {"tanh", cf_tanh, d_tanh},
            {"erf", cf_erf, d_erf},
            {"sigmoid", cf_sigmoid, d_sigmoid},
            {"swish", pg_swish, d_swish},
            {"selu", pg_selu, d_selu},
            {"elu", pg_elu, d_elu},
            {"relu", cf_max0, d_relu},
            {"min0", cf_min0, d_min0},
            {"leaky_relu", pg_leaky, d_leaky},
            {"softsign", pg_softsign, d_softsign},
            {"gelu", pg_gelu, d_gelu},
        },
        {
            {"add", cb_add, db_add},
            {"sub", cb_sub, db_sub},
            {"mul", cb_mul, db_mul},
            {"div", pb_div, dpb_div},
            {"pow", pb_pow, dpb_pow},
            {"max", cb_max, db_max},
            {"min", cb_min, db_min},
        },
    };
    return t;
}

}  // namespace

const OperatorTable& OperatorTable::cafe() { return cafe_table(); }
const OperatorTable& OperatorTable::pangaea() { return pangaea_table(); }

int OperatorTable::find_unary(std::string_view name) const {
    for (std::size_t i = 0; i < unary.size(); ++i)
        if (name == unary[i].name) return static_cast<int>(i);
    return -1;
}

int OperatorTable::find_binary(std::string_view name) const {
    for (std::size_t i = 0; i < binary.size(); ++i)
        if (name == binary[i].name) return static_cast<int>(i);
    return -1;
}

const char* to_string(ParamLabel l) {
    switch (l) {
        case ParamLabel::alpha: return "alpha";
        case ParamLabel::beta: return "beta";
        case ParamLabel::gamma: return "gamma";
    }
    return "?";
}

const char* to_string(ParamGranularity g) {
    switch (g) {
        case ParamGranularity::per_layer: return "per-layer";
        case ParamGranularity::per_channel: return "per-channel";
        case ParamGranularity::per_neuron: return "per-neuron";
    }
    return "?";
}

// ---------------------------------------------------------------- AfnGraph

AfnGraph::AfnGraph(const OperatorTable& table, std::vector<GNode> nodes,
                   std::vector<ParamSite> sites)
    : table_(&table), nodes_(std::move(nodes)), sites_(std::move(sites)) {
    rebuild_edge_index();
    validate();
}

std::size_t AfnGraph::edge_count() const {
    std::size_t binaries = 0;
    for (const auto& n : nodes_)
        if (n.is_binary) ++binaries;
    return nodes_.size() + binaries + 1;
}

void AfnGraph::set_param_default(ParamLabel l, double v) {
    param_defaults_[static_cast<int>(l)] = v;
}

void AfnGraph::rebuild_edge_index() {
    edge_label_.assign(2 * nodes_.size(), -1);
    out_label_ = -1;
    for (const auto& s : sites_) {
        const auto lab = static_cast<std::int8_t>(s.label);
        if (s.node == kOutputEdge) {
            out_label_ = lab;
        } else {
            edge_label_[2 * static_cast<std::size_t>(s.node) + static_cast<std::size_t>(s.slot)] =
                lab;
        }
    }
}

void AfnGraph::validate() const {
    if (table_ == nullptr) throw std::logic_error("graph has no operator table");
    if (nodes_.empty()) throw std::logic_error("graph has no nodes");
    const int n = static_cast<int>(nodes_.size());
    std::vector<char> reachable(nodes_.size(), 0);
    for (int i = 0; i < n; ++i) {
        const GNode& nd = nodes_[static_cast<std::size_t>(i)];
        const int op_count = nd.is_binary ? static_cast<int>(table_->binary.size())
                                          : static_cast<int>(table_->unary.size());
        if (nd.op < 0 || nd.op >= op_count) throw std::logic_error("operator index out of range");
        if (nd.in0 != kInputX && (nd.in0 < 0 || nd.in0 >= i))
            throw std::logic_error("node input breaks topological order");
        if (nd.is_binary && nd.in1 != kInputX && (nd.in1 < 0 || nd.in1 >= i))
            throw std::logic_error("node input breaks topological order");
    }
    // reachability from root
    reachable.back() = 1;
    for (int i = n - 1; i >= 0; --i) {
        if (!reachable[static_cast<std::size_t>(i)]) continue;
        const GNode& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.in0 != kInputX) reachable[static_cast<std::size_t>(nd.in0)] = 1;
        if (nd.is_binary && nd.in1 != kInputX) reachable[static_cast<std::size_t>(nd.in1)] = 1;
    }
    for (int i = 0; i < n; ++i)
        if (!reachable[static_cast<std::size_t>(i)])
            throw std::logic_error("node unreachable from output");
    // at most one site per edge
    std::vector<char> seen(2 * nodes_.size(), 0);
    char seen_out = 0;
    for (const auto& s : sites_) {
        if (s.slot != 0 && s.slot != 1) throw std::logic_error("bad param slot");
        if (s.node == kOutputEdge) {
            if (seen_out++) throw std::logic_error("duplicate param site on output edge");
            continue;
        }
        if (s.node < 0 || s.node >= n) throw std::logic_error("param site names missing node");
        if (s.slot == 1 && !nodes_[static_cast<std::size_t>(s.node)].is_binary)
            throw std::logic_error("param site on missing slot");
        auto idx = 2 * static_cast<std::size_t>(s.node) + static_cast<std::size_t>(s.slot);
        if (seen[idx]++) throw std::logic_error("duplicate param site on edge");
    }
}

int AfnGraph::depth() const {
    // binary nesting depth: max count of binary nodes on a root-to-x path
    std::vector<int> d(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const GNode& nd = nodes_[i];
        int child = 0;
        if (nd.in0 != kInputX) child = d[static_cast<std::size_t>(nd.in0)];
        if (nd.is_binary && nd.in1 != kInputX)
            child = std::max(child, d[static_cast<std::size_t>(nd.in1)]);
        d[i] = child + (nd.is_binary ? 1 : 0);
    }
    return d.back();
}

namespace {

inline double saturate(double v, bool& hit) {
    if (v > kSaturation) {
        hit = true;
        return kSaturation;
    }
    if (v < -kSaturation) {
        hit = true;
        return -kSaturation;
    }
    return v;
}

}  // namespace

double AfnGraph::eval_scalar(double x, const std::array<double, 3>& params,
                             EvalFlags* flags) const {
    EvalFlags fl;
    const bool sat = table_->saturating();
    std::array<double, 64> buf;
    std::vector<double> heap;
    double* vals = buf.data();
    if (nodes_.size() > buf.size()) {
        heap.resize(nodes_.size());
        vals = heap.data();
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const GNode& n = nodes_[i];
        double a = n.in0 == kInputX ? x : vals[static_cast<std::size_t>(n.in0)];
        if (const std::int8_t l = edge_label_[2 * i]; l >= 0) a *= params[static_cast<std::size_t>(l)];
        double v;
        if (n.is_binary) {
            double b = n.in1 == kInputX ? x : vals[static_cast<std::size_t>(n.in1)];
            if (const std::int8_t l = edge_label_[2 * i + 1]; l >= 0)
                b *= params[static_cast<std::size_t>(l)];
            v = table_->binary[static_cast<std::size_t>(n.op)].f(a, b);
        } else {
            v = table_->unary[static_cast<std::size_t>(n.op)].f(a);
        }
        if (sat) {
            v = saturate(v, fl.saturated);
        } else if (!std::isfinite(v)) {
            fl.nonfinite = true;
        }
        vals[i] = v;
    }
    double out = vals[nodes_.size() - 1];
    if (out_label_ >= 0) {
        out *= params[static_cast<std::size_t>(out_label_)];
        if (sat)
            out = saturate(out, fl.saturated);
        else if (!std::isfinite(out))
            fl.nonfinite = true;
    }
    if (flags) *flags = fl;
    return out;
}

namespace {

struct Dual {
    double v = 0.0;
    double dx = 0.0;
    std::array<double, 3> dp{0.0, 0.0, 0.0};
};

inline void apply_edge_param(Dual& d, int label, const std::array<double, 3>& params) {
    if (label < 0) return;
    const double p = params[static_cast<std::size_t>(label)];
    const double v0 = d.v;
    d.v *= p;
    d.dx *= p;
    for (int k = 0; k < 3; ++k) d.dp[static_cast<std::size_t>(k)] *= p;
    d.dp[static_cast<std::size_t>(label)] += v0;
}

}  // namespace

DualResult AfnGraph::eval_dual(double x, const std::array<double, 3>& params) const {
    EvalFlags fl;
    const bool sat = table_->saturating();
    std::array<Dual, 64> buf;
    std::vector<Dual> heap;
    Dual* vals = buf.data();
    if (nodes_.size() > buf.size()) {
        heap.resize(nodes_.size());
        vals = heap.data();
    }
    const Dual input{x, 1.0, {0.0, 0.0, 0.0}};
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const GNode& n = nodes_[i];
        Dual a = n.in0 == kInputX ? input : vals[static_cast<std::size_t>(n.in0)];
        apply_edge_param(a, edge_label_[2 * i], params);
        Dual out;
        if (n.is_binary) {
            Dual b = n.in1 == kInputX ? input : vals[static_cast<std::size_t>(n.in1)];
            apply_edge_param(b, edge_label_[2 * i + 1], params);
            const auto& op = table_->binary[static_cast<std::size_t>(n.op)];
            out.v = op.f(a.v, b.v);
            double da, db;
            op.df(a.v, b.v, da, db);
            out.dx = da * a.dx + db * b.dx;
            for (int k = 0; k < 3; ++k)
                out.dp[static_cast<std::size_t>(k)] = da * a.dp[static_cast<std::size_t>(k)] +
                                                      db * b.dp[static_cast<std::size_t>(k)];
        } else {
            const auto& op = table_->unary[static_cast<std::size_t>(n.op)];
            out.v = op.f(a.v);
            const double g = op.df(a.v);
            out.dx = g * a.dx;
            for (int k = 0; k < 3; ++k)
                out.dp[static_cast<std::size_t>(k)] = g * a.dp[static_cast<std::size_t>(k)];
        }
        if (sat) {
            bool hit = false;
            out.v = saturate(out.v, hit);
            if (hit) {
                // saturated region is locally constant
                out.dx = 0.0;
                out.dp = {0.0, 0.0, 0.0};
                fl.saturated = true;
            }
        } else if (!std::isfinite(out.v)) {
            fl.nonfinite = true;
        }
        vals[i] = out;
    }
    Dual out = vals[nodes_.size() - 1];
    if (out_label_ >= 0) {
        apply_edge_param(out, out_label_, params);
        if (sat) {
            bool hit = false;
            out.v = saturate(out.v, hit);
            if (hit) {
                out.dx = 0.0;
                out.dp = {0.0, 0.0, 0.0};
                fl.saturated = true;
            }
        } else if (!std::isfinite(out.v)) {
            fl.nonfinite = true;
        }
    }
    DualResult r;
    r.value = out.v;
    r.d_dx = out.dx;
    r.d_dparam = out.dp;
    r.flags = fl;
    r.nonfinite_derivative =
        !std::isfinite(out.dx) || !std::isfinite(out.dp[0]) || !std::isfinite(out.dp[1]) ||
        !std::isfinite(out.dp[2]);
    return r;
}

// ---------------------------------------------------------------- format

namespace {

void format_rec(const AfnGraph& g, int node, std::string& out) {
    if (node == kInputX) {
        out += 'x';
        return;
    }
    const GNode& n = g.nodes()[static_cast<std::size_t>(node)];
    const OperatorTable& t = g.table();

    // find edge labels for this node's inputs
    auto edge_lab = [&](int slot) -> int {
        for (const auto& s : g.param_sites())
            if (s.node == node && s.slot == slot) return static_cast<int>(s.label);
        return -1;
    };
    auto emit_child = [&](int child, int slot) {
        const int lab = edge_lab(slot);
        if (lab >= 0) {
            out += "param:";
            out += to_string(static_cast<ParamLabel>(lab));
            out += '(';
            format_rec(g, child, out);
            out += ')';
        } else {
            format_rec(g, child, out);
        }
    };
    if (n.is_binary) {
        out += t.binary[static_cast<std::size_t>(n.op)].name;
        out += '(';
        emit_child(n.in0, 0);
        out += ',';
        emit_child(n.in1, 1);
        out += ')';
    } else {
        out += t.unary[static_cast<std::size_t>(n.op)].name;
        out += '(';
        emit_child(n.in0, 0);
        out += ')';
    }
}

}  // namespace

std::string AfnGraph::format() const {
    std::string out;
    int out_lab = -1;
    for (const auto& s : sites_)
        if (s.node == kOutputEdge) out_lab = static_cast<int>(s.label);
    if (out_lab >= 0) {
        out += "param:";
        out += to_string(static_cast<ParamLabel>(out_lab));
        out += '(';
        format_rec(*this, root(), out);
        out += ')';
    } else {
        format_rec(*this, root(), out);
    }
    return out;
}

// ---------------------------------------------------------------- parse

namespace {

struct Parser {
    std::string_view text;
    std::size_t pos = 0;
    const OperatorTable* table;
    std::vector<GNode> nodes;
    std::vector<ParamSite> sites;

    [[noreturn]] void fail(ParseError::Kind k, const std::string& token, std::size_t at,
                           const std::string& msg) {
        std::ostringstream os;
        os << msg << " at position " << at << " (token \"" << token << "\")";
        throw ParseError(k, token, at, os.str());
    }

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    void expect(char c) {
        skip_ws();
        if (pos >= text.size() || text[pos] != c)
            fail(ParseError::Kind::SyntaxError, pos < text.size() ? std::string(1, text[pos]) : "<end>",
                 pos, std::string("expected '") + c + "'");
        ++pos;
    }

    std::string ident() {
        skip_ws();
        const std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (pos == start)
            fail(ParseError::Kind::SyntaxError,
                 pos < text.size() ? std::string(1, text[pos]) : "<end>", pos,
                 "expected operator name");
        return std::string(text.substr(start, pos - start));
    }

    // Parses one expression; returns the node index (or kInputX for bare x).
    // If the expression is wrapped in param:label(...), the label is written
    // to *edge_label for the caller to attach to the consuming edge.
    int expr(int* edge_label) {
        skip_ws();
        const std::size_t start = pos;
        std::string name = ident();
        if (name == "param") {
            expect(':');
            const std::size_t lab_at = pos;
            std::string lab = ident();
            int label;
            if (lab == "alpha")
                label = 0;
            else if (lab == "beta")
                label = 1;
            else if (lab == "gamma")
                label = 2;
            else
                fail(ParseError::Kind::SyntaxError, lab, lab_at, "unknown parameter label");
            expect('(');
            int inner_label = -1;
            const std::size_t inner_at = pos;
            int child = expr(&inner_label);
            if (inner_label >= 0)
                fail(ParseError::Kind::SyntaxError, "param", inner_at,
                     "duplicate parameter on one edge");
            expect(')');
            if (edge_label == nullptr)
                fail(ParseError::Kind::SyntaxError, "param", start,
                     "parameter not attached to an edge");
            *edge_label = label;
            return child;
        }
        if (name == "x") return kInputX;
        const int ui = table->find_unary(name);
        const int bi = table->find_binary(name);
        if (ui < 0 && bi < 0)
            fail(ParseError::Kind::UnknownOperator, name, start, "unknown operator");
        expect('(');
        int lab0 = -1;
        const int c0 = expr(&lab0);
        if (ui >= 0) {
            if (peek() == ',')
                fail(ParseError::Kind::ArityMismatch, name, start,
                     "unary operator given two children");
            expect(')');
            GNode n;
            n.is_binary = false;
            n.op = static_cast<std::int16_t>(ui);
            n.in0 = c0;
            nodes.push_back(n);
            const int idx = static_cast<int>(nodes.size()) - 1;
            if (lab0 >= 0) attach(idx, 0, lab0);
            return idx;
        }
        if (peek() != ',')
            fail(ParseError::Kind::ArityMismatch, name, start, "binary operator given one child");
        expect(',');
        int lab1 = -1;
        const int c1 = expr(&lab1);
        expect(')');
        GNode n;
        n.is_binary = true;
        n.op = static_cast<std::int16_t>(bi);
        n.in0 = c0;
        n.in1 = c1;
        nodes.push_back(n);
        const int idx = static_cast<int>(nodes.size()) - 1;
        if (lab0 >= 0) attach(idx, 0, lab0);
        if (lab1 >= 0) attach(idx, 1, lab1);
        return idx;
    }

    void attach(int node, int slot, int label) {
        ParamSite s;
        s.node = node;
        s.slot = slot;
        s.label = static_cast<ParamLabel>(label);
        sites.push_back(s);
    }
};

}  // namespace

AfnGraph AfnGraph::parse(std::string_view text, const OperatorTable& table) {
    Parser p;
    p.text = text;
    p.table = &table;
    int top_label = -1;
    const int root = p.expr(&top_label);
    p.skip_ws();
    if (p.pos != text.size())
        p.fail(ParseError::Kind::SyntaxError, std::string(1, text[p.pos]), p.pos,
               "trailing characters");
    if (root == kInputX) {
        // bare "x": represent as the identity operator node so the graph is nonempty
        const int id_op = table.find_unary("id");
        if (id_op < 0)
            p.fail(ParseError::Kind::UnknownOperator, "x", 0,
                   "table lacks an identity operator for bare x");
        GNode n;
        n.is_binary = false;
        n.op = static_cast<std::int16_t>(id_op);
        n.in0 = kInputX;
        p.nodes.push_back(n);
    }
    if (top_label >= 0) {
        ParamSite s;
        s.node = kOutputEdge;
        s.slot = 0;
        s.label = static_cast<ParamLabel>(top_label);
        p.sites.push_back(s);
    }
    return AfnGraph(table, std::move(p.nodes), std::move(p.sites));
}

// ---------------------------------------------------------------- JSON

std::string AfnGraph::to_json() const {
    nlohmann::ordered_json doc;
    doc["table"] = table_->tag == SpaceTag::cafe ? "cafe" : "pangaea";
    auto& jn = doc["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : nodes_) {
        nlohmann::ordered_json e;
        e["op"] = n.is_binary ? table_->binary[static_cast<std::size_t>(n.op)].name
                              : table_->unary[static_cast<std::size_t>(n.op)].name;
        if (n.is_binary)
            e["in"] = {n.in0, n.in1};
        else
            e["in"] = {n.in0};
        jn.push_back(std::move(e));
    }
    auto& je = doc["edges"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        je.push_back({{"from", nodes_[i].in0}, {"to", static_cast<int>(i)}, {"slot", 0}});
        if (nodes_[i].is_binary)
            je.push_back({{"from", nodes_[i].in1}, {"to", static_cast<int>(i)}, {"slot", 1}});
    }
    je.push_back({{"from", root()}, {"to", kOutputEdge}, {"slot", 0}});
    auto& jp = doc["params"] = nlohmann::ordered_json::array();
    for (const auto& s : sites_) {
        jp.push_back({{"node", s.node},
                      {"slot", s.slot},
                      {"label", to_string(s.label)},
                      {"granularity", to_string(s.granularity)},
                      {"init", s.init_value}});
    }
    doc["defaults"] = {{"alpha", param_defaults_[0]},
                       {"beta", param_defaults_[1]},
                       {"gamma", param_defaults_[2]}};
    return doc.dump();
}

AfnGraph AfnGraph::from_json(std::string_view doc) {
    const auto j = nlohmann::json::parse(doc);
    const std::string tab = j.at("table").get<std::string>();
    const OperatorTable& table = tab == "cafe" ? OperatorTable::cafe() : OperatorTable::pangaea();
    std::vector<GNode> nodes;
    for (const auto& e : j.at("nodes")) {
        const std::string op = e.at("op").get<std::string>();
        const auto& in = e.at("in");
        GNode n;
        if (in.size() == 2) {
            const int bi = table.find_binary(op);
            if (bi < 0) throw std::runtime_error("unknown binary operator: " + op);
            n.is_binary = true;
            n.op = static_cast<std::int16_t>(bi);
            n.in0 = in[0].get<int>();
            n.in1 = in[1].get<int>();
        } else {
            const int ui = table.find_unary(op);
            if (ui < 0) throw std::runtime_error("unknown unary operator: " + op);
            n.is_binary = false;
            n.op = static_cast<std::int16_t>(ui);
            n.in0 = in[0].get<int>();
        }
        nodes.push_back(n);
    }
    std::vector<ParamSite> sites;
    if (j.contains("params")) {
        for (const auto& e : j.at("params")) {
            ParamSite s;
            s.node = e.at("node").get<int>();
            s.slot = e.at("slot").get<int>();
            const std::string lab = e.at("label").get<std::string>();
            if (lab == "alpha")
                s.label = ParamLabel::alpha;
            else if (lab == "beta")
                s.label = ParamLabel::beta;
            else if (lab == "gamma")
                s.label = ParamLabel::gamma;
            else
                throw std::runtime_error("unknown param label: " + lab);
            if (e.contains("granularity")) {
                const std::string g = e.at("granularity").get<std::string>();
                if (g == "per-layer")
                    s.granularity = ParamGranularity::per_layer;
                else if (g == "per-neuron")
                    s.granularity = ParamGranularity::per_neuron;
                else
                    s.granularity = ParamGranularity::per_channel;
            }
            if (e.contains("init")) s.init_value = e.at("init").get<double>();
            sites.push_back(s);
        }
    }
    AfnGraph g(table, std::move(nodes), std::move(sites));
    if (j.contains("defaults")) {
        const auto& d = j.at("defaults");
        g.set_param_default(ParamLabel::alpha, d.value("alpha", 1.0));
        g.set_param_default(ParamLabel::beta, d.value("beta", 1.0));
        g.set_param_default(ParamLabel::gamma, d.value("gamma", 1.0));
    }
    return g;
}

// ---------------------------------------------------------------- fingerprint

namespace {
constexpr std::uint64_t kProbeSeed = 0x0afe0afe2026ULL;
}

const std::array<double, Fingerprint::kProbes>& Fingerprint::probes() {
    static const std::array<double, kProbes> p = [] {
        std::array<double, kProbes> out{};
        Rng rng(kProbeSeed);
        for (auto& v : out) {
            double z = rng.normal();
            if (z > 5.0) z = 5.0;
            if (z < -5.0) z = -5.0;
            v = z;
        }
        return out;
    }();
    return p;
}

Fingerprint::Fingerprint(std::array<double, kProbes> outputs) : outputs_(outputs) {
    static_assert(std::endian::native == std::endian::little,
                  "canonical fingerprint bytes assume little-endian");
    key_.resize(kProbes * sizeof(double));
    for (std::size_t i = 0; i < kProbes; ++i) {
        double v = outputs_[i];
        std::uint64_t bits;
        if (std::isnan(v))
            bits = 0x7ff8000000000000ULL;  // canonical quiet NaN: NaN == NaN
        else
            bits = std::bit_cast<std::uint64_t>(v);
        std::memcpy(key_.data() + i * sizeof(double), &bits, sizeof(bits));
    }
}

Fingerprint AfnGraph::fingerprint() const {
    std::array<double, Fingerprint::kProbes> out{};
    const auto& xs = Fingerprint::probes();
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = eval_scalar(xs[i], param_defaults_);
    return Fingerprint(out);
}

// ---------------------------------------------------------------- constructors

AfnGraph random_initial_graph(const OperatorTable& table, Rng& rng) {
    const bool binary_form = rng.uniform() < 0.5;
    std::vector<GNode> nodes;
    if (binary_form) {
        GNode u1{false, static_cast<std::int16_t>(rng.index(table.unary.size())), kInputX, kInputX};
        GNode u2{false, static_cast<std::int16_t>(rng.index(table.unary.size())), kInputX, kInputX};
        GNode b{true, static_cast<std::int16_t>(rng.index(table.binary.size())), 0, 1};
        nodes = {u1, u2, b};
    } else {
        GNode inner{false, static_cast<std::int16_t>(rng.index(table.unary.size())), kInputX,
                    kInputX};
        GNode outer{false, static_cast<std::int16_t>(rng.index(table.unary.size())), 0, kInputX};
        nodes = {inner, outer};
    }
    return AfnGraph(table, std::move(nodes));
}

namespace {

struct TreeBuf {
    std::vector<GNode> nodes;
    std::vector<ParamSite> sites;

    int add_unary(const OperatorTable& t, const char* name, int in, int label = -1) {
        GNode n;
        n.is_binary = false;
        n.op = static_cast<std::int16_t>(t.find_unary(name));
        n.in0 = in;
        nodes.push_back(n);
        const int idx = static_cast<int>(nodes.size()) - 1;
        if (label >= 0) add_site(idx, 0, label);
        return idx;
    }
    int add_binary(const OperatorTable& t, const char* name, int in0, int in1) {
        GNode n;
        n.is_binary = true;
        n.op = static_cast<std::int16_t>(t.find_binary(name));
        n.in0 = in0;
        n.in1 = in1;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    void add_site(int node, int slot, int label) {
        ParamSite s;
        s.node = node;
        s.slot = slot;
        s.label = static_cast<ParamLabel>(label);
        sites.push_back(s);
    }
};

// max{bound - x, 0} / (bound - x); the bound enters as label * one(x)
int one_sided(TreeBuf& b, const OperatorTable& t, int label, bool lower) {
    const int one1 = b.add_unary(t, "one", kInputX);
    const int t1 = b.add_binary(t, "sub", one1, kInputX);
    b.add_site(t1, 0, label);
    const int z = b.add_unary(t, "zero", kInputX);
    const int clip = b.add_binary(t, lower ? "max" : "min", t1, z);
    const int one2 = b.add_unary(t, "one", kInputX);
    const int t2 = b.add_binary(t, "sub", one2, kInputX);
    b.add_site(t2, 0, label);
    return b.add_binary(t, "div", clip, t2);
}

}  // namespace

AfnGraph build_indicator(IndicatorKind kind, double a, double b, const OperatorTable& table) {
    if (table.tag != SpaceTag::pangaea)
        throw std::invalid_argument("indicator graphs require the safe-division table");
    if (kind == IndicatorKind::interval && a >= b)
        throw InvalidInterval("interval bounds require a < b");

    TreeBuf buf;
    constexpr int kAlpha = 0;
    constexpr int kBeta = 1;
    int root = -1;
    switch (kind) {
        case IndicatorKind::left_open:  // 1 iff x < b
            root = one_sided(buf, table, kBeta, /*lower=*/true);
            break;
        case IndicatorKind::right_open:  // 1 iff x > a
            root = one_sided(buf, table, kAlpha, /*lower=*/false);
            break;
        case IndicatorKind::interval: {  // 1 iff a < x < b
            const int lo = one_sided(buf, table, kBeta, true);    // x < b
            const int hi = one_sided(buf, table, kAlpha, false);  // x > a
            root = buf.add_binary(table, "mul", lo, hi);
            break;
        }
        case IndicatorKind::point: {  // 1 iff x == a
            const int lt = one_sided(buf, table, kAlpha, true);   // x < a
            const int gt = one_sided(buf, table, kAlpha, false);  // x > a
            const int o1 = buf.add_unary(table, "one", kInputX);
            const int n1 = buf.add_binary(table, "sub", o1, lt);
            const int o2 = buf.add_unary(table, "one", kInputX);
            const int n2 = buf.add_binary(table, "sub", o2, gt);
            root = buf.add_binary(table, "mul", n1, n2);
            break;
        }
    }
    (void)root;
    AfnGraph g(table, std::move(buf.nodes), std::move(buf.sites));
    switch (kind) {
        case IndicatorKind::left_open:
            g.set_param_default(ParamLabel::beta, b);
            break;
        case IndicatorKind::right_open:
        case IndicatorKind::point:
            g.set_param_default(ParamLabel::alpha, a);
            break;
        case IndicatorKind::interval:
            g.set_param_default(ParamLabel::alpha, a);
            g.set_param_default(ParamLabel::beta, b);
            break;
    }
    return g;
}

}  // namespace actevo
