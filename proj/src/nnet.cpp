#include "actevo/nnet.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "actevo/autoinit.hpp"

namespace actevo {
namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// binary cross entropy from the logit, safe for huge |z|
double logit_bce(double z, int y) {
    return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::fabs(z)));
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void standardize(Eigen::MatrixXd& x) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        x.col(c).array() -= mean;
        double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(x.rows()));
        if (sd < 1e-12) sd = 1.0;
        x.col(c) /= sd;
    }
}

void split_and_flag(Dataset& d, Rng& rng) {
    const int classes =
        d.y.empty() ? 0 : *std::max_element(d.y.begin(), d.y.end()) + 1;
    d.classes = std::max(classes, 2);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(d.classes));
    for (std::size_t i = 0; i < d.y.size(); ++i)
        by_class[static_cast<std::size_t>(d.y[i])].push_back(static_cast<int>(i));

    std::size_t lo = d.y.size(), hi = 0;
    for (const auto& c : by_class) {
        if (c.empty()) continue;
        lo = std::min(lo, c.size());
        hi = std::max(hi, c.size());
    }
    d.imbalance_warning = hi > 2 * lo;

    d.train_index.clear();
    d.val_index.clear();
    for (auto& members : by_class) {
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[rng.index(i)]);
        const std::size_t val_n =
            static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < members.size(); ++i)
            (i < val_n ? d.val_index : d.train_index).push_back(members[i]);
    }
    std::sort(d.train_index.begin(), d.train_index.end());
    std::sort(d.val_index.begin(), d.val_index.end());
    if (d.val_index.empty()) d.val_index = d.train_index;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

DataKind data_kind_from(std::string_view name) {
    if (name == "xor") return DataKind::xor_points;
    if (name == "two_moons") return DataKind::two_moons;
    if (name == "spirals") return DataKind::spirals;
    if (name == "csv") return DataKind::csv;
    throw std::invalid_argument("unknown dataset kind: " + std::string(name));
}

const char* to_string(DataKind k) {
    switch (k) {
        case DataKind::xor_points: return "xor";
        case DataKind::two_moons: return "two_moons";
        case DataKind::spirals: return "spirals";
        case DataKind::csv: return "csv";
    }
    return "?";
}

Eigen::MatrixXd Dataset::train_features() const { return gather(x, train_index); }
std::vector<int> Dataset::train_labels() const { return gather_labels(y, train_index); }
Eigen::MatrixXd Dataset::val_features() const { return gather(x, val_index); }
std::vector<int> Dataset::val_labels() const { return gather_labels(y, val_index); }

std::uint64_t Dataset::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double v = x(r, c);
            h = fnv1a(&v, sizeof v, h);
        }
    for (int label : y) {
        const std::int64_t v = label;
        h = fnv1a(&v, sizeof v, h);
    }
    for (int i : train_index) {
        const std::int64_t v = i;
        h = fnv1a(&v, sizeof v, h);
    }
    for (int i : val_index) {
        const std::int64_t v = ~static_cast<std::int64_t>(i);
        h = fnv1a(&v, sizeof v, h);
    }
    return h;
}

Dataset load_csv_dataset(const std::string& path, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw MalformedCsv("cannot open csv file: " + path, 0, 0);
    std::string line;
    if (!std::getline(in, line)) throw MalformedCsv("csv file has no header", 0, 0);
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : s) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        return cells;
    };
    const std::size_t cols = split(line).size();
    if (cols < 2) throw MalformedCsv("csv needs at least one feature and a label column", 0, 0);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int rownum = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rownum;
        const auto cells = split(line);
        if (cells.size() != cols)
            throw MalformedCsv("row " + std::to_string(rownum) + " has " +
                                   std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(cols),
                               rownum, static_cast<int>(cells.size()));
        std::vector<double> feats;
        for (std::size_t c = 0; c + 1 < cols; ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cells[c].size() || cells[c].empty())
                throw MalformedCsv("non-numeric cell at row " + std::to_string(rownum) +
                                       ", column " + std::to_string(c + 1),
                                   rownum, static_cast<int>(c + 1));
            feats.push_back(v);
        }
        const std::string& lab = cells[cols - 1];
        std::size_t used = 0;
        long y = 0;
        try {
            y = std::stol(lab, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != lab.size() || lab.empty() || y < 0)
            throw MalformedCsv("label must be a nonnegative integer at row " +
                                   std::to_string(rownum) + ", column " + std::to_string(cols),
                               rownum, static_cast<int>(cols));
        rows.push_back(std::move(feats));
        labels.push_back(static_cast<int>(y));
    }
    if (rows.empty()) throw MalformedCsv("csv file has no data rows", 0, 0);

    Dataset d;
    d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 1));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c + 1 < cols; ++c)
            d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    d.y = std::move(labels);
    standardize(d.x);
    Rng rng(seed);
    split_and_flag(d, rng);
    return d;
}

Dataset make_dataset(DataKind kind, int n, double noise, std::uint64_t seed,
                     const std::string& csv_path) {
    if (kind == DataKind::csv) return load_csv_dataset(csv_path, seed);
    if (n < 4) throw std::invalid_argument("datasets need at least 4 points");
    Rng rng(seed);
    Dataset d;
    d.x.resize(n, 2);
    d.y.resize(static_cast<std::size_t>(n));
    switch (kind) {
        case DataKind::xor_points: {
            static const double corner[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
            static const int label[4] = {0, 1, 1, 0};
            for (int i = 0; i < n; ++i) {
                const int c = i % 4;
                d.x(i, 0) = corner[c][0] + noise * rng.normal();
                d.x(i, 1) = corner[c][1] + noise * rng.normal();
                d.y[static_cast<std::size_t>(i)] = label[c];
            }
            break;
        }
        case DataKind::two_moons: {
            for (int i = 0; i < n; ++i) {
                const int c = i % 2;
                const double t = rng.uniform() * 3.14159265358979323846;
                double px, py;
                if (c == 0) {
                    px = std::cos(t);
                    py = std::sin(t);
                } else {
                    px = 1.0 - std::cos(t);
                    py = 0.5 - std::sin(t);
                }
                d.x(i, 0) = px + noise * rng.normal();
                d.x(i, 1) = py + noise * rng.normal();
                d.y[static_cast<std::size_t>(i)] = c;
            }
            break;
        }
        case DataKind::spirals: {
            for (int i = 0; i < n; ++i) {
                const int c = i % 2;
                const double u = 0.15 + 0.85 * rng.uniform();
                const double angle = u * 3.0 * 3.14159265358979323846 + c * 3.14159265358979323846;
                d.x(i, 0) = u * std::cos(angle) + noise * rng.normal();
                d.x(i, 1) = u * std::sin(angle) + noise * rng.normal();
                d.y[static_cast<std::size_t>(i)] = c;
            }
            break;
        }
        case DataKind::csv:
            break;  // handled above
    }
    standardize(d.x);
    split_and_flag(d, rng);
    return d;
}

InitScheme init_scheme_from(std::string_view name) {
    if (name == "autoinit") return InitScheme::autoinit;
    if (name == "glorot-uniform" || name == "glorot_uniform") return InitScheme::glorot_uniform;
    if (name == "he-normal" || name == "he_normal") return InitScheme::he_normal;
    throw std::invalid_argument("unknown init scheme: " + std::string(name));
}

const char* to_string(InitScheme s) {
    switch (s) {
        case InitScheme::autoinit: return "autoinit";
        case InitScheme::glorot_uniform: return "glorot-uniform";
        case InitScheme::he_normal: return "he-normal";
    }
    return "?";
}

const char* to_string(TrainStatus s) {
    return s == TrainStatus::completed ? "completed" : "failed_nonfinite";
}

Mlp::Mlp(const MlpSpec& spec, const Dataset& data, std::uint64_t seed) : spec_(spec) {
    const auto& w = spec_.widths;
    if (w.size() < 2) throw std::invalid_argument("network needs at least input and output widths");
    for (int width : w)
        if (width < 1) throw std::invalid_argument("layer widths must be positive");
    if (w.front() != data.x.cols())
        throw std::invalid_argument("input width does not match the dataset feature count");
    out_width_ = w.back();
    if (out_width_ != 1 && out_width_ != data.classes)
        throw std::invalid_argument("output width must be 1 (binary logit) or the class count");
    if (out_width_ == 1 && data.classes != 2)
        throw std::invalid_argument("single-logit output needs binary labels");
    if (spec_.activation.node_count() == 0)
        throw std::invalid_argument("activation graph is empty");

    const int layers = static_cast<int>(w.size()) - 1;
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
        Layout lay;
        lay.in = w[static_cast<std::size_t>(l)];
        lay.out = w[static_cast<std::size_t>(l) + 1];
        lay.sets = 0;
        if (l < layers - 1)
            lay.sets = spec_.granularity == ParamGranularity::per_layer ? 1 : lay.out;
        lay.w_off = off;
        off += static_cast<std::size_t>(lay.in) * static_cast<std::size_t>(lay.out);
        lay.b_off = off;
        off += static_cast<std::size_t>(lay.out);
        lay.p_off = off;
        off += static_cast<std::size_t>(lay.sets) * 3;
        layout_.push_back(lay);
    }
    theta_.assign(off, 0.0);
    decay_mask_.assign(off, 0);

    Rng rng(seed);
    MomentPair m{0.0, 1.0};  // standardized features
    for (int l = 0; l < layers; ++l) {
        const Layout& lay = layout_[static_cast<std::size_t>(l)];
        const std::size_t wn = static_cast<std::size_t>(lay.in) * static_cast<std::size_t>(lay.out);
        switch (spec_.init) {
            case InitScheme::autoinit: {
                const double sd = dense_init_scale(lay.in, m);
                for (std::size_t i = 0; i < wn; ++i) theta_[lay.w_off + i] = sd * rng.normal();
                break;
            }
            case InitScheme::glorot_uniform: {
                const double a = glorot_uniform_halfwidth(lay.in, lay.out);
                for (std::size_t i = 0; i < wn; ++i) theta_[lay.w_off + i] = rng.uniform(-a, a);
                break;
            }
            case InitScheme::he_normal: {
                const double sd = he_normal_std(lay.in);
                for (std::size_t i = 0; i < wn; ++i) theta_[lay.w_off + i] = sd * rng.normal();
                break;
            }
        }
        for (std::size_t i = 0; i < wn; ++i) decay_mask_[lay.w_off + i] = 1;
        // biases start at zero; activation parameters at the graph defaults
        const auto& defaults = spec_.activation.param_defaults();
        for (int s = 0; s < lay.sets; ++s)
            for (int k = 0; k < 3; ++k)
                theta_[lay.p_off + static_cast<std::size_t>(s) * 3 + static_cast<std::size_t>(k)] =
                    defaults[static_cast<std::size_t>(k)];
        if (l < layers - 1 && spec_.init == InitScheme::autoinit)
            m = activation_moments(spec_.activation, {0.0, 1.0});
    }
}

void Mlp::set_parameters(const std::vector<double>& v) {
    if (v.size() != theta_.size()) throw std::invalid_argument("parameter count mismatch");
    theta_ = v;
}

bool Mlp::weights_finite() const {
    for (double v : theta_)
        if (!std::isfinite(v)) return false;
    return true;
}

int Mlp::activation_param_sets(int layer) const {
    return layout_.at(static_cast<std::size_t>(layer)).sets;
}

Eigen::MatrixXd Mlp::activation_params(int layer) const {
    const Layout& lay = layout_.at(static_cast<std::size_t>(layer));
    Eigen::MatrixXd out(lay.sets, 3);
    for (int s = 0; s < lay.sets; ++s)
        for (int k = 0; k < 3; ++k)
            out(s, k) =
                theta_[lay.p_off + static_cast<std::size_t>(s) * 3 + static_cast<std::size_t>(k)];
    return out;
}

// forward pass plus, when grad is non-null, backprop into *grad (accumulated)
double Mlp::example_loss_grad(const Eigen::RowVectorXd& x, int label,
                              std::vector<double>* grad) const {
    const int layers = static_cast<int>(layout_.size());
    std::vector<Eigen::VectorXd> acts(static_cast<std::size_t>(layers) + 1);
    std::vector<std::vector<DualResult>> duals(static_cast<std::size_t>(layers));
    acts[0] = x.transpose();
    for (int l = 0; l < layers; ++l) {
        const Layout& lay = layout_[static_cast<std::size_t>(l)];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
            theta_.data() + lay.w_off, lay.out, lay.in);
        Eigen::Map<const Eigen::VectorXd> b(theta_.data() + lay.b_off, lay.out);
        Eigen::VectorXd z = W * acts[static_cast<std::size_t>(l)] + b;
        if (l == layers - 1) {
            acts[static_cast<std::size_t>(l) + 1] = std::move(z);
            break;
        }
        auto& dl = duals[static_cast<std::size_t>(l)];
        dl.resize(static_cast<std::size_t>(lay.out));
        Eigen::VectorXd a(lay.out);
        for (int i = 0; i < lay.out; ++i) {
            const int set = lay.sets == 1 ? 0 : i;
            std::array<double, 3> p;
            for (int k = 0; k < 3; ++k)
                p[static_cast<std::size_t>(k)] =
                    theta_[lay.p_off + static_cast<std::size_t>(set) * 3 +
                           static_cast<std::size_t>(k)];
            dl[static_cast<std::size_t>(i)] = spec_.activation.eval_dual(z(i), p);
            a(i) = dl[static_cast<std::size_t>(i)].value;
        }
        acts[static_cast<std::size_t>(l) + 1] = std::move(a);
    }

    const Eigen::VectorXd& zout = acts[static_cast<std::size_t>(layers)];
    double loss;
    Eigen::VectorXd dz(out_width_);
    if (out_width_ == 1) {
        loss = logit_bce(zout(0), label);
        dz(0) = stable_sigmoid(zout(0)) - label;
    } else {
        const double zmax = zout.maxCoeff();
        const double lse = zmax + std::log((zout.array() - zmax).exp().sum());
        loss = lse - zout(label);
        dz = (zout.array() - lse).exp();
        dz(label) -= 1.0;
    }
    if (!grad) return loss;

    Eigen::VectorXd delta = dz;  // dL/dz of the current layer
    for (int l = layers - 1; l >= 0; --l) {
        const Layout& lay = layout_[static_cast<std::size_t>(l)];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
            theta_.data() + lay.w_off, lay.out, lay.in);
        const Eigen::VectorXd& below = acts[static_cast<std::size_t>(l)];
        for (int i = 0; i < lay.out; ++i) {
            const std::size_t row = lay.w_off + static_cast<std::size_t>(i) * lay.in;
            for (int j = 0; j < lay.in; ++j)
                (*grad)[row + static_cast<std::size_t>(j)] += delta(i) * below(j);
            (*grad)[lay.b_off + static_cast<std::size_t>(i)] += delta(i);
        }
        if (l == 0) break;
        Eigen::VectorXd ga = W.transpose() * delta;  // dL/d(activation output) below
        const Layout& prev = layout_[static_cast<std::size_t>(l) - 1];
        const auto& dl = duals[static_cast<std::size_t>(l) - 1];
        delta.resize(prev.out);
        for (int i = 0; i < prev.out; ++i) {
            const DualResult& d = dl[static_cast<std::size_t>(i)];
            delta(i) = ga(i) * d.d_dx;
            const int set = prev.sets == 1 ? 0 : i;
            const std::size_t p = prev.p_off + static_cast<std::size_t>(set) * 3;
            for (int k = 0; k < 3; ++k)
                (*grad)[p + static_cast<std::size_t>(k)] +=
                    ga(i) * d.d_dparam[static_cast<std::size_t>(k)];
        }
    }
    return loss;
}

double Mlp::mean_loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
    double total = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        total += example_loss_grad(x.row(r), y[static_cast<std::size_t>(r)], nullptr);
    return total / static_cast<double>(x.rows());
}

double Mlp::accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
    const int layers = static_cast<int>(layout_.size());
    int correct = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::VectorXd a = x.row(r).transpose();
        for (int l = 0; l < layers; ++l) {
            const Layout& lay = layout_[static_cast<std::size_t>(l)];
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                W(theta_.data() + lay.w_off, lay.out, lay.in);
            Eigen::Map<const Eigen::VectorXd> b(theta_.data() + lay.b_off, lay.out);
            Eigen::VectorXd z = W * a + b;
            if (l == layers - 1) {
                a = std::move(z);
                break;
            }
            a.resize(lay.out);
            for (int i = 0; i < lay.out; ++i) {
                const int set = lay.sets == 1 ? 0 : i;
                std::array<double, 3> p;
                for (int k = 0; k < 3; ++k)
                    p[static_cast<std::size_t>(k)] =
                        theta_[lay.p_off + static_cast<std::size_t>(set) * 3 +
                               static_cast<std::size_t>(k)];
                a(i) = spec_.activation.eval_scalar(z(i), p);
            }
        }
        int pred;
        if (out_width_ == 1) {
            pred = a(0) > 0.0 ? 1 : 0;
        } else {
            Eigen::Index arg = 0;
            a.maxCoeff(&arg);
            pred = static_cast<int>(arg);
        }
        if (pred == y[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

std::vector<double> Mlp::mean_gradient(const Eigen::MatrixXd& x,
                                       const std::vector<int>& y) const {
    std::vector<double> grad(theta_.size(), 0.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        example_loss_grad(x.row(r), y[static_cast<std::size_t>(r)], &grad);
    const double inv = 1.0 / static_cast<double>(x.rows());
    for (double& g : grad) g *= inv;
    return grad;
}

std::vector<double> Mlp::sampled_label_gradient(const Eigen::RowVectorXd& x, Rng& rng) const {
    // forward once for the predictive distribution
    const int layers = static_cast<int>(layout_.size());
    Eigen::VectorXd a = x.transpose();
    for (int l = 0; l < layers; ++l) {
        const Layout& lay = layout_[static_cast<std::size_t>(l)];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
            theta_.data() + lay.w_off, lay.out, lay.in);
        Eigen::Map<const Eigen::VectorXd> b(theta_.data() + lay.b_off, lay.out);
        Eigen::VectorXd z = W * a + b;
        if (l == layers - 1) {
            a = std::move(z);
            break;
        }
        a.resize(lay.out);
        for (int i = 0; i < lay.out; ++i) {
            const int set = lay.sets == 1 ? 0 : i;
            std::array<double, 3> p;
            for (int k = 0; k < 3; ++k)
                p[static_cast<std::size_t>(k)] =
                    theta_[lay.p_off + static_cast<std::size_t>(set) * 3 +
                           static_cast<std::size_t>(k)];
            a(i) = spec_.activation.eval_scalar(z(i), p);
        }
    }
    int label;
    if (out_width_ == 1) {
        label = rng.uniform() < stable_sigmoid(a(0)) ? 1 : 0;
    } else {
        const double zmax = a.maxCoeff();
        Eigen::VectorXd probs = (a.array() - zmax).exp();
        probs /= probs.sum();
        double pick = rng.uniform();
        label = out_width_ - 1;
        for (int i = 0; i < out_width_; ++i) {
            pick -= probs(i);
            if (pick < 0.0) {
                label = i;
                break;
            }
        }
    }
    std::vector<double> grad(theta_.size(), 0.0);
    example_loss_grad(x, label, &grad);
    return grad;
}

TrainResult train_mlp(Mlp& m, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.epochs < 0 || cfg.batch < 1) throw std::invalid_argument("bad epoch or batch count");
    if (!(cfg.lr > 0.0) || !(cfg.decay_factor > 0.0))
        throw std::invalid_argument("rates must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw std::invalid_argument("momentum must sit in [0, 1)");
    for (std::size_t i = 1; i < cfg.decay_epochs.size(); ++i)
        if (cfg.decay_epochs[i] <= cfg.decay_epochs[i - 1])
            throw std::invalid_argument("decay epochs must increase");

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    Rng rng(cfg.seed ^ 0x7a11ULL);

    const Eigen::MatrixXd train_x = data.train_features();
    const std::vector<int> train_y = data.train_labels();
    const Eigen::MatrixXd val_x = data.val_features();
    const std::vector<int> val_y = data.val_labels();

    std::vector<int> order(train_y.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> velocity(m.theta_.size(), 0.0);
    std::vector<double> grad(m.theta_.size(), 0.0);
    double lr = cfg.lr;
    std::size_t next_decay = 0;
    bool failed = false;

    for (int epoch = 0; epoch < cfg.epochs && !failed; ++epoch) {
        if (next_decay < cfg.decay_epochs.size() && cfg.decay_epochs[next_decay] == epoch) {
            lr *= cfg.decay_factor;
            ++next_decay;
        }
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(i))]);

        for (std::size_t start = 0; start < order.size() && !failed;
             start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const int r = order[i];
                batch_loss += m.example_loss_grad(train_x.row(r),
                                                  train_y[static_cast<std::size_t>(r)], &grad);
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss)) {
                failed = true;
                break;
            }
            for (std::size_t k = 0; k < grad.size(); ++k) {
                double g = grad[k] * inv;
                if (m.decay_mask_[k]) g += cfg.weight_decay * m.theta_[k];
                velocity[k] = cfg.momentum * velocity[k] + g;
                const double step = cfg.nesterov ? g + cfg.momentum * velocity[k] : velocity[k];
                m.theta_[k] -= lr * step;
            }
            if (!m.weights_finite()) failed = true;
        }
        if (failed) break;
        res.train_acc.push_back(m.accuracy(train_x, train_y));
        res.train_loss.push_back(m.mean_loss(train_x, train_y));
        res.val_acc.push_back(m.accuracy(val_x, val_y));
        res.val_loss.push_back(m.mean_loss(val_x, val_y));
    }

    if (failed) {
        res.status = TrainStatus::failed_nonfinite;
        if (!res.val_acc.empty()) {
            res.final_val_acc = res.val_acc.back();
            res.final_val_loss = res.val_loss.back();
        } else {
            res.final_val_acc = 0.0;
            res.final_val_loss = std::numeric_limits<double>::quiet_NaN();
        }
    } else {
        res.status = TrainStatus::completed;
        if (res.val_acc.empty()) {
            res.final_val_acc = m.accuracy(val_x, val_y);
            res.final_val_loss = m.mean_loss(val_x, val_y);
        } else {
            res.final_val_acc = res.val_acc.back();
            res.final_val_loss = res.val_loss.back();
        }
    }
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

TrainResult train(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    try {
        Mlp m(spec, data, cfg.seed);
        return train_mlp(m, data, cfg);
    } catch (const QuadratureNonConvergence&) {
    } catch (const std::invalid_argument&) {
    }
    // degenerate activation statistics at init count as a training failure
    TrainResult res;
    res.status = TrainStatus::failed_nonfinite;
    res.final_val_acc = 0.0;
    res.final_val_loss = std::numeric_limits<double>::quiet_NaN();
    return res;
}

double fitness(const TrainResult& result, FitnessMetric metric) {
    const bool failed = result.status == TrainStatus::failed_nonfinite;
    if (metric == FitnessMetric::accuracy)
        return failed ? kFailedAccuracyFitness : result.final_val_acc;
    return failed ? kFailedNegLossFitness : -result.final_val_loss;
}

std::string TrainResult::to_json() const {
    nlohmann::ordered_json doc;
    doc["status"] = to_string(status);
    doc["train_acc"] = train_acc;
    doc["train_loss"] = train_loss;
    doc["val_acc"] = val_acc;
    doc["val_loss"] = val_loss;
    doc["final_val_acc"] = final_val_acc;
    if (std::isfinite(final_val_loss))
        doc["final_val_loss"] = final_val_loss;
    else
        doc["final_val_loss"] = nullptr;
    doc["wall_seconds"] = wall_seconds;
    return doc.dump(2);
}

FimSpectrum fim_spectrum(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg,
                         int samples, bool force_gram) {
    if (samples < 1) throw std::invalid_argument("sample count must be positive");
    Mlp m(spec, data, cfg.seed);
    const std::size_t p = m.param_count();
    const Eigen::MatrixXd train_x = data.train_features();
    Rng rng(cfg.seed ^ kFimSeedTag);

    FimSpectrum out;
    out.samples = static_cast<std::size_t>(samples);
    out.sample_count_warning = static_cast<std::size_t>(samples) < p;
    out.gram_path = force_gram || p > kFimDenseLimit;

    const auto n = static_cast<std::size_t>(train_x.rows());
    double sq_norm = 0.0;
    Eigen::MatrixXd fim;
    Eigen::MatrixXd rows;
    if (out.gram_path)
        rows.resize(samples, static_cast<Eigen::Index>(p));
    else
        fim = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));

    for (int s = 0; s < samples; ++s) {
        const auto r = static_cast<Eigen::Index>(rng.index(n));
        const std::vector<double> g = m.sampled_label_gradient(train_x.row(r), rng);
        Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(p));
        sq_norm += gv.squaredNorm();
        if (out.gram_path)
            rows.row(s) = gv.transpose();
        else
            fim.noalias() += gv * gv.transpose();
    }
    const double inv = 1.0 / static_cast<double>(samples);
    out.mean_sq_grad_norm = sq_norm * inv;

    Eigen::VectorXd eig;
    if (out.gram_path) {
        const Eigen::MatrixXd gram = rows * rows.transpose() * inv;
        eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues();
    } else {
        fim *= inv;
        eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fim).eigenvalues();
    }
    out.eigenvalues.resize(static_cast<std::size_t>(eig.size()));
    for (Eigen::Index i = 0; i < eig.size(); ++i)
        out.eigenvalues[static_cast<std::size_t>(i)] =
            std::max(eig(eig.size() - 1 - i), 0.0);  // ascending solver, tiny negatives clamp
    return out;
}

void save_checkpoint(const Mlp& m, const std::string& bin_path, const std::string& json_path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer assumes little-endian doubles");
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + bin_path);
    const auto& theta = m.parameters();
    bin.write(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::streamsize>(theta.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("short write to " + bin_path);

    nlohmann::ordered_json doc;
    doc["dtype"] = "float64-le";
    doc["param_count"] = theta.size();
    doc["widths"] = m.spec().widths;
    doc["activation"] = m.spec().activation.format();
    doc["granularity"] = to_string(m.spec().granularity);
    doc["init"] = to_string(m.spec().init);
    doc["layout"] = "per dense layer: row-major weights, biases, activation parameter triples";
    std::ofstream side(json_path);
    if (!side) throw std::runtime_error("cannot open " + json_path);
    side << doc.dump(2) << "\n";
}

void load_checkpoint(Mlp& m, const std::string& bin_path) {
    std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
    if (!bin) throw std::runtime_error("cannot open " + bin_path);
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    if (bytes != m.param_count() * sizeof(double))
        throw std::runtime_error("checkpoint size does not match the model");
    bin.seekg(0);
    std::vector<double> theta(m.param_count());
    bin.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(bytes));
    if (!bin) throw std::runtime_error("short read from " + bin_path);
    m.set_parameters(theta);
}

}  // namespace actevo
