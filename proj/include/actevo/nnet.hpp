#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "actevo/graph.hpp"
#include "actevo/rng.hpp"

namespace actevo {

enum class DataKind { xor_points, two_moons, spirals, csv };
DataKind data_kind_from(std::string_view name);
const char* to_string(DataKind k);

class MalformedCsv : public std::runtime_error {
  public:
    MalformedCsv(const std::string& what, int row, int column)
        : std::runtime_error(what), row(row), column(column) {}
    int row;     // 1-based data row (header excluded)
    int column;  // 1-based
};

struct Dataset {
    Eigen::MatrixXd x;  // rows are examples, columns standardized
    std::vector<int> y;
    std::vector<int> train_index;
    std::vector<int> val_index;  // falls back to the train rows when 10% rounds to zero
    int classes = 2;
    bool imbalance_warning = false;  // most populous class more than twice the rarest

    Eigen::MatrixXd train_features() const;
    std::vector<int> train_labels() const;
    Eigen::MatrixXd val_features() const;
    std::vector<int> val_labels() const;
    std::uint64_t hash() const;
};

// csv_path is only read for DataKind::csv; n and noise are ignored there
Dataset make_dataset(DataKind kind, int n, double noise, std::uint64_t seed,
                     const std::string& csv_path = {});
Dataset load_csv_dataset(const std::string& path, std::uint64_t seed);

enum class InitScheme { autoinit, glorot_uniform, he_normal };
InitScheme init_scheme_from(std::string_view name);
const char* to_string(InitScheme s);

struct MlpSpec {
    std::vector<int> widths;  // first = feature count, last = 1 (binary logit) or class count
    AfnGraph activation;
    ParamGranularity granularity = ParamGranularity::per_layer;
    InitScheme init = InitScheme::autoinit;
};

struct TrainConfig {
    int epochs = 100;
    int batch = 32;
    double lr = 0.05;
    std::vector<int> decay_epochs;  // strictly increasing, 0-based
    double decay_factor = 0.2;
    double momentum = 0.9;
    bool nesterov = false;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

enum class TrainStatus { completed, failed_nonfinite };
const char* to_string(TrainStatus s);

struct TrainResult {
    TrainStatus status = TrainStatus::completed;
    std::vector<double> train_acc, train_loss, val_acc, val_loss;  // one entry per finished epoch
    double final_val_acc = 0.0;
    double final_val_loss = 0.0;
    double wall_seconds = 0.0;
    std::string to_json() const;
};

// feedforward net over a flat parameter vector; layout per dense layer l:
// weights (out x in, row-major), biases, then one alpha/beta/gamma triple per
// parameter set when an activation follows
class Mlp {
  public:
    Mlp(const MlpSpec& spec, const Dataset& data, std::uint64_t seed);

    std::size_t param_count() const { return theta_.size(); }
    const std::vector<double>& parameters() const { return theta_; }
    void set_parameters(const std::vector<double>& v);
    bool weights_finite() const;

    double mean_loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const;
    double accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y) const;
    // mean data-loss gradient over the rows; weight decay is the trainer's job
    std::vector<double> mean_gradient(const Eigen::MatrixXd& x, const std::vector<int>& y) const;
    // gradient of one example's negative log-likelihood with the label drawn
    // from the model's own predictive distribution
    std::vector<double> sampled_label_gradient(const Eigen::RowVectorXd& x, Rng& rng) const;

    // true for parameter indices subject to weight decay (dense weights only)
    const std::vector<char>& decay_mask() const { return decay_mask_; }
    Eigen::MatrixXd activation_params(int layer) const;  // sets x 3 copy
    int activation_param_sets(int layer) const;
    const MlpSpec& spec() const { return spec_; }

  private:
    struct Layout {
        std::size_t w_off, b_off, p_off;
        int in, out, sets;
    };
    MlpSpec spec_;
    std::vector<Layout> layout_;
    std::vector<double> theta_;
    std::vector<char> decay_mask_;
    int out_width_ = 1;

    friend TrainResult train_mlp(Mlp& m, const Dataset& data, const TrainConfig& cfg);
    double example_loss_grad(const Eigen::RowVectorXd& x, int label,
                             std::vector<double>* grad) const;
};

TrainResult train_mlp(Mlp& m, const Dataset& data, const TrainConfig& cfg);
// convenience path: init failures (degenerate activations) surface as
// failed_nonfinite rather than exceptions
TrainResult train(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg);

enum class FitnessMetric { accuracy, neg_loss };
inline constexpr double kFailedAccuracyFitness = 0.0;
inline constexpr double kFailedNegLossFitness = -1e6;
double fitness(const TrainResult& result, FitnessMetric metric);

struct FimSpectrum {
    std::vector<double> eigenvalues;  // descending, clamped at zero
    std::size_t samples = 0;
    double mean_sq_grad_norm = 0.0;  // equals the trace
    bool sample_count_warning = false;  // samples below parameter count
    bool gram_path = false;
};

inline constexpr std::uint64_t kFimSeedTag = 0xf13a57a7e5ULL;
inline constexpr std::size_t kFimDenseLimit = 2000;

// empirical Fisher information spectrum at initialization; per draw: a train
// row chosen uniformly, a label sampled from the predictive distribution,
// then that example's gradient outer product
FimSpectrum fim_spectrum(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg,
                         int samples, bool force_gram = false);

// flat little-endian float64 parameter dump plus a JSON sidecar manifest
void save_checkpoint(const Mlp& m, const std::string& bin_path, const std::string& json_path);
void load_checkpoint(Mlp& m, const std::string& bin_path);

}  // namespace actevo
