#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memcap/data.hpp"
#include "memcap/linalg.hpp"

namespace memcap {

/// Fully-connected ReLU network description.
///
/// num_classes >= 2 selects a softmax cross-entropy head. num_classes == 1
/// selects a scalar head trained with squared loss against targets -1/+1,
/// where label 0 maps to -1 and label 1 to +1.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  int num_classes = 2;
  double weight_decay = 0.0;  // l2 coefficient on weights (biases excluded)

  bool scalar_head() const { return num_classes == 1; }
  void validate() const;
  /// "784-512-512-10" style shape string.
  std::string shape_string() const;
};

/// Parses "1x512", "3x512" or a comma list "512,256" into hidden widths.
std::vector<std::size_t> parse_hidden_widths(std::string_view text);

struct LayerShape {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;  // fan_in x fan_out, row-major
  std::size_t bias_offset = 0;    // fan_out
};

/// Flat parameter storage. Layer l's weights are a row-major fan_in x fan_out
/// block followed by its bias vector.
class MlpParams {
 public:
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;

  MlpParams() = default;
  explicit MlpParams(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  const std::vector<LayerShape>& layers() const { return layers_; }

  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }
  std::size_t size() const { return static_cast<std::size_t>(flat_.size()); }

  WeightMap weights(std::size_t layer);
  ConstWeightMap weights(std::size_t layer) const;
  Eigen::Map<Eigen::RowVectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::RowVectorXd> bias(std::size_t layer) const;

  /// Sum of squared weights, biases excluded.
  double weight_norm_squared() const;

  /// Binary format: one text header line, then little-endian float64 values.
  void save(const std::filesystem::path& path, std::uint64_t seed) const;
  static MlpParams load(const std::filesystem::path& path);

 private:
  MlpSpec spec_;
  std::vector<LayerShape> layers_;
  Vector flat_;
};

/// Sum over layers of fan_in * fan_out + fan_out.
std::size_t param_count(const MlpSpec& spec);

/// He initialization: N(0, 2 / fan_in) weights, zero biases.
MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Mean loss over the batch plus (weight_decay / 2) * ||weights||^2, and its
/// gradient with respect to params.flat(). Throws NumericError on overflow.
LossGrad loss_and_grad(const MlpParams& params, const Eigen::Ref<const Matrix>& features,
                       std::span<const int> labels, double weight_decay);

/// Raw network outputs: n x num_classes (n x 1 for the scalar head).
Matrix forward(const MlpParams& params, const Eigen::Ref<const Matrix>& features);

/// Predicted class per row. Softmax head: argmax with ties to the smallest
/// index. Scalar head: 1 when the output is >= 0, else 0.
std::vector<int> predict_classes(const MlpParams& params, const Eigen::Ref<const Matrix>& features);

struct Evaluation {
  double loss = 0.0;      // mean data loss, no weight decay
  double accuracy = 0.0;  // in [0, 1]
};

Evaluation evaluate(const MlpParams& params, const Dataset& ds);

struct TrainConfig {
  double initial_lr = 0.01;
  double lr_decay_per_epoch = 0.95;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  double fit_threshold = 0.999;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate used during 0-based epoch e: initial_lr * decay^e.
  double lr_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0-based
  double lr = 0.0;        // rate used during this epoch
  double train_loss = 0.0;
  double train_acc = 0.0;  // measured after the epoch on the whole training set
  double seconds = 0.0;
};

struct TrainTrace {
  double initial_loss = 0.0;
  double initial_acc = 0.0;
  std::vector<EpochRecord> epochs;
  /// Epochs completed before the first window of two consecutive evaluations
  /// at or above fit_threshold (the untrained model counts as evaluation 0).
  std::optional<std::size_t> steps_to_fit;
  MlpParams final_params;

  double final_acc() const { return epochs.empty() ? initial_acc : epochs.back().train_acc; }
  /// CSV with header epoch,lr,train_loss,train_acc,seconds.
  std::string to_csv() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD with heavy-ball momentum (v = m v - lr g; w += v). Data is
/// reshuffled every epoch and the last partial batch is kept. Stops after
/// max_epochs or once fit_threshold holds for two consecutive evaluations.
TrainTrace train(MlpParams params, const Dataset& ds, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

}  // namespace memcap
