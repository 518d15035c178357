#include "memcap/net.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "memcap/error.hpp"
#include "memcap/rng.hpp"

namespace memcap {

namespace {

constexpr std::string_view kParamsMagic = "memcap-mlp-v1";
constexpr Eigen::Index kEvalChunk = 2048;

std::vector<LayerShape> layout(const MlpSpec& spec) {
  std::vector<LayerShape> layers;
  std::size_t fan_in = spec.input_dim;
  std::size_t offset = 0;
  auto push = [&](std::size_t fan_out) {
    LayerShape s{fan_in, fan_out, offset, offset + fan_in * fan_out};
    offset = s.bias_offset + fan_out;
    layers.push_back(s);
    fan_in = fan_out;
  };
  for (auto w : spec.hidden_widths) push(w);
  push(static_cast<std::size_t>(spec.num_classes));
  return layers;
}

double target_of(int label) { return label == 0 ? -1.0 : 1.0; }

// Per-row data loss and, when requested, d(mean loss)/d(outputs).
double head_loss(const MlpSpec& spec, const Matrix& out, std::span<const int> labels,
                 Matrix* d_out) {
  const auto n = out.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  if (d_out != nullptr) d_out->resize(n, out.cols());
  if (spec.scalar_head()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = out(i, 0) - target_of(labels[i]);
      total += 0.5 * e * e;
      if (d_out != nullptr) (*d_out)(i, 0) = e * inv_n;
    }
    return total * inv_n;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = out.row(i);
    const double peak = row.maxCoeff();
    const double sum = (row.array() - peak).exp().sum();
    const double log_z = peak + std::log(sum);
    total += log_z - row(labels[i]);
    if (d_out != nullptr) {
      d_out->row(i) = ((row.array() - log_z).exp() * inv_n).matrix();
      (*d_out)(i, labels[i]) -= inv_n;
    }
  }
  return total * inv_n;
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim == 0) throw ValidationError("MLP input_dim must be positive");
  if (num_classes < 1) throw ValidationError("MLP num_classes must be >= 1 (1 = scalar head)");
  for (auto w : hidden_widths) {
    if (w == 0) throw ValidationError("MLP hidden widths must be positive");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("weight_decay must be a nonnegative finite number");
  }
}

std::string MlpSpec::shape_string() const {
  std::ostringstream os;
  os << input_dim;
  for (auto w : hidden_widths) os << '-' << w;
  os << '-' << num_classes;
  return os.str();
}

std::vector<std::size_t> parse_hidden_widths(std::string_view text) {
  auto to_size = [&](std::string_view s) -> std::size_t {
    std::size_t v = 0;
    if (s.empty()) throw ValidationError("bad hidden-layer spec '" + std::string(text) + "'");
    for (char c : s) {
      if (c < '0' || c > '9') throw ValidationError("bad hidden-layer spec '" + std::string(text) + "'");
      v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
  };
  std::vector<std::size_t> widths;
  if (text.empty()) return widths;
  if (const auto x = text.find('x'); x != std::string_view::npos) {
    const std::size_t depth = to_size(text.substr(0, x));
    const std::size_t width = to_size(text.substr(x + 1));
    widths.assign(depth, width);
  } else {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      const auto end = comma == std::string_view::npos ? text.size() : comma;
      widths.push_back(to_size(text.substr(start, end - start)));
      start = end + 1;
    }
  }
  for (auto w : widths) {
    if (w == 0) throw ValidationError("bad hidden-layer spec '" + std::string(text) + "'");
  }
  return widths;
}

MlpParams::MlpParams(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  layers_ = layout(spec_);
  flat_ = Vector::Zero(static_cast<Eigen::Index>(layers_.back().bias_offset + layers_.back().fan_out));
}

MlpParams::WeightMap MlpParams::weights(std::size_t layer) {
  const auto& s = layers_.at(layer);
  return {flat_.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_in),
          static_cast<Eigen::Index>(s.fan_out)};
}

MlpParams::ConstWeightMap MlpParams::weights(std::size_t layer) const {
  const auto& s = layers_.at(layer);
  return {flat_.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_in),
          static_cast<Eigen::Index>(s.fan_out)};
}

Eigen::Map<Eigen::RowVectorXd> MlpParams::bias(std::size_t layer) {
  const auto& s = layers_.at(layer);
  return {flat_.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out)};
}

Eigen::Map<const Eigen::RowVectorXd> MlpParams::bias(std::size_t layer) const {
  const auto& s = layers_.at(layer);
  return {flat_.data() + s.bias_offset, static_cast<Eigen::Index>(s.fan_out)};
}

double MlpParams::weight_norm_squared() const {
  double total = 0.0;
  for (std::size_t l = 0; l < layers_.size(); ++l) total += weights(l).squaredNorm();
  return total;
}

void MlpParams::save(const std::filesystem::path& path, std::uint64_t seed) const {
  static_assert(std::endian::native == std::endian::little, "float64 dump assumes little-endian host");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kParamsMagic << " spec=" << spec_.shape_string() << " weight_decay=" << spec_.weight_decay
      << " seed=" << seed << " count=" << flat_.size() << '\n';
  out.write(reinterpret_cast<const char*>(flat_.data()),
            static_cast<std::streamsize>(flat_.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

MlpParams MlpParams::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, spec_field, wd_field, seed_field, count_field;
  hs >> magic >> spec_field >> wd_field >> seed_field >> count_field;
  if (magic != kParamsMagic || spec_field.rfind("spec=", 0) != 0 ||
      wd_field.rfind("weight_decay=", 0) != 0 || count_field.rfind("count=", 0) != 0) {
    throw ValidationError("not a memcap parameter file: " + path.string());
  }
  std::vector<std::size_t> dims;
  std::string_view shape = std::string_view(spec_field).substr(5);
  while (!shape.empty()) {
    const auto dash = shape.find('-');
    dims.push_back(std::stoul(std::string(shape.substr(0, dash))));
    if (dash == std::string_view::npos) break;
    shape.remove_prefix(dash + 1);
  }
  if (dims.size() < 2) throw ValidationError("bad spec in parameter file header");
  MlpSpec spec;
  spec.input_dim = dims.front();
  spec.num_classes = static_cast<int>(dims.back());
  spec.hidden_widths.assign(dims.begin() + 1, dims.end() - 1);
  spec.weight_decay = std::stod(wd_field.substr(13));
  MlpParams params(spec);
  const auto count = std::stoull(count_field.substr(6));
  if (count != params.size()) throw ValidationError("parameter count in header does not match spec");
  in.read(reinterpret_cast<char*>(params.flat_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ValidationError("truncated parameter file " + path.string());
  return params;
}

std::size_t param_count(const MlpSpec& spec) {
  std::size_t total = 0;
  std::size_t fan_in = spec.input_dim;
  for (auto w : spec.hidden_widths) {
    total += fan_in * w + w;
    fan_in = w;
  }
  const auto k = static_cast<std::size_t>(spec.num_classes);
  return total + fan_in * k + k;
}

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams params(spec);
  Rng rng(derive_seed(seed, "net.init"));
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    auto w = params.weights(l);
    const double stddev = std::sqrt(2.0 / static_cast<double>(params.layers()[l].fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = stddev * rng.normal();
    }
  }
  return params;
}

Matrix forward(const MlpParams& params, const Eigen::Ref<const Matrix>& features) {
  if (static_cast<std::size_t>(features.cols()) != params.spec().input_dim) {
    throw ValidationError("feature dim " + std::to_string(features.cols()) + " != MLP input dim " +
                          std::to_string(params.spec().input_dim));
  }
  Matrix act = features;
  const auto layers = params.layers().size();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = act * params.weights(l);
    z.rowwise() += params.bias(l);
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    act = std::move(z);
  }
  return act;
}

LossGrad loss_and_grad(const MlpParams& params, const Eigen::Ref<const Matrix>& features,
                       std::span<const int> labels, double weight_decay) {
  const auto& spec = params.spec();
  if (features.rows() == 0) throw ValidationError("empty batch");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("batch feature/label count mismatch");
  }
  if (static_cast<std::size_t>(features.cols()) != spec.input_dim) {
    throw ValidationError("feature dim " + std::to_string(features.cols()) + " != MLP input dim " +
                          std::to_string(spec.input_dim));
  }
  const auto layers = params.layers().size();

  // acts[l] is the input to layer l; acts[layers] holds the raw outputs.
  std::vector<Matrix> acts(layers + 1);
  acts[0] = features;
  for (std::size_t l = 0; l < layers; ++l) {
    acts[l + 1].noalias() = acts[l] * params.weights(l);
    acts[l + 1].rowwise() += params.bias(l);
    if (l + 1 < layers) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }

  LossGrad out;
  Matrix delta;
  out.loss = head_loss(spec, acts[layers], labels, &delta);
  if (weight_decay != 0.0) out.loss += 0.5 * weight_decay * params.weight_norm_squared();
  if (!std::isfinite(out.loss) || !delta.allFinite()) {
    throw NumericError("numeric overflow in loss/gradient; lower the learning rate");
  }

  out.grad = Vector::Zero(static_cast<Eigen::Index>(params.size()));
  for (std::size_t l = layers; l-- > 0;) {
    const auto& s = params.layers()[l];
    Eigen::Map<Matrix> gw(out.grad.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_in),
                          static_cast<Eigen::Index>(s.fan_out));
    Eigen::Map<Eigen::RowVectorXd> gb(out.grad.data() + s.bias_offset,
                                      static_cast<Eigen::Index>(s.fan_out));
    gw.noalias() = acts[l].transpose() * delta;
    if (weight_decay != 0.0) gw += weight_decay * params.weights(l);
    gb = delta.colwise().sum();
    if (l > 0) {
      Matrix prev = delta * params.weights(l).transpose();
      // ReLU derivative: acts[l] > 0 exactly where the pre-activation was positive.
      delta = (acts[l].array() > 0.0).select(prev, 0.0);
    }
  }
  if (!out.grad.allFinite()) throw NumericError("numeric overflow in gradient; lower the learning rate");
  return out;
}

std::vector<int> predict_classes(const MlpParams& params, const Eigen::Ref<const Matrix>& features) {
  const Matrix out = forward(params, features);
  std::vector<int> pred(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (params.spec().scalar_head()) {
      pred[static_cast<std::size_t>(i)] = out(i, 0) >= 0.0 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < out.cols(); ++j) {
        if (out(i, j) > out(i, best)) best = j;
      }
      pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return pred;
}

Evaluation evaluate(const MlpParams& params, const Dataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (n == 0) throw ValidationError("cannot evaluate on an empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index rows = std::min(kEvalChunk, n - start);
    const auto block = ds.features.middleRows(start, rows);
    const Matrix out = forward(params, block);
    const std::span<const int> labels(ds.labels.data() + start, static_cast<std::size_t>(rows));
    loss_sum += head_loss(params.spec(), out, labels, nullptr) * static_cast<double>(rows);
    const auto pred = predict_classes(params, block);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (pred[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw ValidationError("initial_lr must be positive");
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) {
    throw ValidationError("lr_decay_per_epoch must lie in (0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("max_epochs must be positive");
  if (!(fit_threshold >= 0.0 && fit_threshold <= 1.0)) {
    throw ValidationError("fit_threshold must lie in [0, 1]");
  }
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return initial_lr * std::pow(lr_decay_per_epoch, static_cast<double>(epoch));
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.train_loss,
                  e.train_acc, e.seconds);
    os << buf;
  }
  return os.str();
}

TrainTrace train(MlpParams params, const Dataset& ds, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  if (ds.dim() != params.spec().input_dim) {
    throw ValidationError("dataset dim " + std::to_string(ds.dim()) + " != MLP input dim " +
                          std::to_string(params.spec().input_dim));
  }
  const int head_classes = params.spec().scalar_head() ? 2 : params.spec().num_classes;
  if (ds.num_classes > head_classes) {
    throw ValidationError("dataset has more classes than the network head");
  }

  Rng rng(derive_seed(cfg.seed, "net.train"));
  const std::size_t n = ds.size();
  const double wd = params.spec().weight_decay;
  Vector velocity = Vector::Zero(params.flat().size());

  TrainTrace trace;
  const auto initial = evaluate(params, ds);
  trace.initial_loss = initial.loss;
  trace.initial_acc = initial.accuracy;

  // Start of the current run of evaluations at or above the threshold.
  // First evaluation of the current run at or above the threshold; `none` when not in a run.
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::size_t streak_start = initial.accuracy >= cfg.fit_threshold ? 0 : none;

  Matrix batch_x;
  std::vector<int> batch_y;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.lr_at(epoch);
    const auto order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, n - start);
      batch_x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(ds.dim()));
      batch_y.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        batch_x.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(order[start + i]));
        batch_y[i] = ds.labels[order[start + i]];
      }
      const auto lg = loss_and_grad(params, batch_x, batch_y, wd);
      velocity = cfg.momentum * velocity - lr * lg.grad;
      params.flat() += velocity;
    }
    if (!params.flat().allFinite()) {
      throw NumericError("parameters became non-finite in epoch " + std::to_string(epoch) +
                         "; lower the learning rate");
    }
    const auto eval = evaluate(params, ds);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.epochs.push_back({epoch, lr, eval.loss, eval.accuracy, seconds});
    if (on_epoch) on_epoch(trace.epochs.back());

    const std::size_t completed = epoch + 1;
    if (eval.accuracy >= cfg.fit_threshold) {
      if (streak_start == none) streak_start = completed;
      if (completed - streak_start >= 1) {
        trace.steps_to_fit = streak_start;
        break;
      }
    } else {
      streak_start = none;
    }
  }
  trace.final_params = std::move(params);
  return trace;
}

}  // namespace memcap
