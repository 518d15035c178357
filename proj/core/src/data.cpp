#include "memcap/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "memcap/error.hpp"
#include "memcap/io.hpp"
#include "memcap/rng.hpp"

namespace memcap {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;
constexpr std::size_t kCropSide = 28;

std::string hex32(std::uint32_t v) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s.push_back(kHex[(v >> shift) & 0xF]);
  return s;
}

std::string row_key(const Matrix& m, Eigen::Index row) {
  const auto* p = reinterpret_cast<const char*>(m.row(row).data());
  return std::string(p, p + m.cols() * sizeof(double));
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw ValidationError("dataset '" + name + "' is empty");
  }
  if (num_classes < 1) throw ValidationError("dataset '" + name + "' has num_classes < 1");
  if (labels.size() != size()) {
    throw ValidationError("dataset '" + name + "': label count " + std::to_string(labels.size()) +
                          " != row count " + std::to_string(size()));
  }
  if (!features.allFinite()) throw ValidationError("dataset '" + name + "' has non-finite features");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("dataset '" + name + "': label " + std::to_string(labels[i]) +
                            " at row " + std::to_string(i) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ValidationError("subset row index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = labels[rows[i]];
  }
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  Dataset out;
  out.features = features.topRows(static_cast<Eigen::Index>(count));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

std::string_view to_string(RandomizationMode mode) {
  switch (mode) {
    case RandomizationMode::TrueLabels: return "true_labels";
    case RandomizationMode::PartialCorruption: return "partial_corruption";
    case RandomizationMode::RandomLabels: return "random_labels";
    case RandomizationMode::ShuffledPixels: return "shuffled_pixels";
    case RandomizationMode::RandomPixels: return "random_pixels";
    case RandomizationMode::GaussianPixels: return "gaussian_pixels";
  }
  return "unknown";
}

RandomizationMode parse_randomization_mode(std::string_view text) {
  std::string norm(text);
  std::replace(norm.begin(), norm.end(), '-', '_');
  for (auto mode : {RandomizationMode::TrueLabels, RandomizationMode::PartialCorruption,
                    RandomizationMode::RandomLabels, RandomizationMode::ShuffledPixels,
                    RandomizationMode::RandomPixels, RandomizationMode::GaussianPixels}) {
    if (norm == to_string(mode)) return mode;
  }
  throw ValidationError("unknown randomization mode '" + std::string(text) + "'");
}

void RandomizationSpec::validate() const {
  if (!(corruption_p >= 0.0 && corruption_p <= 1.0)) {
    throw ValidationError("corruption probability must lie in [0, 1]");
  }
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = io::read_bytes(images_path);
  const auto labels = io::read_bytes(labels_path);

  const std::uint32_t img_magic = io::read_be32(images, 0);
  if (img_magic != kIdxImagesMagic) {
    throw ValidationError("IDX images magic " + hex32(img_magic) + " != 0x00000803 in " +
                          images_path.string());
  }
  const std::uint32_t lbl_magic = io::read_be32(labels, 0);
  if (lbl_magic != kIdxLabelsMagic) {
    throw ValidationError("IDX labels magic " + hex32(lbl_magic) + " != 0x00000801 in " +
                          labels_path.string());
  }
  const std::size_t count = io::read_be32(images, 4);
  const std::size_t rows = io::read_be32(images, 8);
  const std::size_t cols = io::read_be32(images, 12);
  const std::size_t label_count = io::read_be32(labels, 4);
  if (count != label_count) {
    throw ValidationError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                          std::to_string(label_count) + " labels");
  }
  const std::size_t d = rows * cols;
  if (count == 0 || d == 0) throw ValidationError("IDX file declares an empty dataset");
  if (images.size() < 16 + count * d) throw ValidationError("truncated IDX images file " + images_path.string());
  if (labels.size() < 8 + count) throw ValidationError("truncated IDX labels file " + labels_path.string());

  Dataset ds;
  ds.name = images_path.filename().string();
  ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  ds.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* px = images.data() + 16 + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    }
    ds.labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max(10, max_label + 1);
  return ds;
}

Dataset load_cifar10_bin(std::span<const std::filesystem::path> batch_paths,
                         const CifarOptions& options) {
  if (batch_paths.empty()) throw ValidationError("no CIFAR-10 batch files given");
  std::vector<std::vector<std::uint8_t>> blobs;
  std::size_t total = 0;
  for (const auto& path : batch_paths) {
    auto bytes = io::read_bytes(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw ValidationError("CIFAR-10 file " + path.string() + " length " +
                            std::to_string(bytes.size()) + " is not a multiple of 3073");
    }
    total += bytes.size() / kCifarRecord;
    blobs.push_back(std::move(bytes));
  }

  const std::size_t side = options.center_crop_28 ? kCropSide : kCifarSide;
  const std::size_t offset = (kCifarSide - side) / 2;
  const std::size_t d = 3 * side * side;

  Dataset ds;
  ds.name = "cifar10";
  ds.num_classes = 10;
  ds.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));
  ds.labels.resize(total);
  std::size_t row = 0;
  for (const auto& blob : blobs) {
    for (std::size_t rec = 0; rec < blob.size() / kCifarRecord; ++rec, ++row) {
      const std::uint8_t* p = blob.data() + rec * kCifarRecord;
      if (p[0] >= 10) {
        throw ValidationError("CIFAR-10 record " + std::to_string(row) + " has label byte " +
                              std::to_string(p[0]) + " >= 10");
      }
      ds.labels[row] = p[0];
      std::size_t col = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::uint8_t* plane = p + 1 + c * kCifarPlane;
        for (std::size_t r = 0; r < side; ++r) {
          for (std::size_t q = 0; q < side; ++q, ++col) {
            ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
                plane[(r + offset) * kCifarSide + (q + offset)] / 255.0;
          }
        }
      }
    }
  }
  return ds;
}

Dataset synth_blobs(std::size_t n, std::size_t d, int num_classes, double separation,
                    std::uint64_t seed) {
  if (num_classes < 1 || n < static_cast<std::size_t>(num_classes) || d < 1) {
    throw ValidationError("synth_blobs requires n >= K >= 1 and d >= 1");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  Rng rng(derive_seed(seed, "data.synth_blobs"));

  // Orthogonal axes scaled by sep/sqrt(2) are pairwise exactly `separation`
  // apart; with more classes than dimensions fall back to random directions.
  Matrix means = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  const double radius = separation / std::sqrt(2.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (k <= d) {
      means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = radius;
    } else {
      Vector dir(static_cast<Eigen::Index>(d));
      for (auto& v : dir) v = rng.normal();
      means.row(static_cast<Eigen::Index>(c)) = radius * dir.normalized().transpose();
    }
  }

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
  rng.shuffle(std::span<int>(labels));

  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = num_classes;
  ds.labels = labels;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    do {
      for (std::size_t j = 0; j < d; ++j) {
        ds.features(r, static_cast<Eigen::Index>(j)) =
            means(labels[i], static_cast<Eigen::Index>(j)) + rng.normal();
      }
    } while (!seen.insert(row_key(ds.features, r)).second);
  }
  return ds;
}

Dataset whiten_per_image(const Dataset& ds) {
  Dataset out = ds;
  const double d = static_cast<double>(ds.dim());
  const double floor = 1.0 / std::sqrt(d);
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    auto row = out.features.row(i);
    const double mean = row.mean();
    row.array() -= mean;
    const double stddev = std::sqrt(row.squaredNorm() / d);
    row /= std::max(stddev, floor);
  }
  return out;
}

Dataset randomize_labels(const Dataset& ds, RandomizationMode mode, double p,
                         std::uint64_t seed) {
  if (mode == RandomizationMode::RandomLabels) {
    p = 1.0;
  } else if (mode != RandomizationMode::PartialCorruption) {
    throw ValidationError("randomize_labels needs partial_corruption or random_labels, got " +
                          std::string(to_string(mode)));
  }
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("corruption probability must lie in [0, 1]");
  Rng rng(derive_seed(seed, "data.randomize_labels"));
  Dataset out = ds;
  const auto k = static_cast<std::uint64_t>(ds.num_classes);
  for (auto& label : out.labels) {
    // Always consume the coin so the stream layout is independent of p.
    const double coin = rng.uniform();
    const int draw = static_cast<int>(rng.below(k));
    if (coin < p) label = draw;
  }
  return out;
}

std::pair<Dataset, Dataset> randomize_inputs(const Dataset& train, const Dataset& test,
                                             RandomizationMode mode, std::uint64_t seed) {
  if (train.dim() != test.dim()) {
    throw ValidationError("randomize_inputs: train dim " + std::to_string(train.dim()) +
                          " != test dim " + std::to_string(test.dim()));
  }
  Rng rng(derive_seed(seed, "data.randomize_inputs"));
  Dataset tr = train;
  Dataset te = test;
  const auto d = static_cast<Eigen::Index>(train.dim());

  auto permute_row = [d](auto row, const std::vector<std::size_t>& perm) {
    Eigen::RowVectorXd src = row;
    for (Eigen::Index j = 0; j < d; ++j) row(j) = src(static_cast<Eigen::Index>(perm[j]));
  };

  switch (mode) {
    case RandomizationMode::ShuffledPixels: {
      const auto perm = rng.permutation(train.dim());
      for (auto* ds : {&tr, &te}) {
        for (Eigen::Index i = 0; i < ds->features.rows(); ++i) permute_row(ds->features.row(i), perm);
      }
      break;
    }
    case RandomizationMode::RandomPixels: {
      for (auto* ds : {&tr, &te}) {
        for (Eigen::Index i = 0; i < ds->features.rows(); ++i) {
          permute_row(ds->features.row(i), rng.permutation(train.dim()));
        }
      }
      break;
    }
    case RandomizationMode::GaussianPixels: {
      const double count = static_cast<double>(train.features.size());
      const double mean = train.features.sum() / count;
      const double var = (train.features.array() - mean).square().sum() / count;
      const double stddev = std::sqrt(var);
      for (auto* ds : {&tr, &te}) {
        for (Eigen::Index i = 0; i < ds->features.rows(); ++i) {
          for (Eigen::Index j = 0; j < d; ++j) ds->features(i, j) = rng.normal(mean, stddev);
        }
      }
      break;
    }
    default:
      throw ValidationError("randomize_inputs needs a pixel mode, got " +
                            std::string(to_string(mode)));
  }
  return {std::move(tr), std::move(te)};
}

std::pair<Dataset, Dataset> apply_randomization(const Dataset& train, const Dataset& test,
                                                const RandomizationSpec& spec) {
  spec.validate();
  switch (spec.mode) {
    case RandomizationMode::TrueLabels:
      return {train, test};
    case RandomizationMode::PartialCorruption:
    case RandomizationMode::RandomLabels:
      return {randomize_labels(train, spec.mode, spec.corruption_p, spec.seed), test};
    default:
      return randomize_inputs(train, test, spec.mode, spec.seed);
  }
}

double effective_flip_rate(double p, int num_classes) {
  return p * static_cast<double>(num_classes - 1) / static_cast<double>(num_classes);
}

}  // namespace memcap
