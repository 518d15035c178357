#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memcap/linalg.hpp"

namespace memcap {

/// Dense sample: one row of `features` per example, integer class labels.
struct Dataset {
  Matrix features;          // n x d
  std::vector<int> labels;  // n entries in [0, num_classes)
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws ValidationError on NaN/Inf features, out-of-range labels, or empty shape.
  void validate() const;

  /// Rows in the given order (indices may repeat).
  Dataset subset(std::span<const std::size_t> rows) const;
  /// The first `count` rows.
  Dataset head(std::size_t count) const;
};

enum class RandomizationMode {
  TrueLabels,
  PartialCorruption,
  RandomLabels,
  ShuffledPixels,
  RandomPixels,
  GaussianPixels,
};

std::string_view to_string(RandomizationMode mode);
/// Accepts the snake_case or kebab-case names, e.g. "random_labels", "random-labels".
RandomizationMode parse_randomization_mode(std::string_view text);

struct RandomizationSpec {
  RandomizationMode mode = RandomizationMode::TrueLabels;
  double corruption_p = 0.0;  // only read for PartialCorruption
  std::uint64_t seed = 0;

  void validate() const;
};

// -- loaders ---------------------------------------------------------------

/// MNIST-style IDX pair (images magic 0x00000803, labels magic 0x00000801).
/// Pixels are scaled to [0, 1]. Gzip-compressed files are accepted.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

struct CifarOptions {
  bool center_crop_28 = true;
};

/// CIFAR-10 binary batches: 3073-byte records, label byte then R, G, B planes.
Dataset load_cifar10_bin(std::span<const std::filesystem::path> batch_paths,
                         const CifarOptions& options = {});

/// K Gaussian clusters (unit within-class variance) whose means are pairwise
/// `separation` apart when K <= d. Labels are balanced up to remainder and all
/// rows are distinct.
Dataset synth_blobs(std::size_t n, std::size_t d, int num_classes, double separation,
                    std::uint64_t seed);

// -- transforms ------------------------------------------------------------

/// Per-row (x - mean) / max(std, 1/sqrt(d)), population std.
Dataset whiten_per_image(const Dataset& ds);

/// PartialCorruption: each label independently replaced with probability p by
/// a uniform class (the true class included). RandomLabels: p = 1.
/// Other modes are rejected.
Dataset randomize_labels(const Dataset& ds, RandomizationMode mode, double p,
                         std::uint64_t seed);

/// ShuffledPixels: one coordinate permutation shared by every row of both sets.
/// RandomPixels: an independent permutation per row.
/// GaussianPixels: rows resampled from N(mu, sigma^2), the pooled scalar
/// statistics of the training features.
std::pair<Dataset, Dataset> randomize_inputs(const Dataset& train, const Dataset& test,
                                             RandomizationMode mode, std::uint64_t seed);

/// Dispatches on spec.mode. Label modes touch only the training set.
std::pair<Dataset, Dataset> apply_randomization(const Dataset& train, const Dataset& test,
                                                const RandomizationSpec& spec);

/// Probability that PartialCorruption actually changes a label: p (K-1) / K.
double effective_flip_rate(double p, int num_classes);

}  // namespace memcap
