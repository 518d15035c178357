#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memcap/data.hpp"
#include "memcap/kernel.hpp"
#include "memcap/net.hpp"

namespace memcap::cli {

using Json = nlohmann::ordered_json;

enum class DataSource { None, Idx, Cifar, Synth };

struct DataConfig {
  DataSource source = DataSource::None;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::vector<std::filesystem::path> cifar_train, cifar_test;
  bool center_crop = true;
  std::size_t n = 0;       // 0 keeps every training row
  std::size_t n_test = 0;  // 0 keeps every test row
  bool whiten = true;
  std::size_t synth_n = 1024, synth_n_test = 1024, synth_d = 32;
  int synth_classes = 10;
  double synth_separation = 4.0;
};

struct KernelConfig {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 0.0;  // 0 selects the median heuristic
  std::vector<double> lambdas{0.0};
  std::size_t features = 0;  // > 0: random ReLU features, linear kernel on them
  double feature_scale = 1.0;
  bool demo = false;
  std::size_t demo_n = 1;
};

struct SweepConfig {
  std::vector<double> p_grid;
  std::vector<std::uint64_t> seeds;
};

struct RademacherConfig {
  std::size_t trials = 20;
  std::size_t n = 256;
  std::string family = "mlp";  // "mlp" or "constant"
};

struct ExpressivityConfig {
  std::size_t n = 64, d = 8;
  std::vector<std::size_t> ks{2, 4, 8};
  bool demo = false;
};

struct SgdConfig {
  std::size_t n = 16, d = 64;
  std::size_t steps = 100000;
  double lr = 0.0;  // 0 selects 0.5 / lambda_max(X X^T)
  std::size_t snapshot_every = 1000;
};

struct ParamCountConfig {
  std::string mlp = "1x512";
  std::size_t input_dim = 2352;
  int classes = 10;
};

/// Fully resolved run configuration. `resolved` is the JSON document it was
/// read from, echoed into manifest.json.
struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t jobs = 1;
  DataConfig data;
  RandomizationMode randomization = RandomizationMode::TrueLabels;
  double corruption_p = 0.0;
  std::vector<std::size_t> hidden{512};
  double weight_decay = 0.0;
  TrainConfig train;
  KernelConfig kernel;
  SweepConfig sweep;
  RademacherConfig rademacher;
  ExpressivityConfig expressivity;
  SgdConfig sgd;
  ParamCountConfig param_count;
  Json resolved;
};

/// The default document; every accepted key appears here.
Json default_config();

/// Merges `overlay` into `base`. Keys absent from `base` and values whose JSON
/// type differs from the default's throw ValidationError naming the dotted key.
void merge_strict(Json& base, const Json& overlay, const std::string& prefix = "");

/// Sets one dotted key ("train.lr") with the same checks as merge_strict.
void set_key(Json& doc, const std::string& dotted_key, const Json& value);

/// Reads a JSON object from disk; parse errors become ValidationError.
Json read_config_file(const std::filesystem::path& path);

/// Typed view of a merged document. Throws ValidationError for bad values.
RunConfig resolve(const std::string& subcommand, Json doc);

/// Subcommands that read a dataset.
bool needs_dataset(const RunConfig& cfg);

}  // namespace memcap::cli
