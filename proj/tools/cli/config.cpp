#include "cli/config.hpp"

#include <algorithm>
#include <thread>

#include "memcap/error.hpp"
#include "memcap/io.hpp"
#include "memcap/rng.hpp"

namespace memcap::cli {

namespace {

std::string type_name(const Json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

// Whether `value` may replace `def`. Integer defaults demand non-negative
// integers; float defaults accept any number.
bool compatible(const Json& def, const Json& value) {
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_number_unsigned() || def.is_number_integer()) {
    return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  }
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string();
  if (def.is_object()) return value.is_object();
  if (def.is_array()) {
    if (!value.is_array()) return false;
    // Empty default arrays hold paths.
    const Json element = def.empty() ? Json("") : def.front();
    for (const auto& v : value) {
      if (!compatible(element, v)) return false;
    }
    return true;
  }
  return false;
}

std::string expected_name(const Json& def) {
  if (def.is_array()) {
    const Json element = def.empty() ? Json("") : def.front();
    return "array of " + expected_name(element);
  }
  if (def.is_number_unsigned() || def.is_number_integer()) return "non-negative integer";
  return type_name(def);
}

template <typename T>
T get(const Json& doc, const char* section, const char* key) {
  return doc.at(section).at(key).get<T>();
}

std::vector<std::filesystem::path> paths(const Json& arr) {
  std::vector<std::filesystem::path> out;
  for (const auto& p : arr) out.emplace_back(p.get<std::string>());
  return out;
}

}  // namespace

Json default_config() {
  return Json::parse(R"({
    "seed": 0,
    "out": "out",
    "jobs": 0,
    "data": {
      "source": "none",
      "idx": {"train_images": "", "train_labels": "", "test_images": "", "test_labels": ""},
      "cifar": {"train": [], "test": [], "center_crop": true},
      "synth": {"n": 1024, "n_test": 1024, "d": 32, "classes": 10, "separation": 4.0},
      "n": 0,
      "n_test": 0,
      "whiten": true
    },
    "randomization": {"mode": "true_labels", "p": 0.0},
    "model": {"hidden": "1x512", "weight_decay": 0.0},
    "train": {"lr": 0.01, "lr_decay": 0.95, "momentum": 0.9, "batch_size": 128,
              "max_epochs": 100, "fit_threshold": 0.999},
    "kernel": {"kind": "rbf", "gamma": 0.0, "lambdas": [0.0], "features": 0,
               "feature_scale": 1.0, "demo": false, "demo_n": 1},
    "sweep": {"p_grid": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "seeds": [0, 1, 2]},
    "rademacher": {"trials": 20, "n": 256, "family": "mlp"},
    "expressivity": {"n": 64, "d": 8, "ks": [2, 4, 8], "demo": false},
    "sgd": {"n": 16, "d": 64, "steps": 100000, "lr": 0.0, "snapshot_every": 1000},
    "param_count": {"mlp": "1x512", "input_dim": 2352, "classes": 10}
  })");
}

void merge_strict(Json& base, const Json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw ValidationError("config" + (prefix.empty() ? std::string() : " key '" + prefix + "'") +
                          " must be a JSON object");
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ValidationError("unknown config key '" + dotted + "'");
    Json& target = base[key];
    if (!compatible(target, value)) {
      throw ValidationError("config key '" + dotted + "' expects " + expected_name(target) + ", got " +
                            type_name(value));
    }
    if (target.is_object()) {
      merge_strict(target, value, dotted);
    } else {
      target = value;
    }
  }
}

void set_key(Json& doc, const std::string& dotted_key, const Json& value) {
  Json overlay = value;
  std::string rest = dotted_key;
  std::vector<std::string> parts;
  for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1)) {
    parts.push_back(rest.substr(0, dot));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) overlay = Json{{*it, overlay}};
  merge_strict(doc, overlay);
}

Json read_config_file(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw ValidationError("cannot parse config " + path.string() + ": " + e.what());
  }
}

bool needs_dataset(const RunConfig& cfg) {
  const auto& s = cfg.subcommand;
  if (s == "kernel") return !cfg.kernel.demo;
  return s == "fit-random" || s == "sweep-corruption" || s == "rademacher";
}

RunConfig resolve(const std::string& subcommand, Json doc) {
  RunConfig cfg;
  cfg.subcommand = subcommand;
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.out = doc.at("out").get<std::string>();
  cfg.jobs = doc.at("jobs").get<std::size_t>();
  if (cfg.jobs == 0) {
    cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
    doc["jobs"] = cfg.jobs;
  }

  const Json& data = doc.at("data");
  const auto source = data.at("source").get<std::string>();
  if (source == "idx") {
    cfg.data.source = DataSource::Idx;
  } else if (source == "cifar") {
    cfg.data.source = DataSource::Cifar;
  } else if (source == "synth") {
    cfg.data.source = DataSource::Synth;
  } else if (source != "none") {
    throw ValidationError("data.source must be idx, cifar, synth or none, got '" + source + "'");
  }
  const Json& idx = data.at("idx");
  cfg.data.train_images = idx.at("train_images").get<std::string>();
  cfg.data.train_labels = idx.at("train_labels").get<std::string>();
  cfg.data.test_images = idx.at("test_images").get<std::string>();
  cfg.data.test_labels = idx.at("test_labels").get<std::string>();
  cfg.data.cifar_train = paths(data.at("cifar").at("train"));
  cfg.data.cifar_test = paths(data.at("cifar").at("test"));
  cfg.data.center_crop = data.at("cifar").at("center_crop").get<bool>();
  cfg.data.n = data.at("n").get<std::size_t>();
  cfg.data.n_test = data.at("n_test").get<std::size_t>();
  cfg.data.whiten = data.at("whiten").get<bool>();
  const Json& synth = data.at("synth");
  cfg.data.synth_n = synth.at("n").get<std::size_t>();
  cfg.data.synth_n_test = synth.at("n_test").get<std::size_t>();
  cfg.data.synth_d = synth.at("d").get<std::size_t>();
  cfg.data.synth_classes = synth.at("classes").get<int>();
  cfg.data.synth_separation = synth.at("separation").get<double>();

  cfg.randomization = parse_randomization_mode(get<std::string>(doc, "randomization", "mode"));
  cfg.corruption_p = get<double>(doc, "randomization", "p");
  RandomizationSpec{cfg.randomization, cfg.corruption_p, cfg.seed}.validate();

  cfg.hidden = parse_hidden_widths(get<std::string>(doc, "model", "hidden"));
  cfg.weight_decay = get<double>(doc, "model", "weight_decay");
  if (!(cfg.weight_decay >= 0.0)) throw ValidationError("model.weight_decay must be >= 0");

  cfg.train.initial_lr = get<double>(doc, "train", "lr");
  cfg.train.lr_decay_per_epoch = get<double>(doc, "train", "lr_decay");
  cfg.train.momentum = get<double>(doc, "train", "momentum");
  cfg.train.batch_size = get<std::size_t>(doc, "train", "batch_size");
  cfg.train.max_epochs = get<std::size_t>(doc, "train", "max_epochs");
  cfg.train.fit_threshold = get<double>(doc, "train", "fit_threshold");
  cfg.train.seed = derive_seed(cfg.seed, "cli.train");
  cfg.train.validate();

  const auto kind = get<std::string>(doc, "kernel", "kind");
  if (kind == "linear") {
    cfg.kernel.kind = KernelKind::Linear;
  } else if (kind == "rbf") {
    cfg.kernel.kind = KernelKind::Rbf;
  } else {
    throw ValidationError("kernel.kind must be linear or rbf, got '" + kind + "'");
  }
  cfg.kernel.gamma = get<double>(doc, "kernel", "gamma");
  if (!(cfg.kernel.gamma >= 0.0)) throw ValidationError("kernel.gamma must be >= 0 (0 = median heuristic)");
  cfg.kernel.lambdas = get<std::vector<double>>(doc, "kernel", "lambdas");
  if (cfg.kernel.lambdas.empty()) throw ValidationError("kernel.lambdas is empty");
  for (double l : cfg.kernel.lambdas) {
    if (!(l >= 0.0)) throw ValidationError("kernel.lambdas entries must be >= 0");
  }
  cfg.kernel.features = get<std::size_t>(doc, "kernel", "features");
  cfg.kernel.feature_scale = get<double>(doc, "kernel", "feature_scale");
  cfg.kernel.demo = get<bool>(doc, "kernel", "demo");
  cfg.kernel.demo_n = get<std::size_t>(doc, "kernel", "demo_n");
  if (cfg.kernel.demo && cfg.kernel.demo_n == 0) throw ValidationError("kernel.demo_n must be >= 1");

  cfg.sweep.p_grid = get<std::vector<double>>(doc, "sweep", "p_grid");
  cfg.sweep.seeds = get<std::vector<std::uint64_t>>(doc, "sweep", "seeds");

  cfg.rademacher.trials = get<std::size_t>(doc, "rademacher", "trials");
  cfg.rademacher.n = get<std::size_t>(doc, "rademacher", "n");
  cfg.rademacher.family = get<std::string>(doc, "rademacher", "family");
  if (cfg.rademacher.family != "mlp" && cfg.rademacher.family != "constant") {
    throw ValidationError("rademacher.family must be mlp or constant, got '" + cfg.rademacher.family + "'");
  }

  cfg.expressivity.n = get<std::size_t>(doc, "expressivity", "n");
  cfg.expressivity.d = get<std::size_t>(doc, "expressivity", "d");
  cfg.expressivity.ks = get<std::vector<std::size_t>>(doc, "expressivity", "ks");
  cfg.expressivity.demo = get<bool>(doc, "expressivity", "demo");
  if (cfg.expressivity.n == 0 || cfg.expressivity.d == 0) {
    throw ValidationError("expressivity.n and expressivity.d must be >= 1");
  }

  cfg.sgd.n = get<std::size_t>(doc, "sgd", "n");
  cfg.sgd.d = get<std::size_t>(doc, "sgd", "d");
  cfg.sgd.steps = get<std::size_t>(doc, "sgd", "steps");
  cfg.sgd.lr = get<double>(doc, "sgd", "lr");
  cfg.sgd.snapshot_every = get<std::size_t>(doc, "sgd", "snapshot_every");
  if (cfg.sgd.n == 0 || cfg.sgd.d == 0) throw ValidationError("sgd.n and sgd.d must be >= 1");
  if (!(cfg.sgd.lr >= 0.0)) throw ValidationError("sgd.lr must be >= 0 (0 = automatic)");

  cfg.param_count.mlp = get<std::string>(doc, "param_count", "mlp");
  cfg.param_count.input_dim = get<std::size_t>(doc, "param_count", "input_dim");
  cfg.param_count.classes = get<int>(doc, "param_count", "classes");

  if (needs_dataset(cfg) && cfg.data.source == DataSource::None) {
    throw ValidationError("missing required dataset source for '" + subcommand +
                          "': set data.source (idx, cifar or synth) or pass --idx-dir, --cifar-dir or --synth");
  }
  if (cfg.data.source == DataSource::Idx) {
    for (const auto& p : {cfg.data.train_images, cfg.data.train_labels, cfg.data.test_images, cfg.data.test_labels}) {
      if (p.empty()) throw ValidationError("data.source is idx but a data.idx path is empty");
    }
  }
  if (cfg.data.source == DataSource::Cifar && (cfg.data.cifar_train.empty() || cfg.data.cifar_test.empty())) {
    throw ValidationError("data.source is cifar but data.cifar.train or data.cifar.test is empty");
  }

  cfg.resolved = std::move(doc);
  return cfg;
}

}  // namespace memcap::cli
