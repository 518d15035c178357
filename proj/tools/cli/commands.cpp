#include "cli/commands.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include "memcap/error.hpp"
#include "memcap/expressivity.hpp"
#include "memcap/io.hpp"
#include "memcap/kernel.hpp"
#include "memcap/probe.hpp"
#include "memcap/report.hpp"
#include "memcap/rng.hpp"

namespace memcap::cli {

namespace {

using io::format_double;

Json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return Json::parse(format_double(v));
}

std::string vector_text(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + ")";
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  }
  return m;
}

Vector gaussian_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

// -- data --------------------------------------------------------------------

struct Splits {
  Dataset train;
  Dataset test;
};

Dataset take(const Dataset& ds, std::size_t n, const char* key) {
  if (n == 0) return ds;
  if (n > ds.size()) {
    throw ValidationError(std::string(key) + " = " + std::to_string(n) + " exceeds the " +
                          std::to_string(ds.size()) + " available rows");
  }
  return ds.head(n);
}

Splits load_splits(const RunConfig& cfg, bool randomize) {
  const auto& d = cfg.data;
  Splits s;
  switch (d.source) {
    case DataSource::Idx:
      s.train = load_idx(d.train_images, d.train_labels);
      s.test = load_idx(d.test_images, d.test_labels);
      break;
    case DataSource::Cifar: {
      const CifarOptions opts{d.center_crop};
      s.train = load_cifar10_bin(d.cifar_train, opts);
      s.test = load_cifar10_bin(d.cifar_test, opts);
      break;
    }
    case DataSource::Synth: {
      const auto all = synth_blobs(d.synth_n + d.synth_n_test, d.synth_d, d.synth_classes, d.synth_separation,
                                   derive_seed(cfg.seed, "cli.synth"));
      std::vector<std::size_t> rows(all.size());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      s.train = all.subset(std::span(rows).first(d.synth_n));
      s.test = all.subset(std::span(rows).subspan(d.synth_n));
      s.train.name = "synth/train";
      s.test.name = "synth/test";
      break;
    }
    case DataSource::None:
      throw ValidationError("no dataset source configured");
  }
  s.train = take(s.train, d.n, "data.n");
  s.test = take(s.test, d.n_test, "data.n_test");
  if (randomize) {
    const RandomizationSpec spec{cfg.randomization, cfg.corruption_p, derive_seed(cfg.seed, "cli.randomize")};
    std::tie(s.train, s.test) = apply_randomization(s.train, s.test, spec);
  }
  if (d.whiten) {
    s.train = whiten_per_image(s.train);
    s.test = whiten_per_image(s.test);
  }
  return s;
}

MlpSpec mlp_spec(const RunConfig& cfg, std::size_t input_dim, int num_classes) {
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_widths = cfg.hidden;
  spec.num_classes = num_classes;
  spec.weight_decay = cfg.weight_decay;
  spec.validate();
  return spec;
}

// -- subcommands ---------------------------------------------------------------

void run_fit_random(const RunConfig& cfg, RunManifest& manifest, std::ostream& out, std::ostream& err) {
  const auto data = load_splits(cfg, true);
  const auto spec = mlp_spec(cfg, data.train.dim(), data.train.num_classes);
  const std::uint64_t init_seed = derive_seed(cfg.seed, "cli.init");
  err << "fit-random: " << spec.shape_string() << " (" << param_count(spec) << " parameters), n="
      << data.train.size() << ", mode=" << to_string(cfg.randomization) << '\n';
  const auto trace = train(init_mlp(spec, init_seed), data.train, cfg.train, [&](const EpochRecord& r) {
    if ((r.epoch + 1) % 10 == 0) {
      err << "  epoch " << r.epoch + 1 << " loss " << format_double(r.train_loss) << " acc "
          << format_double(r.train_acc) << '\n';
    }
  });
  const auto test = evaluate(trace.final_params, data.test);

  manifest.add({"trace.csv", trace.to_csv()});
  trace.final_params.save(manifest.out_dir() / "params.bin", init_seed);
  manifest.add_existing("params.bin");
  Json summary;
  summary["model"] = spec.shape_string();
  summary["param_count"] = param_count(spec);
  summary["n_train"] = data.train.size();
  summary["n_test"] = data.test.size();
  summary["randomization"] = std::string(to_string(cfg.randomization));
  summary["epochs_run"] = trace.epochs.size();
  summary["steps_to_fit"] = trace.steps_to_fit ? Json(*trace.steps_to_fit) : Json(nullptr);
  summary["train_acc"] = num(trace.final_acc());
  summary["test_acc"] = num(test.accuracy);
  summary["test_loss"] = num(test.loss);
  manifest.add({"summary.json", summary.dump(2) + "\n"});

  out << "train_acc " << format_double(trace.final_acc()) << "  test_acc " << format_double(test.accuracy)
      << "  epochs " << trace.epochs.size() << "  steps_to_fit "
      << (trace.steps_to_fit ? std::to_string(*trace.steps_to_fit) : std::string("none")) << '\n';
}

void run_sweep(const RunConfig& cfg, RunManifest& manifest, std::ostream& out, std::ostream& err) {
  if (cfg.randomization != RandomizationMode::TrueLabels) {
    throw ValidationError("sweep-corruption corrupts labels itself; randomization.mode must be true_labels");
  }
  const auto data = load_splits(cfg, false);
  const auto spec = mlp_spec(cfg, data.train.dim(), data.train.num_classes);
  SweepOptions options;
  options.jobs = cfg.jobs;
  options.on_cell = [&](const SweepRow& r) {
    err << "  p=" << format_double(r.p) << " seed=" << r.seed << " steps_to_fit="
        << (r.steps_to_fit ? std::to_string(*r.steps_to_fit) : std::string("none")) << " test_err="
        << format_double(r.test_err) << '\n';
  };
  const auto report = corruption_sweep(data.train, data.test, spec, cfg.train, cfg.sweep.p_grid,
                                        cfg.sweep.seeds, options);
  manifest.add({"sweep.csv", sweep_csv(report)});
  manifest.add({"sweep.json", sweep_json(report)});

  const auto steps = report.mean_steps_by_p();
  const auto errs = report.mean_test_err_by_p();
  out << "p,mean_steps_to_fit,mean_test_err\n";
  for (std::size_t g = 0; g < report.p_grid.size(); ++g) {
    out << format_double(report.p_grid[g]) << ',' << format_double(steps[g]) << ',' << format_double(errs[g])
        << '\n';
  }
}

// The rows of the demo matrix are the all-ones vector and ones + e_i, with
// y = X 1, so the minimum-norm interpolant is the all-ones vector. n = 1 gives
// X = [[1, 1]], y = [2].
std::pair<Matrix, Vector> kernel_demo_problem(std::size_t n) {
  Matrix X = Matrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n + 1));
  for (Eigen::Index i = 1; i < X.rows(); ++i) X(i, i) += 1.0;
  Vector y = X * Vector::Ones(X.cols());
  return {X, y};
}

void run_kernel_demo(const RunConfig& cfg, RunManifest& manifest, std::ostream& out) {
  const auto [X, y] = kernel_demo_problem(cfg.kernel.demo_n);
  KernelSpec spec{cfg.kernel.kind, cfg.kernel.gamma > 0.0 ? cfg.kernel.gamma : 1.0};
  const auto system = solve_interpolation(gram(X, spec), y, 0.0);
  Json j;
  j["kind"] = spec.kind == KernelKind::Linear ? "linear" : "rbf";
  j["n"] = X.rows();
  j["d"] = X.cols();
  j["alpha"] = std::vector<double>(system.alpha.data(), system.alpha.data() + system.alpha.size());
  j["residual_inf"] = num(system.residual_inf);
  j["jitter_used"] = num(system.jitter_used);
  if (spec.kind == KernelKind::Linear) {
    const auto mn = min_norm_linear(X, y);
    j["w"] = std::vector<double>(mn.w.data(), mn.w.data() + mn.w.size());
    j["norm"] = num(mn.norm);
    out << "w = " << vector_text(mn.w) << "  norm " << format_double(mn.norm) << '\n';
  }
  out << "alpha = " << vector_text(system.alpha.col(0)) << "  residual_inf " << format_double(system.residual_inf)
      << '\n';
  manifest.add({"kernel_demo.json", j.dump(2) + "\n"});
}

void run_kernel(const RunConfig& cfg, RunManifest& manifest, std::ostream& out, std::ostream& err) {
  if (cfg.kernel.demo) return run_kernel_demo(cfg, manifest, out);
  auto data = load_splits(cfg, true);
  KernelSpec spec{cfg.kernel.kind, cfg.kernel.gamma};
  if (cfg.kernel.features > 0) {
    const std::uint64_t fseed = derive_seed(cfg.seed, "cli.kernel.features");
    data.train.features = random_relu_features(data.train.features, cfg.kernel.features, cfg.kernel.feature_scale, fseed);
    data.test.features = random_relu_features(data.test.features, cfg.kernel.features, cfg.kernel.feature_scale, fseed);
  }
  if (spec.kind == KernelKind::Rbf && spec.gamma == 0.0) {
    spec.gamma = median_heuristic_gamma(data.train.features, 512, derive_seed(cfg.seed, "cli.kernel.gamma"));
  }
  spec.validate();
  err << "kernel: n=" << data.train.size() << " d=" << data.train.dim() << " gamma=" << format_double(spec.gamma)
      << '\n';
  const ColMatrix K = gram(data.train.features, spec);
  const ColMatrix Kt = cross_gram(data.test.features, data.train.features, spec);
  const ColMatrix Y = one_hot(data.train.labels, data.train.num_classes);

  std::vector<RidgePoint> path;
  Json solves = Json::array();
  for (std::size_t i = 0; i < cfg.kernel.lambdas.size(); ++i) {
    const double lambda = cfg.kernel.lambdas[i];
    const auto system = solve_interpolation(K, Y, lambda);
    double sq = 0.0;
    for (double r : system.rkhs_norm) sq += r * r;
    RidgePoint pt;
    pt.lambda = lambda;
    pt.rkhs_norm = std::sqrt(sq);
    pt.train_err = classification_error(argmax_rows(K * system.alpha), data.train.labels);
    pt.test_err = classification_error(argmax_rows(Kt * system.alpha), data.test.labels);
    path.push_back(pt);
    solves.push_back({{"lambda", num(lambda)},
                      {"jitter_used", num(system.jitter_used)},
                      {"residual_inf", num(system.residual_inf)}});
    if (i == 0) {
      system.save(manifest.out_dir() / "alpha.bin");
      manifest.add_existing("alpha.bin");
    }
  }
  manifest.add({"ridge_path.csv", ridge_path_csv(path)});
  Json summary;
  summary["kind"] = spec.kind == KernelKind::Linear ? "linear" : "rbf";
  summary["gamma"] = num(spec.gamma);
  summary["random_features"] = cfg.kernel.features;
  summary["n_train"] = data.train.size();
  summary["n_test"] = data.test.size();
  summary["randomization"] = std::string(to_string(cfg.randomization));
  summary["solves"] = solves;
  manifest.add({"kernel_summary.json", summary.dump(2) + "\n"});
  out << ridge_path_csv(path);
}

void run_sgd_linear(const RunConfig& cfg, RunManifest& manifest, std::ostream& out) {
  const Matrix X = gaussian_matrix(cfg.sgd.n, cfg.sgd.d, derive_seed(cfg.seed, "cli.sgd.inputs"));
  const Vector y = gaussian_vector(cfg.sgd.n, derive_seed(cfg.seed, "cli.sgd.targets"));
  const ColMatrix G = X * X.transpose();
  const double lambda_max = Eigen::SelfAdjointEigenSolver<ColMatrix>(G, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double lr = cfg.sgd.lr > 0.0 ? cfg.sgd.lr : 0.5 / lambda_max;
  SgdLinearOptions options;
  options.steps = cfg.sgd.steps;
  options.snapshot_every = cfg.sgd.snapshot_every;
  options.seed = derive_seed(cfg.seed, "cli.sgd.order");
  const auto trace = sgd_linear_train(X, y, constant_step(lr), options);

  double max_span = 0.0;
  for (const auto& s : trace.snapshots) max_span = std::max(max_span, s.span_residual);
  const std::vector<Vector> points{Vector::Zero(X.cols()), trace.final_w};
  const auto hessian = hessian_linear(X, y, LossKind::Squared, points);

  manifest.add({"sgd_trace.csv", trace.to_csv()});
  const auto& last = trace.snapshots.back();
  Json summary;
  summary["n"] = cfg.sgd.n;
  summary["d"] = cfg.sgd.d;
  summary["steps"] = cfg.sgd.steps;
  summary["step_size"] = num(lr);
  summary["lambda_max_xxt"] = num(lambda_max);
  summary["max_span_residual"] = num(max_span);
  summary["final_dist_to_min_norm"] = num(last.dist_to_min_norm);
  summary["final_train_residual"] = num(last.train_residual);
  summary["hessian_max_difference"] = num(hessian.max_difference);
  summary["hessian_min_eigenvalue"] = num(hessian.min_eigenvalue);
  manifest.add({"summary.json", summary.dump(2) + "\n"});

  out << "step_size " << format_double(lr) << "  max_span_residual " << format_double(max_span)
      << "  final_dist_to_min_norm " << format_double(last.dist_to_min_norm) << "  hessian_max_difference "
      << format_double(hessian.max_difference) << '\n';
}

void residual_row(std::ostream& os, const std::string& name, std::size_t k, std::size_t weights,
                  std::size_t max_width, const FitResidual& r) {
  os << name << ',' << k << ',' << weights << ',' << max_width << ',' << format_double(r.max_abs) << ','
     << format_double(r.max_rel) << '\n';
}

constexpr const char* kResidualHeader = "construction,k,weights,max_width,max_abs,max_rel\n";

// The hand-worked instance: z = (0, 1), y = (3, -1), a = 1, b = (-0.5, 0.5).
void run_expressivity_demo(const RunConfig& cfg, RunManifest& manifest, std::ostream& out) {
  if (cfg.expressivity.n != 2 || cfg.expressivity.d != 1) {
    throw ValidationError("the expressivity demo is the n = 2, d = 1 instance; pass --n 2 --d 1");
  }
  Matrix z(2, 1);
  z << 0.0, 1.0;
  Vector y(2);
  y << 3.0, -1.0;
  Vector x(2), b(2);
  x << 0.0, 1.0;
  b << -0.5, 0.5;
  const auto lemma = lemma_matrix_props(x, b);
  InterpolatorNet worked;
  worked.a = Vector::Ones(1);
  worked.b = b;
  worked.w = forward_substitute(lemma.matrix.A, y);
  worked.sort_order = {0, 1};
  const auto built = construct_depth2(z, y, derive_seed(cfg.seed, "cli.expressivity.net"));

  std::ostringstream table;
  table << kResidualHeader;
  residual_row(table, "worked", 2, worked.weight_count(), 2, fit_residual(worked, z, y));
  residual_row(table, "depth2", 2, built.weight_count(), 2, fit_residual(built, z, y));
  manifest.add({"expressivity.csv", table.str()});
  manifest.add({"worked.json", worked.to_json()});
  manifest.add({"depth2.json", built.to_json()});
  out << "worked instance: b = " << vector_text(b) << "  w = " << vector_text(worked.w) << "  c(0) = "
      << format_double(eval_interpolator(worked, z.row(0).transpose())) << "  c(1) = "
      << format_double(eval_interpolator(worked, z.row(1).transpose())) << '\n'
      << table.str();
}

void run_expressivity(const RunConfig& cfg, RunManifest& manifest, std::ostream& out) {
  if (cfg.expressivity.demo) return run_expressivity_demo(cfg, manifest, out);
  const auto n = cfg.expressivity.n;
  const auto d = cfg.expressivity.d;
  const Matrix z = gaussian_matrix(n, d, derive_seed(cfg.seed, "cli.expressivity.samples"));
  const Vector y = gaussian_vector(n, derive_seed(cfg.seed, "cli.expressivity.targets"));
  const std::uint64_t net_seed = derive_seed(cfg.seed, "cli.expressivity.net");

  std::ostringstream table;
  table << kResidualHeader;
  const auto depth2 = construct_depth2(z, y, net_seed);
  residual_row(table, "depth2", 2, depth2.weight_count(), n, fit_residual(depth2, z, y));
  manifest.add({"depth2.json", depth2.to_json()});
  for (std::size_t k : cfg.expressivity.ks) {
    const auto net = construct_depth_k(z, y, k, net_seed);
    residual_row(table, "layered", k, net.weight_count(), net.max_width(), fit_residual(net, z, y));
    manifest.add({"layered_k" + std::to_string(k) + ".json", net.to_json()});
  }
  manifest.add({"expressivity.csv", table.str()});
  out << table.str();
}

void run_rademacher(const RunConfig& cfg, RunManifest& manifest, std::ostream& out, std::ostream& err) {
  const auto data = load_splits(cfg, true);
  const Dataset sample = take(data.train, cfg.rademacher.n, "rademacher.n");
  RademacherEstimate est;
  if (cfg.rademacher.family == "constant") {
    est = rademacher_estimate(sample.features, constant_family_fitter(), cfg.rademacher.trials,
                              derive_seed(cfg.seed, "cli.rademacher"), "constant {+1, -1}");
    est.lower_bound = false;
  } else {
    const auto spec = mlp_spec(cfg, sample.dim(), 1);
    err << "rademacher: " << spec.shape_string() << ", n=" << sample.size() << ", trials=" << cfg.rademacher.trials
        << '\n';
    est = rademacher_estimate(sample, spec, cfg.train, cfg.rademacher.trials);
  }
  manifest.add({"rademacher.csv", rademacher_csv(est)});
  manifest.add({"rademacher.json", rademacher_json(est)});
  out << "mean " << format_double(est.mean) << "  std_error " << format_double(est.std_error) << "  n " << est.n
      << "  trials " << est.correlations.size() << '\n';
}

void run_param_count(const RunConfig& cfg, RunManifest& manifest, std::ostream& out) {
  MlpSpec spec;
  spec.input_dim = cfg.param_count.input_dim;
  spec.hidden_widths = parse_hidden_widths(cfg.param_count.mlp);
  spec.num_classes = cfg.param_count.classes;
  spec.validate();
  const auto count = param_count(spec);
  Json j;
  j["model"] = spec.shape_string();
  j["param_count"] = count;
  manifest.add({"param_count.json", j.dump(2) + "\n"});
  out << count << '\n';
}

// -- argument parsing ------------------------------------------------------------

// A flag whose value, when given, overrides one config key.
struct Override {
  CLI::Option* option = nullptr;
  std::string key;
  std::function<Json()> value;
};

class FlagSet {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto storage = std::make_shared<T>();
    auto* opt = app->add_option(flag, *storage, help);
    if constexpr (requires { storage->push_back(storage->front()); }) opt->delimiter(',');
    overrides_.push_back({opt, key, [storage] { return Json(*storage); }});
  }

  void add_switch(CLI::App* app, const std::string& flag, const std::string& key, Json value,
                  const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    overrides_.push_back({opt, key, [value] { return Json(value); }});
  }

  // Sets several keys at once from one directory argument.
  void add_dir(CLI::App* app, const std::string& flag, std::function<Json(const std::string&)> expand,
               const std::string& help) {
    auto storage = std::make_shared<std::string>();
    auto* opt = app->add_option(flag, *storage, help);
    overrides_.push_back({opt, "", [storage, expand] { return expand(*storage); }});
  }

  void apply(Json& doc) const {
    for (const auto& o : overrides_) {
      if (o.option->count() == 0) continue;
      if (o.key.empty()) {
        merge_strict(doc, o.value());
      } else {
        set_key(doc, o.key, o.value());
      }
    }
  }

 private:
  std::vector<Override> overrides_;
};

std::string pick_gz(const std::filesystem::path& dir, const std::string& stem) {
  const auto gz = dir / (stem + ".gz");
  return std::filesystem::exists(gz) ? gz.string() : (dir / stem).string();
}

Json idx_dir(const std::string& dir) {
  return {{"data",
           {{"source", "idx"},
            {"idx",
             {{"train_images", pick_gz(dir, "train-images-idx3-ubyte")},
              {"train_labels", pick_gz(dir, "train-labels-idx1-ubyte")},
              {"test_images", pick_gz(dir, "t10k-images-idx3-ubyte")},
              {"test_labels", pick_gz(dir, "t10k-labels-idx1-ubyte")}}}}}};
}

Json cifar_dir(const std::string& dir) {
  Json train = Json::array();
  for (int i = 1; i <= 5; ++i) {
    train.push_back((std::filesystem::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string());
  }
  const Json test = Json::array({(std::filesystem::path(dir) / "test_batch.bin").string()});
  return {{"data", {{"source", "cifar"}, {"cifar", {{"train", train}, {"test", test}}}}}};
}

void add_data_flags(FlagSet& flags, CLI::App* sub, bool with_n) {
  flags.add_dir(sub, "--idx-dir", idx_dir, "directory holding the four MNIST-style IDX files");
  flags.add_dir(sub, "--cifar-dir", cifar_dir, "directory holding the CIFAR-10 binary batches");
  flags.add_switch(sub, "--synth", "data.source", "synth", "use synthetic Gaussian blobs");
  if (with_n) flags.add<std::size_t>(sub, "--n", "data.n", "training rows to keep (0 = all)");
  flags.add<std::size_t>(sub, "--n-test", "data.n_test", "test rows to keep (0 = all)");
  flags.add_switch(sub, "--no-whiten", "data.whiten", false, "skip per-image whitening");
}

void add_train_flags(FlagSet& flags, CLI::App* sub) {
  flags.add<std::string>(sub, "--mlp", "model.hidden", "hidden layers, e.g. 1x512 or 512,256");
  flags.add<double>(sub, "--weight-decay", "model.weight_decay", "l2 coefficient on weights");
  flags.add<double>(sub, "--lr", "train.lr", "initial learning rate");
  flags.add<double>(sub, "--lr-decay", "train.lr_decay", "per-epoch learning-rate factor");
  flags.add<double>(sub, "--momentum", "train.momentum", "heavy-ball momentum");
  flags.add<std::size_t>(sub, "--batch-size", "train.batch_size", "mini-batch size");
  flags.add<std::size_t>(sub, "--epochs", "train.max_epochs", "epoch budget");
  flags.add<double>(sub, "--fit-threshold", "train.fit_threshold", "train accuracy that counts as fit");
}

void add_randomization_flags(FlagSet& flags, CLI::App* sub) {
  flags.add<std::string>(sub, "--mode", "randomization.mode",
                         "true_labels, partial_corruption, random_labels, shuffled_pixels, random_pixels, "
                         "gaussian_pixels");
  flags.add<double>(sub, "--p", "randomization.p", "label corruption probability");
}

}  // namespace

void run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  RunManifest manifest(cfg.out, cfg.subcommand, cfg.resolved.dump());
  manifest.begin();
  const auto& s = cfg.subcommand;
  if (s == "fit-random") {
    run_fit_random(cfg, manifest, out, err);
  } else if (s == "sweep-corruption") {
    run_sweep(cfg, manifest, out, err);
  } else if (s == "kernel") {
    run_kernel(cfg, manifest, out, err);
  } else if (s == "sgd-linear") {
    run_sgd_linear(cfg, manifest, out);
  } else if (s == "expressivity") {
    run_expressivity(cfg, manifest, out);
  } else if (s == "rademacher") {
    run_rademacher(cfg, manifest, out, err);
  } else if (s == "param-count") {
    run_param_count(cfg, manifest, out);
  } else {
    throw ValidationError("unknown subcommand '" + s + "'");
  }
  manifest.finish();
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capacity and memorization experiments for ReLU networks and kernel machines", "memcap"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  FlagSet global;
  app.add_option("--config", config_path, "JSON config file (flags override its values)");
  global.add<std::uint64_t>(&app, "--seed", "seed", "global seed");
  global.add<std::string>(&app, "--out", "out", "output directory");
  global.add<std::size_t>(&app, "--jobs", "jobs", "sweep worker threads (0 = logical cores)");

  std::map<std::string, FlagSet> flags;
  auto* fit = app.add_subcommand("fit-random", "train an MLP on (possibly randomized) data");
  add_data_flags(flags["fit-random"], fit, true);
  add_randomization_flags(flags["fit-random"], fit);
  add_train_flags(flags["fit-random"], fit);

  auto* sweep = app.add_subcommand("sweep-corruption", "label-corruption sweep over p and seeds");
  add_data_flags(flags["sweep-corruption"], sweep, true);
  add_train_flags(flags["sweep-corruption"], sweep);
  flags["sweep-corruption"].add<std::vector<double>>(sweep, "--p-grid", "sweep.p_grid", "corruption levels");
  flags["sweep-corruption"].add<std::vector<std::uint64_t>>(sweep, "--seeds", "sweep.seeds", "seeds");

  auto* kernel = app.add_subcommand("kernel", "kernel interpolation and ridge path on one-hot targets");
  add_data_flags(flags["kernel"], kernel, false);
  add_randomization_flags(flags["kernel"], kernel);
  std::size_t kernel_n = 0;
  auto* kernel_n_opt = kernel->add_option("--n", kernel_n, "training rows to keep (with --demo: demo size)");
  flags["kernel"].add<std::string>(kernel, "--kind", "kernel.kind", "linear or rbf");
  flags["kernel"].add<double>(kernel, "--gamma", "kernel.gamma", "RBF gamma (0 = median heuristic)");
  flags["kernel"].add<std::vector<double>>(kernel, "--lambdas", "kernel.lambdas", "ridge values");
  flags["kernel"].add<std::size_t>(kernel, "--features", "kernel.features", "random ReLU features (0 = raw)");
  flags["kernel"].add<double>(kernel, "--feature-scale", "kernel.feature_scale", "random feature scale");
  flags["kernel"].add_switch(kernel, "--demo", "kernel.demo", true, "solve the built-in demo problem");

  auto* sgd = app.add_subcommand("sgd-linear", "SGD on linear least squares from zero");
  flags["sgd-linear"].add<std::size_t>(sgd, "--n", "sgd.n", "samples");
  flags["sgd-linear"].add<std::size_t>(sgd, "--d", "sgd.d", "dimension");
  flags["sgd-linear"].add<std::size_t>(sgd, "--steps", "sgd.steps", "SGD steps");
  flags["sgd-linear"].add<double>(sgd, "--lr", "sgd.lr", "constant step (0 = 0.5 / lambda_max)");
  flags["sgd-linear"].add<std::size_t>(sgd, "--snapshot-every", "sgd.snapshot_every", "snapshot interval");

  auto* expr = app.add_subcommand("expressivity", "exact interpolation constructions");
  flags["expressivity"].add<std::size_t>(expr, "--n", "expressivity.n", "samples");
  flags["expressivity"].add<std::size_t>(expr, "--d", "expressivity.d", "dimension");
  flags["expressivity"].add<std::vector<std::size_t>>(expr, "--k", "expressivity.ks", "layered depths");
  flags["expressivity"].add_switch(expr, "--demo", "expressivity.demo", true, "the n=2, d=1 worked instance");

  auto* rad = app.add_subcommand("rademacher", "empirical Rademacher complexity estimate");
  add_data_flags(flags["rademacher"], rad, false);
  add_train_flags(flags["rademacher"], rad);
  flags["rademacher"].add<std::size_t>(rad, "--n", "rademacher.n", "sample size");
  flags["rademacher"].add<std::size_t>(rad, "--trials", "rademacher.trials", "sign draws");
  flags["rademacher"].add<std::string>(rad, "--family", "rademacher.family", "mlp or constant");

  auto* pc = app.add_subcommand("param-count", "parameter count of an MLP");
  flags["param-count"].add<std::string>(pc, "--mlp", "param_count.mlp", "hidden layers, e.g. 3x512");
  flags["param-count"].add<std::size_t>(pc, "--input-dim", "param_count.input_dim", "input dimension");
  flags["param-count"].add<int>(pc, "--classes", "param_count.classes", "output classes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    Json doc = default_config();
    if (!config_path.empty()) merge_strict(doc, read_config_file(config_path));
    global.apply(doc);
    flags[name].apply(doc);
    if (kernel_n_opt->count() > 0) {
      set_key(doc, doc.at("kernel").at("demo").get<bool>() ? "kernel.demo_n" : "data.n", Json(kernel_n));
    }
    const RunConfig cfg = resolve(name, std::move(doc));
    run(cfg, out, err);
    return kExitOk;
  } catch (const NumericError& e) {
    err << "memcap: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ValidationError& e) {
    err << "memcap: invalid input: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const IoError& e) {
    err << "memcap: i/o error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const Json::exception& e) {
    err << "memcap: invalid config: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace memcap::cli
