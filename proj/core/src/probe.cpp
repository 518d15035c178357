#include "memcap/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "memcap/error.hpp"
#include "memcap/rng.hpp"

namespace memcap {

RademacherEstimate rademacher_estimate(const Matrix& inputs, const SignFitter& fitter,
                                       std::size_t trials, std::uint64_t seed, std::string family) {
  if (trials == 0) throw ValidationError("rademacher_estimate needs trials >= 1");
  const auto n = static_cast<std::size_t>(inputs.rows());
  if (n == 0) throw ValidationError("rademacher_estimate needs a nonempty sample");

  RademacherEstimate est;
  est.n = n;
  est.family = std::move(family);
  std::vector<int> sigma(n);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, "probe.rademacher.sigma", trial));
    for (auto& s : sigma) s = (rng.next_u64() >> 63) != 0 ? 1 : -1;
    const auto h = fitter(inputs, sigma, trial);
    if (h.size() != n) throw ValidationError("sign fitter returned the wrong number of predictions");
    long agree = 0;
    for (std::size_t i = 0; i < n; ++i) agree += sigma[i] * (h[i] >= 0.0 ? 1 : -1);
    est.correlations.push_back(static_cast<double>(agree) / static_cast<double>(n));
  }
  const double t = static_cast<double>(trials);
  est.mean = std::accumulate(est.correlations.begin(), est.correlations.end(), 0.0) / t;
  if (trials > 1) {
    double ss = 0.0;
    for (double c : est.correlations) ss += (c - est.mean) * (c - est.mean);
    est.std_error = std::sqrt(ss / (t - 1.0)) / std::sqrt(t);
  }
  return est;
}

RademacherEstimate rademacher_estimate(const Dataset& ds, const MlpSpec& spec, const TrainConfig& cfg,
                                       std::size_t trials) {
  if (spec.num_classes != 1 && spec.num_classes != 2) {
    throw ValidationError("Rademacher estimation needs a scalar head (num_classes = 1) or 2 classes");
  }
  if (spec.input_dim != ds.dim()) throw ValidationError("MLP input dim does not match the dataset");
  SignFitter fitter = [&](const Matrix& inputs, std::span<const int> sigma, std::size_t trial) {
    Dataset signs;
    signs.name = ds.name + "/rademacher";
    signs.features = inputs;
    signs.num_classes = 2;
    signs.labels.resize(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) signs.labels[i] = sigma[i] > 0 ? 1 : 0;
    TrainConfig trial_cfg = cfg;
    trial_cfg.seed = derive_seed(cfg.seed, "probe.rademacher.train", trial);
    auto params = init_mlp(spec, derive_seed(cfg.seed, "probe.rademacher.init", trial));
    const auto trace = train(std::move(params), signs, trial_cfg);
    const Matrix out = forward(trace.final_params, inputs);
    std::vector<double> h(static_cast<std::size_t>(out.rows()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      h[static_cast<std::size_t>(i)] = spec.scalar_head() ? out(i, 0) : out(i, 1) - out(i, 0);
    }
    return h;
  };
  std::string family = "mlp " + spec.shape_string() + (spec.scalar_head() ? " scalar/squared" : " softmax");
  return rademacher_estimate(ds.features, fitter, trials, cfg.seed, std::move(family));
}

SignFitter constant_family_fitter() {
  return [](const Matrix& inputs, std::span<const int> sigma, std::size_t) {
    const long sum = std::accumulate(sigma.begin(), sigma.end(), 0L);
    // sup over {+1, -1} of (1/n) sum sigma_i h: pick the sign of the sum.
    const double value = sum >= 0 ? 1.0 : -1.0;
    return std::vector<double>(static_cast<std::size_t>(inputs.rows()), value);
  };
}

std::vector<double> SweepReport::mean_steps_by_p() const {
  std::vector<double> out;
  for (double p : p_grid) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (r.p == p && r.steps_to_fit) {
        sum += static_cast<double>(*r.steps_to_fit);
        ++count;
      }
    }
    out.push_back(count ? sum / static_cast<double>(count) : std::nan(""));
  }
  return out;
}

std::vector<double> SweepReport::mean_test_err_by_p() const {
  std::vector<double> out;
  for (double p : p_grid) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (r.p == p) {
        sum += r.test_err;
        ++count;
      }
    }
    out.push_back(count ? sum / static_cast<double>(count) : std::nan(""));
  }
  return out;
}

SweepReport corruption_sweep(const Dataset& train, const Dataset& test, const MlpSpec& spec,
                             const TrainConfig& cfg, std::span<const double> p_grid,
                             std::span<const std::uint64_t> seeds, const SweepOptions& options) {
  if (p_grid.empty()) throw ValidationError("corruption sweep grid is empty");
  if (seeds.empty()) throw ValidationError("corruption sweep needs at least one seed");
  if (!std::is_sorted(p_grid.begin(), p_grid.end())) throw ValidationError("corruption grid must be sorted");
  if (p_grid.front() != 0.0) throw ValidationError("corruption grid must include p = 0");
  if (p_grid.back() > 1.0) throw ValidationError("corruption levels must lie in [0, 1]");
  if (train.dim() != spec.input_dim || test.dim() != spec.input_dim) {
    throw ValidationError("dataset dim does not match the MLP input dim");
  }
  cfg.validate();

  SweepReport report;
  report.p_grid.assign(p_grid.begin(), p_grid.end());
  report.seeds.assign(seeds.begin(), seeds.end());
  report.model = spec.shape_string();
  report.fit_threshold = cfg.fit_threshold;
  report.rows.resize(p_grid.size() * seeds.size());

  auto run_cell = [&](std::size_t cell) {
    const double p = p_grid[cell / seeds.size()];
    const std::uint64_t seed = seeds[cell % seeds.size()];
    SweepRow row;
    row.p = p;
    row.seed = seed;
    row.effective_flip_rate = effective_flip_rate(p, train.num_classes);
    // Corruption streams depend on the seed only, so for one seed the labels
    // corrupted at a lower p are a subset of those corrupted at a higher p.
    const Dataset noisy = randomize_labels(train, RandomizationMode::PartialCorruption, p,
                                           derive_seed(seed, "probe.sweep.corrupt"));
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed = derive_seed(seed, "probe.sweep.train");
    try {
      const auto trace = memcap::train(init_mlp(spec, derive_seed(seed, "probe.sweep.init")), noisy, cell_cfg);
      row.steps_to_fit = trace.steps_to_fit;
      row.fit = trace.steps_to_fit.has_value();
      row.train_acc = trace.final_acc();
      row.epochs_run = trace.epochs.size();
      row.test_err = 1.0 - evaluate(trace.final_params, test).accuracy;
    } catch (const NumericError&) {
      row.fit = false;
      row.train_acc = 0.0;
      row.test_err = 1.0;
    }
    return row;
  };

  std::mutex callback_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t cell = next++; cell < report.rows.size(); cell = next++) {
      try {
        report.rows[cell] = run_cell(cell);
        if (options.on_cell) {
          std::lock_guard lock(callback_mutex);
          options.on_cell(report.rows[cell]);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, report.rows.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& anchor = report.rows[s];  // p = 0 row for this seed
    for (std::size_t g = 0; g < p_grid.size(); ++g) {
      auto& row = report.rows[g * seeds.size() + s];
      if (g == 0 && row.steps_to_fit) {
        row.rel_convergence = 1.0;
      } else if (row.steps_to_fit && anchor.steps_to_fit && *anchor.steps_to_fit > 0) {
        row.rel_convergence =
            static_cast<double>(*row.steps_to_fit) / static_cast<double>(*anchor.steps_to_fit);
      }
    }
  }
  return report;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman_rho needs two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace memcap
