#include "memcap/report.hpp"

#include <sstream>
#include <system_error>

#include <json.hpp>

#include "memcap/error.hpp"
#include "memcap/io.hpp"

namespace memcap {

namespace {

using nlohmann::ordered_json;
using io::format_double;

// JSON numbers printed with 9 significant digits, matching the CSVs.
ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return ordered_json::parse(format_double(v));
}

}  // namespace

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream os;
  os << "p,seed,steps_to_fit,rel_convergence,train_acc,test_err,fit_flag\n";
  for (const auto& r : report.rows) {
    os << format_double(r.p) << ',' << r.seed << ',';
    if (r.steps_to_fit) os << *r.steps_to_fit;
    os << ',';
    if (r.rel_convergence) os << format_double(*r.rel_convergence);
    os << ',' << format_double(r.train_acc) << ',' << format_double(r.test_err) << ','
       << (r.fit ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string sweep_json(const SweepReport& report) {
  ordered_json j;
  j["model"] = report.model;
  j["fit_threshold"] = num(report.fit_threshold);
  j["convergence_definition"] =
      "epochs completed before train accuracy first holds >= fit_threshold for two consecutive evaluations";
  j["label_corruption"] = "uniform over all classes, true class included";
  ordered_json grid = ordered_json::array();
  for (double p : report.p_grid) grid.push_back(num(p));
  j["p_grid"] = grid;
  j["seeds"] = report.seeds;
  const auto steps = report.mean_steps_by_p();
  const auto errs = report.mean_test_err_by_p();
  ordered_json summary = ordered_json::array();
  for (std::size_t g = 0; g < report.p_grid.size(); ++g) {
    summary.push_back({{"p", num(report.p_grid[g])},
                       {"mean_steps_to_fit", num(steps[g])},
                       {"mean_test_err", num(errs[g])}});
  }
  j["summary"] = summary;
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"p", num(r.p)},
                    {"seed", r.seed},
                    {"steps_to_fit", r.steps_to_fit ? ordered_json(*r.steps_to_fit) : ordered_json(nullptr)},
                    {"rel_convergence", r.rel_convergence ? num(*r.rel_convergence) : ordered_json(nullptr)},
                    {"train_acc", num(r.train_acc)},
                    {"test_err", num(r.test_err)},
                    {"fit", r.fit},
                    {"effective_flip_rate", num(r.effective_flip_rate)},
                    {"epochs_run", r.epochs_run}});
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string rademacher_csv(const RademacherEstimate& est) {
  std::ostringstream os;
  os << "trial,correlation\n";
  for (std::size_t t = 0; t < est.correlations.size(); ++t) {
    os << t << ',' << format_double(est.correlations[t]) << '\n';
  }
  return os.str();
}

std::string rademacher_json(const RademacherEstimate& est) {
  ordered_json j;
  j["family"] = est.family;
  j["n"] = est.n;
  j["trials"] = est.correlations.size();
  j["mean"] = num(est.mean);
  j["std_error"] = num(est.std_error);
  j["estimator"] = est.lower_bound
                       ? "lower bound on the supremum: correlation achieved by a trained fit, sign(0)=+1"
                       : "exact supremum over the family";
  return j.dump(2) + "\n";
}

std::string ridge_path_csv(const std::vector<RidgePoint>& path) {
  std::ostringstream os;
  os << "lambda,rkhs_norm,train_err,test_err\n";
  for (const auto& pt : path) {
    os << format_double(pt.lambda) << ',' << format_double(pt.rkhs_norm) << ','
       << format_double(pt.train_err) << ',' << format_double(pt.test_err) << '\n';
  }
  return os.str();
}

RunManifest::RunManifest(std::filesystem::path out_dir, std::string command, std::string config_json)
    : out_dir_(std::move(out_dir)), command_(std::move(command)), config_json_(std::move(config_json)) {}

void RunManifest::begin() {
  std::error_code ec;
  std::filesystem::create_directories(out_dir_, ec);
  if (ec) throw IoError("cannot create " + out_dir_.string() + ": " + ec.message());
  entries_.clear();
  write(false);
}

void RunManifest::add(const ReportArtifact& artifact) {
  io::write_text(out_dir_ / artifact.filename, artifact.content);
  entries_.push_back({artifact.filename, io::sha256_hex(artifact.content), artifact.content.size()});
  write(false);
}

void RunManifest::add_existing(const std::string& filename) {
  const auto bytes = io::read_bytes(out_dir_ / filename);
  entries_.push_back({filename, io::sha256_hex(bytes), bytes.size()});
  write(false);
}

void RunManifest::finish() { write(true); }

void RunManifest::write(bool complete) const {
  ordered_json j;
  j["command"] = command_;
  try {
    j["config"] = ordered_json::parse(config_json_);
  } catch (const ordered_json::exception&) {
    j["config"] = config_json_;
  }
  j["complete"] = complete;
  ordered_json files = ordered_json::array();
  for (const auto& e : entries_) {
    files.push_back({{"file", e.filename}, {"sha256", e.sha256}, {"bytes", e.bytes}});
  }
  j["files"] = files;
  io::write_text(out_dir_ / "manifest.json", j.dump(2) + "\n");
}

std::vector<ManifestEntry> write_report(const std::vector<ReportArtifact>& artifacts,
                                        const std::filesystem::path& out_dir,
                                        const std::string& command, const std::string& config_json) {
  RunManifest manifest(out_dir, command, config_json);
  manifest.begin();
  for (const auto& a : artifacts) manifest.add(a);
  manifest.finish();
  return manifest.entries();
}

}  // namespace memcap
