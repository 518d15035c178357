#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memcap/kernel.hpp"
#include "memcap/net.hpp"
#include "memcap/probe.hpp"

namespace memcap {

struct ReportArtifact {
  std::string filename;  // relative to the output directory
  std::string content;
};

struct ManifestEntry {
  std::string filename;
  std::string sha256;
  std::size_t bytes = 0;
};

/// One row of a ridge path: (lambda, rkhs_norm, train_err, test_err).
struct RidgePoint {
  double lambda = 0.0;
  double rkhs_norm = 0.0;
  double train_err = 0.0;
  double test_err = 0.0;
};

// Fixed-schema renderers; floats use 9 significant digits.
std::string sweep_csv(const SweepReport& report);
std::string sweep_json(const SweepReport& report);
std::string rademacher_csv(const RademacherEstimate& est);
std::string rademacher_json(const RademacherEstimate& est);
std::string ridge_path_csv(const std::vector<RidgePoint>& path);

/// Writes `manifest.json` in `out_dir`: the echoed run configuration, one
/// entry per artifact with its SHA-256, and a "complete" flag. A run calls
/// begin() before producing anything and finish() last, so an interrupted run
/// leaves "complete": false behind.
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string command, std::string config_json);

  void begin();
  /// Writes the artifact and records its hash.
  void add(const ReportArtifact& artifact);
  /// Records a file some other writer already placed in the output directory.
  void add_existing(const std::string& filename);
  void finish();

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }

 private:
  void write(bool complete) const;

  std::filesystem::path out_dir_;
  std::string command_;
  std::string config_json_;
  std::vector<ManifestEntry> entries_;
};

/// Writes every artifact plus manifest.json; returns the manifest entries.
/// Identical inputs produce byte-identical files.
std::vector<ManifestEntry> write_report(const std::vector<ReportArtifact>& artifacts,
                                        const std::filesystem::path& out_dir,
                                        const std::string& command = "report",
                                        const std::string& config_json = "{}");

}  // namespace memcap
