#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwsoc/measure.hpp"
#include "cwsoc/sym_mat.hpp"
#include "json.hpp"

namespace cwsoc {

// Config schema violation; fields lists every offending key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> fields);
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

enum class ExperimentKind {
  lln,
  fluct,
  limit_law,
  ldp_scan,
  ising_baseline,
  oracle_compare,
  g_bound,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
const std::vector<std::string>& experiment_names();

nlohmann::json measure_to_json(const MeasureSpec& spec);
MeasureSpec measure_from_json(const nlohmann::json& j);

// Fully resolved run description: parsed from JSON with per-experiment
// defaults merged in, so the echo in the result record is self-contained.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::lln;
  MeasureSpec measure;
  int n = 0;
  std::vector<int> n_list;
  int chains = 1;
  long long burn_in = -1;  // -1: ten sweeps
  long long steps = 0;
  long long thin = -1;     // -1: one sweep
  std::uint64_t seed = 0;
  std::string mode = "raw";  // raw | whitened (fluct, limit-law)
  bool dump_samples = false;
  long long oracle_draws = 0;  // oracle-compare
  int trials = 0;              // g-bound
  bool has_coupling = false;   // ising-baseline; false means 2 * sigma
  SymMat coupling;
  long long reference_draws = 0;  // ising-baseline two-sample reference cloud
  int grid_per_axis = 21;         // ldp-scan
  int random_points = 500;
  double contraction = 0.9;
  double exclusion_radius = 0.05;
  nlohmann::json thresholds;   // resolved verdict thresholds

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ResultRecord {
  nlohmann::json record;
  bool pass = false;
};

// Runs the experiment and writes result.json, optional samples.csv, and
// plotdata/*.csv under out_dir. The record never contains paths or clock
// values, so reruns with equal config and seed are byte-identical.
ResultRecord run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace cwsoc
