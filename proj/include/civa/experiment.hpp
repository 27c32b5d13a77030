#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "civa/constraints.hpp"
#include "civa/hybrid.hpp"
#include "civa/report.hpp"

namespace civa {

enum class SweepAxis { None, K, M };
enum class DataProtocol {
  Auto,          // FixedSources for K sweeps, FreshSources for M sweeps
  FixedSources,  // one dataset per sweep point, runs differ by initialization
  FreshSources   // fixed mixing per point, sources redrawn per run
};

struct AlgorithmSpec {
  Variant variant = Variant::IvaG;
  SolverSettings solver;
  ConstraintSettings constraint;  // Lagrangian variants
  RegularizerSettings regularizer;  // tf-cIVA

  std::string tag() const { return variant_name(variant); }
  static AlgorithmSpec for_variant(Variant v);
};

struct ExperimentConfig {
  HybridConfig hybrid;
  std::vector<AlgorithmSpec> algorithms;
  SweepAxis axis = SweepAxis::None;
  std::vector<long> values;  // sweep values; ignored for None
  int runs_per_point = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir;
  bool shared_init = true;
  DataProtocol protocol = DataProtocol::Auto;
  int threads = 0;  // 0 = hardware concurrency (capped)
  bool omit_timing = false;     // print runtime_s as 0 for byte-stable output
  bool persist_matrices = true;
  bool write_reports = true;

  void validate() const;
  DataProtocol resolved_protocol() const;
};

struct ExperimentRun {
  std::string axis;  // "K", "M" or "none"
  long value = 0;
  int run_index = 0;
  RunReport report;
};

struct AggregateRow {
  std::string axis;
  long value = 0;
  std::string variant;
  int count = 0;
  double mean_joint_isi = 0, std_joint_isi = 0;
  double mean_cross_joint_isi = 0, std_cross_joint_isi = 0;
  double mean_sf = 0, std_sf = 0;
  double mean_runtime = 0, std_runtime = 0;
  double mean_iters = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRun> runs;
  std::vector<AggregateRow> aggregates;
  std::vector<std::string> variant_order;
  std::vector<long> point_values;
  std::string axis;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

std::string summary_csv_text(const ExperimentResult& result, bool omit_timing);
void write_summary_csv(const std::string& path, const ExperimentResult& result, bool omit_timing);
void write_aggregate_csv(const std::string& path, const ExperimentResult& result);

/// One whitespace-delimited table per metric (joint_isi, cross_joint_isi,
/// sf, runtime): sweep value, then mean and std per algorithm.
void emit_plot_data(const std::string& dir, const ExperimentResult& result);

// Config documents (JSON natively; TOML via a small subset parser).
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);
ExperimentConfig load_config_file(const std::string& path);

/// Compact single-line JSON echo of one algorithm's settings, for reports.
std::string algorithm_spec_json(const AlgorithmSpec& spec);

/// Seed tags used by the harness; exposed so tests can pin them down.
std::uint64_t experiment_init_seed(const ExperimentConfig& config, long value, int run_index,
                                   const std::string& variant_tag);
std::uint64_t experiment_data_seed(const ExperimentConfig& config, long value, int run_index);
std::uint64_t experiment_mixing_seed(const ExperimentConfig& config, long value);

}  // namespace civa
