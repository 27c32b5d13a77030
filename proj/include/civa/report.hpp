#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "civa/types.hpp"

namespace civa {

struct SchemeSwitchEvent {
  int sweep = 0;
  int component = 0;  // n
  int dataset = 0;    // k
  bool to_argmax = false;

  bool operator==(const SchemeSwitchEvent&) const = default;
};

/// Everything a single solver run produces: the converged demixing set and
/// SCV covariances, traces, metric values filled in by the harness, timing
/// and the seed/config needed to reproduce it.
struct RunReport {
  std::string variant;
  std::uint64_t seed = 0;

  int iterations = 0;
  bool converged = false;
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  double final_eta = 0.0;
  double final_change = std::numeric_limits<double>::quiet_NaN();

  // objective_trace[0] is the value at the initial point, then one entry
  // per sweep; decay_iterations lists the sweeps whose objective failed to
  // decrease and therefore triggered a step decay.
  std::vector<double> objective_trace;
  std::vector<int> decay_iterations;

  double cache_seconds = 0.0;
  double solve_seconds = 0.0;
  double per_iteration_seconds = 0.0;
  double total_seconds = 0.0;

  // Constraint side (empty matrices when not applicable).
  Matrix final_eps;  // M x K similarity at exit
  Matrix final_rho;
  Matrix final_mu;
  std::vector<double> mean_mu_trace;
  std::vector<double> mean_rho_trace;
  std::vector<SchemeSwitchEvent> switch_events;
  Eigen::MatrixXi first_argmax_switch;  // M x K, sweep of first ARGMAX flip, -1 if never
  Eigen::MatrixXi first_mu_zero;        // M x K, first sweep the multiplier hit 0, -1 if never
  int constraints_satisfied = -1;
  int constraints_total = -1;
  // (n,k) pairs whose own-reference similarity fails to dominate every
  // cross-reference similarity among the constrained components.
  int eps_rank_violations = -1;

  // Metrics, filled by the harness when ground truth or sibling runs exist.
  double joint_isi = std::numeric_limits<double>::quiet_NaN();
  double cross_joint_isi = std::numeric_limits<double>::quiet_NaN();
  double similarity_factor = std::numeric_limits<double>::quiet_NaN();
  bool sf_used_matching = false;

  bool failed = false;
  std::string error;

  std::string w_path;      // persisted demixing matrices (K*N x N stacked)
  std::string sigma_path;  // persisted SCV covariances (N*K x K stacked)
  std::string config_echo; // JSON text of the settings this run used

  std::optional<DemixingSet> demixing;
  std::optional<SCVCovarianceSet> scv_covariances;
};

/// Line-delimited serialization: each report is a sequence of one-line JSON
/// records (meta, traces, constraints, metrics). In-memory matrices are not
/// embedded; they live in the files named by w_path / sigma_path.
std::string report_to_text(const RunReport& report);
RunReport report_from_text(const std::string& text);

void save_report(const std::string& path, const RunReport& report);
RunReport load_report(const std::string& path);

}  // namespace civa
