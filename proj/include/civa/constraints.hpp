#pragma once

#include <string>
#include <utility>
#include <vector>

#include "civa/ivag.hpp"
#include "civa/report.hpp"
#include "civa/types.hpp"

namespace civa {

enum class Variant { IvaG, CivaFixed, PtCiva, ArCiva, TfCiva };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

enum class ThresholdStrategy { Fixed, ParameterTuned, AdaptiveReverse };
enum class SelectionScheme { ArgMin, ArgMax };
enum class SimilarityMode { Pearson, Cosine };

struct ConstraintSettings {
  ThresholdStrategy strategy = ThresholdStrategy::Fixed;
  std::vector<double> thresholds;  // candidate set P, sorted ascending, values in (0,1)
  double gamma = 3.0;              // penalty parameter
  double mu_max = 1.0;             // multiplier cut-off (adaptive-reverse only)
  double fixed_rho = 0.5;          // threshold for the fixed strategy
  double initial_mu = 0.0;
  SelectionScheme initial_scheme = SelectionScheme::ArgMin;

  static ConstraintSettings fixed_defaults();
  static ConstraintSettings pt_defaults();
  static ConstraintSettings ar_defaults();

  void validate() const;
};

struct RegularizerSettings {
  double lambda = 1.0;

  void validate() const;
};

/// Per-(component, dataset) thresholds, multipliers and selection-scheme
/// flags for the Lagrangian variants. Owned by a single run.
class ConstraintState {
 public:
  ConstraintState(int num_constraints, int num_datasets, const ConstraintSettings& settings);

  double rho(int n, int k) const { return rho_(n, k); }
  double mu(int n, int k) const { return mu_(n, k); }
  SelectionScheme scheme(int n, int k) const { return scheme_[idx(n, k)]; }

  void set_rho(int n, int k, double value) { rho_(n, k) = value; }
  void set_mu(int n, int k, double value);
  void set_scheme(int n, int k, SelectionScheme s) { scheme_[idx(n, k)] = s; }

  const Matrix& rho_matrix() const { return rho_; }
  const Matrix& mu_matrix() const { return mu_; }
  const ConstraintSettings& settings() const { return settings_; }

  int num_constraints() const { return m_; }
  int num_datasets() const { return k_; }

  // Dynamics bookkeeping used by reports and the acceptance suite.
  void record_sweep(int sweep) { sweep_ = sweep; }
  const Eigen::MatrixXi& first_argmax_switch() const { return first_argmax_switch_; }
  const Eigen::MatrixXi& first_mu_zero() const { return first_mu_zero_; }
  const std::vector<SchemeSwitchEvent>& switch_events() const { return switch_events_; }

  /// Scheme update from the freshly clipped multiplier (adaptive-reverse).
  void maybe_switch_scheme(int n, int k);

 private:
  int idx(int n, int k) const { return n * k_ + k; }

  ConstraintSettings settings_;
  int m_ = 0;
  int k_ = 0;
  int sweep_ = 0;
  Matrix rho_;
  Matrix mu_;
  std::vector<SelectionScheme> scheme_;
  Eigen::MatrixXi first_argmax_switch_;
  Eigen::MatrixXi first_mu_zero_;
  std::vector<SchemeSwitchEvent> switch_events_;
};

// ---------------------------------------------------------------------------
// Similarity measure and its gradients

/// |corr(a, b)| in [0, 1]. Pearson mode centers both inputs first; Cosine
/// mode uses the raw vectors.
double similarity(const Vector& a, const Vector& b, SimilarityMode mode = SimilarityMode::Pearson);

/// d eps / d y at full sample resolution (tests and oracles).
Vector similarity_gradient_y(const Vector& r, const Vector& y,
                             SimilarityMode mode = SimilarityMode::Pearson);

/// eps(r_m, y_n^[k]) evaluated from the caches: no O(V) pass.
double similarity_vfree(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                        const DemixingSet& w, int m, int n, int k);

/// d eps(r_m, y_n^[k]) / d w_n^[k], V-free.
Vector similarity_gradient(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                           const DemixingSet& w, int m, int n, int k);

/// M x K matrix of eps(r_n, y_n^[k]) for the constrained components.
Matrix constrained_similarities(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                                const DemixingSet& w, int num_constraints);

// ---------------------------------------------------------------------------
// Augmented Lagrangian pieces

/// (1/2 gamma) sum_{n,k} [ max(0, mu + gamma (rho - eps))^2 - mu^2 ].
double penalty_value(const ConstraintState& state, const Matrix& eps);

/// alpha = mu + gamma (rho - eps); mu' = max(0, alpha). Returns (alpha, mu').
std::pair<double, double> update_multiplier(double mu, double gamma, double rho, double eps);

/// Threshold choice for one (n, k) entry under the given strategy. `eps_row`
/// holds eps(r_n, y_n^[l]) for all l (the parameter-tuned rule needs the
/// whole row; the others read entry k).
double select_threshold(ThresholdStrategy strategy, const ConstraintState& state,
                        const Vector& eps_row, int n, int k);

/// -max(0, mu + gamma (rho - eps)) * d eps / d w; the constraint part of the
/// augmented Lagrangian gradient. Zero for unconstrained components.
Vector grad_constraint_term(const ConstraintState& state, const ProjectedReferences& proj,
                            const CrossCovarianceCache& cache, const DemixingSet& w, int n, int k);

// ---------------------------------------------------------------------------
// Threshold-free regularizer

/// sum_{n<=M} sum_k [ sum_{m != n, m<=M} eps^2(r_n, y_m^[k]) - eps^2(r_n, y_n^[k]) ].
double j_ref_value(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                   const DemixingSet& w);

/// Gradient of j_ref_value w.r.t. w_n^[k] (zero for n >= M).
Vector grad_j_ref(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                  const DemixingSet& w, int n, int k);

// ---------------------------------------------------------------------------
// Constrained runners

/// One entry point for cIVA-fixed, pt-cIVA, ar-cIVA and tf-cIVA.
/// `constraint` is read by the Lagrangian variants, `regularizer` by tf-cIVA.
RunReport run_constrained(Variant variant, const DatasetCollection& data,
                          const CrossCovarianceCache& cache, const ReferenceSet& refs,
                          const ProjectedReferences& proj, const SolverSettings& settings,
                          const ConstraintSettings& constraint,
                          const RegularizerSettings& regularizer);

RunReport run_constrained(Variant variant, const DatasetCollection& data, const ReferenceSet& refs,
                          const SolverSettings& settings, const ConstraintSettings& constraint,
                          const RegularizerSettings& regularizer);

}  // namespace civa
