#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace civa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};
struct NotCenteredError : Error {
  using Error::Error;
};
struct DegenerateDemixingError : Error {
  using Error::Error;
};
struct IllConditionedModelError : Error {
  using Error::Error;
};
struct DegenerateSignalError : Error {
  using Error::Error;
};
struct NumericalFailureError : Error {
  using Error::Error;
};
struct UndefinedMetricError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Data model

/// K observation matrices X^[k], each N channels by V samples.
class DatasetCollection {
 public:
  DatasetCollection(std::vector<Matrix> datasets, bool centered = false);

  int num_sources() const { return n_; }
  int num_datasets() const { return static_cast<int>(datasets_.size()); }
  long num_samples() const { return v_; }
  bool centered() const { return centered_; }

  const Matrix& dataset(int k) const { return datasets_.at(k); }
  const std::vector<Matrix>& datasets() const { return datasets_; }

 private:
  std::vector<Matrix> datasets_;
  bool centered_ = false;
  int n_ = 0;
  long v_ = 0;
};

/// K x K grid of N x N blocks R^kl = (1/V) X^[k] (X^[l])^T. Building the
/// cache is the only pass over the V samples in the solver path; every
/// iteration afterwards works on these blocks alone.
class CrossCovarianceCache {
 public:
  static CrossCovarianceCache from_datasets(const DatasetCollection& data);

  /// Assemble from explicit blocks (row-major k*K+l). Symmetry of the grid
  /// is validated; intended for tests and tools that bypass raw data.
  static CrossCovarianceCache from_blocks(std::vector<Matrix> blocks, int num_datasets);

  const Matrix& block(int k, int l) const { return blocks_[idx(k, l)]; }
  int num_datasets() const { return k_; }
  int num_sources() const { return n_; }

 private:
  CrossCovarianceCache() = default;
  int idx(int k, int l) const { return k * k_ + l; }

  std::vector<Matrix> blocks_;
  int k_ = 0;
  int n_ = 0;
};

/// The K demixing matrices W^[k]; the optimization variable. Rows are kept
/// unit-norm by the solver after every update step, but the type itself
/// admits arbitrary invertible matrices so that cost and gradient can be
/// evaluated at perturbed points.
class DemixingSet {
 public:
  explicit DemixingSet(std::vector<Matrix> matrices);

  /// One orthonormalized standard-normal draw per dataset, fixed by seed.
  static DemixingSet random_orthonormal(int num_sources, int num_datasets, std::uint64_t seed);

  static DemixingSet identity(int num_sources, int num_datasets);

  int num_datasets() const { return static_cast<int>(w_.size()); }
  int num_sources() const { return n_; }

  const Matrix& mat(int k) const { return w_.at(k); }
  Matrix& mat(int k) { return w_.at(k); }
  const std::vector<Matrix>& matrices() const { return w_; }

  bool rows_unit_norm(double tol = 1e-10) const;
  void renormalize_rows();

 private:
  std::vector<Matrix> w_;
  int n_ = 0;
};

/// The N estimated SCV covariances, each K x K. `ridge` records the
/// diagonal loading most recently needed at inversion time (0 if none);
/// stored matrices are always the raw quadratic forms.
struct SCVCovarianceSet {
  std::vector<Matrix> sigma;
  double ridge = 0.0;

  int num_components() const { return static_cast<int>(sigma.size()); }
};

/// M reference signals of length V, re-normalized to zero mean and unit
/// variance on construction.
class ReferenceSet {
 public:
  /// `signals` is M x V, one reference per row.
  explicit ReferenceSet(Matrix signals, bool renormalize = true);

  int num_references() const { return static_cast<int>(signals_.rows()); }
  long num_samples() const { return static_cast<long>(signals_.cols()); }

  const Matrix& signals() const { return signals_; }
  Vector signal(int m) const { return signals_.row(m).transpose(); }

  /// Keep only the first `m` references.
  ReferenceSet truncated(int m) const;

 private:
  Matrix signals_;
};

/// Per-dataset projections (1/V) X^[k] r_m plus reference sample variances.
/// With these in hand, every similarity value and gradient in the solver is
/// independent of the sample count.
struct ProjectedReferences {
  std::vector<Matrix> q;  // K entries, N x M; column m is (1/V) X^[k] r_m
  Vector var_r;           // M reference sample variances (1/V convention)

  int num_references() const { return static_cast<int>(var_r.size()); }
};

ProjectedReferences project_references(const ReferenceSet& refs, const DatasetCollection& data);

}  // namespace civa
