#pragma once

#include <vector>

#include "civa/types.hpp"

namespace civa {

/// Subtract the sample mean from every channel of every dataset. Returns a
/// new collection flagged as centered; the input is left untouched.
DatasetCollection center_datasets(const DatasetCollection& raw);

/// R^kl = (1/V) X^[k] (X^[l])^T for all dataset pairs. Requires centered data.
CrossCovarianceCache build_cross_covariance_cache(const DatasetCollection& data);

/// y_n^[k] = (w_n^[k])^T X^[k] for all k. Full-sample vectors, used by
/// metrics and diagnostics only; the solver iterations never call this.
/// With `strict` set, rows of W that are not unit-norm are rejected.
std::vector<Vector> estimate_sources(const DemixingSet& w, const DatasetCollection& data, int n,
                                     bool strict = true);

/// Per-dataset symmetric (zero-phase) whitening: X' = R_kk^{-1/2} X, so each
/// whitened dataset has exactly the identity sample covariance. Solvers run
/// on whitened data, where unit-norm demixing rows give unit-variance
/// estimates and the SCV covariances are correlation matrices.
struct WhitenedData {
  DatasetCollection data;          // whitened datasets, still centered
  std::vector<Matrix> transforms;  // T_k with X'_k = T_k X_k
};

WhitenedData whiten_datasets(const DatasetCollection& centered);

}  // namespace civa
