#pragma once

#include <cstdint>

#include "civa/report.hpp"
#include "civa/types.hpp"

namespace civa {

struct SolverSettings {
  double eta0 = 0.1;      // initial step size
  double decay = 0.95;    // multiplicative step decay on non-decreasing objective
  double tol = 1e-6;      // stopping tolerance on max_{k,n} (1 - |w_prev . w_next|)
  int max_iters = 2000;   // sweep cap
  double ridge_rel = 1e-9;  // relative diagonal loading when Sigma_n factorization fails
  std::uint64_t seed = 0;   // initialization seed

  void validate() const;
};

/// Unit vector d with W-tilde d = 0, where W-tilde is W^[k] without row n.
/// Sign fixed so d . w_n > 0. Carries the cached inner product because the
/// gradient divides by it.
struct DecouplingVector {
  Vector d;
  double dot = 0.0;
};

DecouplingVector decoupling_vector(const Matrix& w_k, int n);

/// The IVA cost under the Gaussian source model, evaluated from the
/// covariance cache alone; no pass over the samples.
double iva_g_cost(const DemixingSet& w, const SCVCovarianceSet& sigma,
                  const CrossCovarianceCache& cache);

/// Maximum-likelihood SCV covariance for component n:
/// entry (k,l) = (w_n^[k])^T R^kl w_n^[l].
Matrix update_scv_covariance(const DemixingSet& w, const CrossCovarianceCache& cache, int n);

/// Column k of Sigma^{-1} via SPD factorization. On factorization failure a
/// relative ridge ridge_rel * trace(Sigma)/K is applied once; *ridge_applied
/// (when non-null) receives the loading actually used.
Vector spd_inverse_column(const Matrix& sigma, int k, double ridge_rel,
                          double* ridge_applied = nullptr);

/// Analytic gradient of the IVA cost w.r.t. w_n^[k] at fixed Sigma.
Vector grad_iva_g(const DemixingSet& w, const SCVCovarianceSet& sigma,
                  const CrossCovarianceCache& cache, int n, int k, double ridge_rel = 1e-9);

/// Same, with the needed column of Sigma_n^{-1} precomputed by the caller.
Vector grad_iva_g_core(const DemixingSet& w, const Vector& sigma_inv_col,
                       const CrossCovarianceCache& cache, int n, int k);

/// Project g onto the tangent space at unit-norm w, take a normalized step
/// of length eta, and re-normalize. Returns w unchanged when the tangent
/// component is below 1e-14.
Vector gradient_step(const Vector& w, const Vector& g, double eta);

/// max_{k,n} (1 - |w_prev . w_next|), the stopping statistic.
double demixing_change(const DemixingSet& prev, const DemixingSet& next);

bool has_converged(const DemixingSet& prev, const DemixingSet& next, double tol);

/// Rewrite a demixing set learned on whitened data in the coordinates of
/// the original data: rows become w' T_k, re-normalized to unit length.
/// When `sigma` is given its entries are rescaled to match the renormalized
/// rows, so it stays the covariance of the (re-scaled) estimates.
DemixingSet compose_demixing(const DemixingSet& internal, const std::vector<Matrix>& transforms,
                             SCVCovarianceSet* sigma = nullptr);

/// Unconstrained IVA with Gaussian sources and vector-gradient updates.
/// Operates on the data behind `cache` as-is.
RunReport run_iva_g_v(const DatasetCollection& data, const CrossCovarianceCache& cache,
                      const SolverSettings& settings);

/// Convenience overload: whitens each dataset, builds the cache (both timed
/// into the report) and states the result in the original coordinates.
RunReport run_iva_g_v(const DatasetCollection& data, const SolverSettings& settings);

}  // namespace civa
