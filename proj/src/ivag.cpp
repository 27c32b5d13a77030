#include "civa/ivag.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

namespace civa {

void SolverSettings::validate() const {
  if (!(eta0 > 0.0)) throw ConfigError("solver: eta0 must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("solver: decay must lie in (0,1)");
  if (!(tol > 0.0)) throw ConfigError("solver: tol must be positive");
  if (max_iters < 1) throw ConfigError("solver: max_iters must be at least 1");
  if (!(ridge_rel >= 0.0)) throw ConfigError("solver: ridge_rel must be non-negative");
}

DecouplingVector decoupling_vector(const Matrix& w_k, int n) {
  const int dim = static_cast<int>(w_k.rows());
  if (w_k.cols() != dim) throw DimensionError("decoupling_vector: matrix must be square");
  if (n < 0 || n >= dim) throw DimensionError("decoupling_vector: row index out of range");

  DecouplingVector out;
  if (dim == 1) {
    out.d = Vector::Ones(1);
  } else {
    Matrix rest(dim - 1, dim);
    int r = 0;
    for (int i = 0; i < dim; ++i)
      if (i != n) rest.row(r++) = w_k.row(i);
    // Null space of the (N-1) x N matrix: last column of Q in a full QR of rest^T.
    Eigen::HouseholderQR<Matrix> qr(rest.transpose());
    const Vector r_diag = qr.matrixQR().diagonal().head(dim - 1).cwiseAbs();
    if (r_diag.minCoeff() < 1e-12 * std::max(1.0, r_diag.maxCoeff()))
      throw DegenerateDemixingError("decoupling_vector: remaining rows are rank-deficient");
    const Matrix q = qr.householderQ();
    out.d = q.col(dim - 1);
  }
  out.dot = out.d.dot(w_k.row(n));
  if (out.dot < 0.0) {
    out.d = -out.d;
    out.dot = -out.dot;
  }
  if (out.dot <= 0.0 || !std::isfinite(out.dot))
    throw DegenerateDemixingError("decoupling_vector: row lies in the span of the others");
  return out;
}

namespace {

double log_abs_det(const Matrix& m) {
  Eigen::PartialPivLU<Matrix> lu(m);
  double sum = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    const double u = std::abs(lu.matrixLU()(i, i));
    if (u == 0.0 || !std::isfinite(u))
      throw DegenerateDemixingError("log_abs_det: singular matrix");
    sum += std::log(u);
  }
  return sum;
}

Eigen::LLT<Matrix> spd_factorize(const Matrix& sigma, double ridge_rel, double* ridge_applied) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) {
    if (ridge_applied) *ridge_applied = 0.0;
    return llt;
  }
  const double ridge = ridge_rel * sigma.trace() / static_cast<double>(sigma.rows());
  Matrix loaded = sigma;
  loaded.diagonal().array() += ridge;
  llt.compute(loaded);
  if (llt.info() != Eigen::Success)
    throw IllConditionedModelError("SCV covariance is singular even after ridge loading");
  if (ridge_applied) *ridge_applied = ridge;
  return llt;
}

}  // namespace

double iva_g_cost(const DemixingSet& w, const SCVCovarianceSet& sigma,
                  const CrossCovarianceCache& cache) {
  const int n_total = w.num_sources();
  const int k_total = w.num_datasets();
  if (sigma.num_components() != n_total)
    throw DimensionError("iva_g_cost: covariance count must match component count");

  double cost = 0.5 * n_total * k_total * std::log(2.0 * M_PI);
  for (int n = 0; n < n_total; ++n) {
    const Matrix& s = sigma.sigma[n];
    if (s.rows() != k_total || s.cols() != k_total)
      throw DimensionError("iva_g_cost: SCV covariance has wrong size");
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
      double ridge = 0.0;
      llt = spd_factorize(s, 1e-9, &ridge);
    }
    double logdet = 0.0;
    for (int k = 0; k < k_total; ++k) {
      const double l = llt.matrixL()(k, k);
      if (!(l > 0.0) || !std::isfinite(l))
        throw IllConditionedModelError("iva_g_cost: SCV covariance is not positive definite");
      logdet += 2.0 * std::log(l);
    }
    cost += 0.5 * logdet;

    // Quadratic form matrix Q_{kl} = w^T R^kl w; the data term is
    // (1/2) trace(Sigma^{-1} Q).
    Matrix quad(k_total, k_total);
    for (int k = 0; k < k_total; ++k)
      for (int l = k; l < k_total; ++l) {
        const double value = w.mat(k).row(n) * cache.block(k, l) * w.mat(l).row(n).transpose();
        quad(k, l) = value;
        quad(l, k) = value;
      }
    cost += 0.5 * llt.solve(quad).trace();
  }
  for (int k = 0; k < k_total; ++k) cost -= log_abs_det(w.mat(k));
  return cost;
}

Matrix update_scv_covariance(const DemixingSet& w, const CrossCovarianceCache& cache, int n) {
  const int k_total = w.num_datasets();
  if (n < 0 || n >= w.num_sources())
    throw DimensionError("update_scv_covariance: component index out of range");
  Matrix sigma(k_total, k_total);
  for (int k = 0; k < k_total; ++k)
    for (int l = k; l < k_total; ++l) {
      const double value = w.mat(k).row(n) * cache.block(k, l) * w.mat(l).row(n).transpose();
      sigma(k, l) = value;
      sigma(l, k) = value;
    }
  return sigma;
}

Vector spd_inverse_column(const Matrix& sigma, int k, double ridge_rel, double* ridge_applied) {
  Eigen::LLT<Matrix> llt = spd_factorize(sigma, ridge_rel, ridge_applied);
  Vector e = Vector::Zero(sigma.rows());
  e(k) = 1.0;
  return llt.solve(e);
}

Vector grad_iva_g_core(const DemixingSet& w, const Vector& sigma_inv_col,
                       const CrossCovarianceCache& cache, int n, int k) {
  const int k_total = w.num_datasets();
  Vector grad = Vector::Zero(w.num_sources());
  for (int l = 0; l < k_total; ++l)
    grad.noalias() += sigma_inv_col(l) * (cache.block(k, l) * w.mat(l).row(n).transpose());
  const DecouplingVector dec = decoupling_vector(w.mat(k), n);
  grad -= dec.d / dec.dot;
  return grad;
}

Vector grad_iva_g(const DemixingSet& w, const SCVCovarianceSet& sigma,
                  const CrossCovarianceCache& cache, int n, int k, double ridge_rel) {
  const Vector inv_col = spd_inverse_column(sigma.sigma.at(n), k, ridge_rel);
  return grad_iva_g_core(w, inv_col, cache, n, k);
}

Vector gradient_step(const Vector& w, const Vector& g, double eta) {
  if (!g.allFinite()) throw NumericalFailureError("gradient_step: non-finite gradient");
  Vector tangent = g - w.dot(g) * w;
  const double norm = tangent.norm();
  if (norm < 1e-14) return w;
  Vector stepped = w - eta * (tangent / norm);
  const double snorm = stepped.norm();
  if (snorm < 1e-14) throw NumericalFailureError("gradient_step: stepped vector vanished");
  return stepped / snorm;
}

double demixing_change(const DemixingSet& prev, const DemixingSet& next) {
  if (prev.num_datasets() != next.num_datasets() || prev.num_sources() != next.num_sources())
    throw DimensionError("demixing_change: dimension mismatch");
  double worst = 0.0;
  for (int k = 0; k < prev.num_datasets(); ++k)
    for (int n = 0; n < prev.num_sources(); ++n) {
      const double change = 1.0 - std::abs(prev.mat(k).row(n).dot(next.mat(k).row(n)));
      if (change > worst) worst = change;
    }
  return worst;
}

bool has_converged(const DemixingSet& prev, const DemixingSet& next, double tol) {
  return demixing_change(prev, next) < tol;
}

}  // namespace civa
