#include "civa/checks.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "civa/constraints.hpp"
#include "civa/core.hpp"
#include "civa/hybrid.hpp"
#include "civa/ivag.hpp"
#include "civa/metrics.hpp"
#include "civa/rng.hpp"

namespace civa {

Vector fd_gradient_w(const std::function<double(const DemixingSet&)>& f, const DemixingSet& at,
                     int n, int k, double h) {
  Vector grad(at.num_sources());
  for (int j = 0; j < at.num_sources(); ++j) {
    DemixingSet plus = at;
    DemixingSet minus = at;
    plus.mat(k)(n, j) += h;
    minus.mat(k)(n, j) -= h;
    grad(j) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Vector& a, const Vector& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

double per_sample_iva_cost(const DemixingSet& w, const SCVCovarianceSet& sigma,
                           const DatasetCollection& data) {
  const int n_total = w.num_sources();
  const int k_total = w.num_datasets();
  const long v_total = data.num_samples();

  // Estimated sources, one full K x V matrix per component.
  std::vector<Matrix> scv(n_total, Matrix(k_total, v_total));
  for (int k = 0; k < k_total; ++k) {
    const Matrix y = w.mat(k) * data.dataset(k);
    for (int n = 0; n < n_total; ++n) scv[n].row(k) = y.row(n);
  }

  double cost = 0.0;
  for (int n = 0; n < n_total; ++n) {
    Eigen::LLT<Matrix> llt(sigma.sigma.at(n));
    if (llt.info() != Eigen::Success)
      throw IllConditionedModelError("per_sample_iva_cost: covariance not positive definite");
    double logdet = 0.0;
    for (int k = 0; k < k_total; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    double quad = 0.0;
    for (long v = 0; v < v_total; ++v) {
      const Vector y = scv[n].col(v);
      quad += y.dot(llt.solve(y));
    }
    cost += 0.5 * k_total * std::log(2.0 * M_PI) + 0.5 * logdet +
            0.5 * quad / static_cast<double>(v_total);
  }
  for (int k = 0; k < k_total; ++k) {
    Eigen::PartialPivLU<Matrix> lu(w.mat(k));
    double logdet = 0.0;
    for (int i = 0; i < n_total; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
    cost -= logdet;
  }
  return cost;
}

Matrix per_sample_scv_covariance(const DemixingSet& w, const DatasetCollection& data, int n) {
  const int k_total = w.num_datasets();
  Matrix scv(k_total, data.num_samples());
  for (int k = 0; k < k_total; ++k)
    scv.row(k) = w.mat(k).row(n) * data.dataset(k);
  return (scv * scv.transpose()) / static_cast<double>(data.num_samples());
}

CheckResult check_gradient_fd(const std::string& name,
                              const std::function<double(const DemixingSet&)>& value_fn,
                              const std::function<Vector(const DemixingSet&, int, int)>& grad_fn,
                              const DemixingSet& at, double rel_tol, double h) {
  double worst = 0.0;
  for (int k = 0; k < at.num_datasets(); ++k)
    for (int n = 0; n < at.num_sources(); ++n) {
      const Vector analytic = grad_fn(at, n, k);
      const Vector numeric = fd_gradient_w(value_fn, at, n, k, h);
      worst = std::max(worst, relative_error(analytic, numeric));
    }
  char detail[96];
  std::snprintf(detail, sizeof(detail), "max relative error %.3e (tol %.1e)", worst, rel_tol);
  return {name, worst < rel_tol, detail};
}

namespace {

struct VerifyFixture {
  DatasetCollection data;
  CrossCovarianceCache cache;
  ReferenceSet refs;
  ProjectedReferences proj;
  SCVCovarianceSet sigma;
  DemixingSet w;
};

VerifyFixture make_fixture(std::uint64_t seed, int n, int k, int m, long v) {
  HybridConfig hc;
  hc.n_sources = n;
  hc.n_datasets = k;
  hc.n_references = m;
  hc.n_samples = v;
  hc.seed = seed;
  auto [raw, truth] = generate_hybrid(hc);
  DatasetCollection data = center_datasets(raw);
  CrossCovarianceCache cache = build_cross_covariance_cache(data);
  ReferenceSet refs = ReferenceSet(truth.references, true).truncated(m);
  ProjectedReferences proj = project_references(refs, data);
  DemixingSet w = DemixingSet::random_orthonormal(n, k, seed + 1);
  SCVCovarianceSet sigma;
  for (int i = 0; i < n; ++i) sigma.sigma.push_back(update_scv_covariance(w, cache, i));
  // Fixed, well-separated covariances keep the FD path away from the
  // alternating Sigma update.
  for (Matrix& s : sigma.sigma) s.diagonal().array() += 0.05;
  return {std::move(data), std::move(cache), std::move(refs),
          std::move(proj), std::move(sigma), std::move(w)};
}

CheckResult check_scalar(const std::string& name, double got, double want, double tol) {
  char detail[96];
  std::snprintf(detail, sizeof(detail), "got %.9g, want %.9g (tol %.1e)", got, want, tol);
  return {name, std::abs(got - want) < tol, detail};
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  const std::uint64_t seed = options.seed;

  // --- Gradient fidelity -----------------------------------------------
  {
    VerifyFixture f = make_fixture(seed, 4, 3, 2, 400);
    const auto cost = [&](const DemixingSet& w) { return iva_g_cost(w, f.sigma, f.cache); };
    results.push_back(check_gradient_fd(
        "gradient: iva-g cost vs finite differences", cost,
        [&](const DemixingSet& w, int n, int k) { return grad_iva_g(w, f.sigma, f.cache, n, k); },
        f.w, 1e-6));

    ConstraintSettings cs = ConstraintSettings::ar_defaults();
    ConstraintState state(2, 3, cs);
    const Matrix eps = constrained_similarities(f.proj, f.cache, f.w, 2);
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < 3; ++k) {
        // Margins keep the penalty's max() away from its kink: one active
        // and one inactive constraint per component.
        state.set_rho(n, k, n == 0 ? std::min(0.95, eps(n, k) + 0.2) : std::max(0.02, eps(n, k) - 0.2));
        state.set_mu(n, k, n == 0 ? 0.7 : 0.0);
      }
    const int m_total = 2;
    const auto lagrangian = [&](const DemixingSet& w) {
      return iva_g_cost(w, f.sigma, f.cache) +
             penalty_value(state, constrained_similarities(f.proj, f.cache, w, m_total));
    };
    results.push_back(check_gradient_fd(
        "gradient: augmented Lagrangian vs finite differences", lagrangian,
        [&](const DemixingSet& w, int n, int k) {
          Vector g = grad_iva_g(w, f.sigma, f.cache, n, k);
          if (n < m_total) g += grad_constraint_term(state, f.proj, f.cache, w, n, k);
          return g;
        },
        f.w, 1e-6));

    const double lambda = 1.0;
    const auto tf = [&](const DemixingSet& w) {
      return iva_g_cost(w, f.sigma, f.cache) + 0.5 * lambda * j_ref_value(f.proj, f.cache, w);
    };
    results.push_back(check_gradient_fd(
        "gradient: threshold-free objective vs finite differences", tf,
        [&](const DemixingSet& w, int n, int k) {
          Vector g = grad_iva_g(w, f.sigma, f.cache, n, k);
          g += 0.5 * lambda * grad_j_ref(f.proj, f.cache, w, n, k);
          return g;
        },
        f.w, 1e-6));
  }

  // --- Oracle equivalences ----------------------------------------------
  {
    VerifyFixture f = make_fixture(seed + 10, 3, 2, 2, 200);
    const double fast = iva_g_cost(f.w, f.sigma, f.cache);
    const double slow = per_sample_iva_cost(f.w, f.sigma, f.data);
    results.push_back(check_scalar("oracle: cost equals per-sample likelihood", fast, slow, 1e-9));

    double worst = 0.0;
    for (int n = 0; n < 3; ++n) {
      const Matrix a = update_scv_covariance(f.w, f.cache, n);
      const Matrix b = per_sample_scv_covariance(f.w, f.data, n);
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    results.push_back(check_scalar("oracle: SCV covariance equals sample covariance", worst, 0.0, 1e-10));

    // Similarity gradient against finite differences through the estimate.
    double worst_sim = 0.0;
    for (int k = 0; k < 2; ++k) {
      const auto eps_fn = [&](const DemixingSet& w) {
        return similarity_vfree(f.proj, f.cache, w, 0, 0, k);
      };
      const Vector analytic = similarity_gradient(f.proj, f.cache, f.w, 0, 0, k);
      const Vector numeric = fd_gradient_w(eps_fn, f.w, 0, k);
      worst_sim = std::max(worst_sim, relative_error(analytic, numeric));
    }
    results.push_back(check_scalar("oracle: similarity gradient vs finite differences",
                                   worst_sim, 0.0, 1e-6));
  }

  // --- Metric properties --------------------------------------------------
  {
    Rng rng(seed + 20);
    bool ok = true;
    std::string detail = "scaled permutations, all-ones, invariances";
    Matrix perm = Matrix::Zero(4, 4);
    perm(0, 2) = 1.5;
    perm(1, 0) = -2.0;
    perm(2, 3) = 0.25;
    perm(3, 1) = 1.0;
    if (std::abs(isi(perm)) > 1e-12) ok = false;
    if (std::abs(isi(Matrix::Ones(4, 4)) - 1.0) > 1e-12) ok = false;

    Matrix g = rng.gaussian_matrix(5, 5);
    const double base = isi(g);
    // Diagonal scalings keep the scaled-permutation class at 0; on general
    // matrices only sign scalings leave the value untouched.
    Vector d1 = rng.gaussian_matrix(5, 1).col(0).cwiseAbs() + Vector::Constant(5, 0.1);
    Vector d2 = rng.gaussian_matrix(5, 1).col(0).cwiseAbs() + Vector::Constant(5, 0.1);
    Matrix scaled_perm = Matrix::Zero(5, 5);
    for (int i = 0; i < 5; ++i) scaled_perm(i, (i + 2) % 5) = 1.0;
    if (std::abs(isi(d1.asDiagonal() * scaled_perm * d2.asDiagonal())) > 1e-12) ok = false;
    Vector s1(5), s2(5);
    s1 << 1, -1, 1, -1, 1;
    s2 << -1, -1, 1, 1, -1;
    if (std::abs(isi(s1.asDiagonal() * g * s2.asDiagonal()) - base) > 1e-12) ok = false;
    Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
    p.setIdentity();
    std::swap(p.indices()(0), p.indices()(3));
    if (std::abs(isi(p * g * p.transpose()) - base) > 1e-10) ok = false;

    // Sign/permutation-equivalent runs are indistinguishable to cross-joint-ISI.
    DemixingSet w1 = DemixingSet::random_orthonormal(4, 3, seed + 21);
    std::vector<Matrix> permuted;
    for (int k = 0; k < 3; ++k) {
      Matrix m = w1.mat(k);
      m.row(0).swap(m.row(2));
      m.row(1) *= -1.0;
      permuted.push_back(m);
    }
    const std::vector<double> cji = cross_joint_isi({w1, DemixingSet(permuted)});
    for (double x : cji)
      if (std::abs(x) > 1e-10) ok = false;
    results.push_back({"metrics: ISI and cross-joint-ISI properties", ok, detail});
  }

  // --- Generator statistics (reduced V) ------------------------------------
  {
    HybridConfig hc;
    hc.n_sources = 6;
    hc.n_datasets = 6;
    hc.n_references = 6;
    hc.n_samples = options.generator_samples;
    hc.phi = std::vector<double>(6, 0.9);
    hc.seed = seed + 30;
    auto [raw, truth] = generate_hybrid(hc);
    double avg_cov = 0.0;
    int count = 0;
    const Matrix& s0 = truth.sources[0];
    const Matrix centered = s0.colwise() - s0.rowwise().mean();
    const Matrix cov = centered * centered.transpose() / static_cast<double>(hc.n_samples);
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b)
        if (a != b) {
          avg_cov += cov(a, b);
          ++count;
        }
    avg_cov /= count;
    results.push_back(check_scalar("generator: within-SCV covariance at phi=0.9", avg_cov, 0.28,
                                   0.03));

    double avg_corr = 0.0;
    for (int k = 0; k < 6; ++k)
      avg_corr += similarity(truth.sources[0].row(k).transpose(),
                             Vector(truth.references.row(0).transpose()));
    avg_corr /= 6.0;
    results.push_back(check_scalar("generator: source-reference correlation at phi=0.9",
                                   avg_corr, std::sqrt(0.1), 0.04));
  }

  return results;
}

}  // namespace civa
