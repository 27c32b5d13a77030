#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "civa/constraints.hpp"
#include "civa/core.hpp"
#include "civa/hybrid.hpp"
#include "civa/metrics.hpp"
#include "civa/rng.hpp"
#include "support/oracles.hpp"

using namespace civa;

TEST_CASE("sigma_z has unit diagonal and the two-level block structure") {
  const Matrix sigma = build_sigma_z(2, 2, 0.1, 0.2);
  Matrix expected(4, 4);
  expected << 1, .2, .1, .1, .2, 1, .1, .1, .1, .1, 1, .2, .1, .1, .2, 1;
  CHECK((sigma - expected).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);  // PSD oracle

  const Matrix bigger = build_sigma_z(5, 3, 0.07, 0.31);
  CHECK((bigger.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);

  CHECK((build_sigma_z(3, 4, 0.0, 0.0) - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(build_sigma_z(2, 2, 0.5, 0.2), ConfigError);
}

TEST_CASE("latent samples reproduce the target covariance") {
  const int n = 4, k = 4;
  const Matrix sigma = build_sigma_z(n, k, 0.1, 0.2);
  const std::vector<Matrix> blocks = sample_latent(sigma, n, k, 50000, 7);
  REQUIRE(static_cast<int>(blocks.size()) == n);

  Matrix stacked(n * k, 50000);
  for (int i = 0; i < n; ++i) stacked.middleRows(i * k, k) = blocks[i];
  const Matrix emp = testing::empirical_covariance(stacked);
  CHECK((emp - sigma).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("independent latents have near-zero cross-block correlations") {
  const Matrix sigma = Matrix::Identity(6, 6);
  const std::vector<Matrix> blocks = sample_latent(sigma, 3, 2, 50000, 9);
  Matrix stacked(6, 50000);
  for (int i = 0; i < 3; ++i) stacked.middleRows(i * 2, 2) = blocks[i];
  const Matrix emp = testing::empirical_covariance(stacked);
  CHECK((emp - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("latent sampling is deterministic in the seed") {
  const Matrix sigma = build_sigma_z(2, 3, 0.05, 0.15);
  const std::vector<Matrix> a = sample_latent(sigma, 2, 3, 500, 11);
  const std::vector<Matrix> b = sample_latent(sigma, 2, 3, 500, 11);
  for (int i = 0; i < 2; ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() == 0.0);
  const std::vector<Matrix> c = sample_latent(sigma, 2, 3, 500, 12);
  CHECK((a[0] - c[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("synthesized references are normalized with the requested correlation") {
  for (double target : {0.0, 0.2}) {
    const ReferenceSet refs = synthesize_references(4, 50000, 9, target, 13);
    for (int m = 0; m < 4; ++m) {
      CHECK(std::abs(refs.signals().row(m).mean()) < 1e-10);
      CHECK(std::abs(refs.signals().row(m).squaredNorm() / 50000.0 - 1.0) < 1e-8);
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < a; ++b) {
        const double corr = similarity(refs.signal(a), refs.signal(b));
        CHECK(std::abs(corr - target) < 0.03);
      }
  }
  CHECK_THROWS_AS(synthesize_references(3, 1000, 9, -0.2, 1), ConfigError);
}

TEST_CASE("variance-fraction sources match the analytic second moments") {
  const int k = 8;
  const long v = 50000;
  const ReferenceSet refs = synthesize_references(3, v, 9, 0.1, 17);
  const Matrix sigma = build_sigma_z(3, k, 0.1, 0.2);
  const std::vector<Matrix> latents = sample_latent(sigma, 3, k, v, 19);

  SUBCASE("phi = 0.9 gives within-SCV covariance 0.28 and reference correlation 0.316") {
    const std::vector<Matrix> sources =
        build_sources(latents, refs, {0.9, 0.9, 0.9}, SourceForm::VarianceFraction);
    const Matrix cov = testing::empirical_covariance(sources[0]);
    double off = 0.0;
    int count = 0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (a != b) {
          off += cov(a, b);
          ++count;
        }
    CHECK(off / count == doctest::Approx(0.28).epsilon(0.08));
    CHECK(std::abs(off / count - 0.28) < 0.02);

    double corr = 0.0;
    for (int kk = 0; kk < k; ++kk)
      corr += similarity(sources[0].row(kk).transpose(), refs.signal(0));
    CHECK(std::abs(corr / k - std::sqrt(0.1)) < 0.03);
  }

  SUBCASE("phi = 0.3 gives within-SCV covariance 0.76") {
    const std::vector<Matrix> sources =
        build_sources(latents, refs, {0.3, 0.3, 0.3}, SourceForm::VarianceFraction);
    const Matrix cov = testing::empirical_covariance(sources[0]);
    double off = 0.0;
    int count = 0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (a != b) {
          off += cov(a, b);
          ++count;
        }
    CHECK(std::abs(off / count - 0.76) < 0.02);
  }

  SUBCASE("the literal amplitude form gives (1-phi^2) + phi^2 mu1") {
    const std::vector<Matrix> sources =
        build_sources(latents, refs, {0.9, 0.9, 0.9}, SourceForm::Amplitude);
    const Matrix cov = testing::empirical_covariance(sources[0]);
    double off = 0.0;
    int count = 0;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (a != b) {
          off += cov(a, b);
          ++count;
        }
    // (1 - 0.81) + 0.81 * 0.2 = 0.352
    CHECK(std::abs(off / count - 0.352) < 0.02);
  }
}

TEST_CASE("cross-SCV covariances follow the weighted latent and reference terms") {
  // cov(s_n^[k], s_m^[l]) for n != m is sqrt((1-phi_n)(1-phi_m)) * ref_corr
  // + sqrt(phi_n phi_m) * mu0 under the variance-fraction form.
  const int k = 6;
  const long v = 50000;
  const double mu0 = 0.1, mu1 = 0.2, ref_corr = 0.2;
  const ReferenceSet refs = synthesize_references(3, v, 9, ref_corr, 59);
  const std::vector<Matrix> latents =
      sample_latent(build_sigma_z(3, k, mu0, mu1), 3, k, v, 61);
  const std::vector<double> phi{0.9, 0.3, 0.6};
  const std::vector<Matrix> sources = build_sources(latents, refs, phi, SourceForm::VarianceFraction);

  for (int n = 0; n < 3; ++n)
    for (int m = 0; m < n; ++m) {
      const double predicted = std::sqrt((1.0 - phi[n]) * (1.0 - phi[m])) * ref_corr +
                               std::sqrt(phi[n] * phi[m]) * mu0;
      Matrix stacked(2 * k, v);
      stacked.topRows(k) = sources[n];
      stacked.bottomRows(k) = sources[m];
      const Matrix cov = testing::empirical_covariance(stacked);
      double cross = 0.0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) cross += cov(a, k + b);
      cross /= k * k;
      CHECK(std::abs(cross - predicted) < 0.02);
    }
}

TEST_CASE("phi = 0 collapses sources onto the reference") {
  const ReferenceSet refs = synthesize_references(2, 2000, 5, 0.0, 23);
  const std::vector<Matrix> latents =
      sample_latent(build_sigma_z(2, 3, 0.1, 0.2), 2, 3, 2000, 29);
  const std::vector<Matrix> sources =
      build_sources(latents, refs, {0.0, 0.0}, SourceForm::VarianceFraction);
  for (int n = 0; n < 2; ++n) {
    Eigen::JacobiSVD<Matrix> svd(sources[n]);
    CHECK(svd.singularValues()(1) < 1e-10 * svd.singularValues()(0));  // rank 1
    for (int k = 0; k < 3; ++k)
      CHECK((sources[n].row(k) - refs.signals().row(n)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mixing matrices respect the condition limit and the seed") {
  const std::vector<Matrix> a = generate_mixing(6, 4, 1e3, 31);
  for (const Matrix& m : a) {
    Eigen::JacobiSVD<Matrix> svd(m);
    CHECK(svd.singularValues().maxCoeff() / svd.singularValues().minCoeff() < 1e3);
  }
  const std::vector<Matrix> b = generate_mixing(6, 4, 1e3, 31);
  for (int k = 0; k < 4; ++k) CHECK((a[k] - b[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rejection sampling accepts most draws at the default limit") {
  // With cond_limit 1e3 and N=20, well over 90% of draws should pass.
  Rng rng(37);
  int accepted = 0;
  const int draws = 100;
  for (int i = 0; i < draws; ++i) {
    const Matrix m = rng.gaussian_matrix(20, 20);
    Eigen::JacobiSVD<Matrix> svd(m);
    if (svd.singularValues().maxCoeff() / svd.singularValues().minCoeff() < 1e3) ++accepted;
  }
  CHECK(accepted > 90);
}

TEST_CASE("assembly honors X = A S and perfect inversion") {
  HybridConfig hc;
  hc.n_sources = 3;
  hc.n_datasets = 4;
  hc.n_references = 3;
  hc.n_samples = 1000;
  hc.seed = 41;
  auto [data, truth] = generate_hybrid(hc);

  for (int k = 0; k < 4; ++k) {
    Matrix s_k(3, 1000);
    for (int n = 0; n < 3; ++n) s_k.row(n) = truth.sources[n].row(k);
    CHECK((data.dataset(k) - truth.mixing[k] * s_k).cwiseAbs().maxCoeff() < 1e-12);
    // W = A^{-1} recovers the stacked sources
    const Matrix recovered = truth.mixing[k].inverse() * data.dataset(k);
    CHECK((recovered - s_k).cwiseAbs().maxCoeff() < 1e-10);
  }

  // identity mixing passes sources through untouched
  std::vector<Matrix> eyes(4, Matrix::Identity(3, 3));
  auto [plain, truth2] = assemble_datasets(truth.sources, eyes);
  for (int k = 0; k < 4; ++k)
    CHECK((plain.dataset(k).row(1).transpose() -
           truth.sources[1].row(k).transpose()).cwiseAbs().maxCoeff() == 0.0);

  // joint-ISI of the exact inverses is zero
  std::vector<Matrix> inv;
  for (const Matrix& m : truth.mixing) inv.push_back(m.inverse());
  CHECK(joint_isi(DemixingSet(inv), truth.mixing) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hybrid generation is reproducible from config and seed") {
  HybridConfig hc;
  hc.n_sources = 4;
  hc.n_datasets = 3;
  hc.n_references = 4;
  hc.n_samples = 800;
  hc.seed = 43;
  auto [data1, truth1] = generate_hybrid(hc);
  auto [data2, truth2] = generate_hybrid(hc);
  for (int k = 0; k < 3; ++k)
    CHECK((data1.dataset(k) - data2.dataset(k)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((truth1.references - truth2.references).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config validation rejects inconsistent settings") {
  HybridConfig hc;
  hc.n_sources = 4;
  hc.n_datasets = 2;
  hc.n_references = 5;  // more references than sources
  hc.n_samples = 100;
  CHECK_THROWS_AS(hc.validate(), ConfigError);
  hc.n_references = 2;
  hc.mu0 = 0.3;
  hc.mu1 = 0.2;  // ordering violated
  CHECK_THROWS_AS(hc.validate(), ConfigError);
}
