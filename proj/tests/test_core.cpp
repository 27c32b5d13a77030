#include <doctest.h>

#include "civa/checks.hpp"
#include "civa/core.hpp"
#include "civa/rng.hpp"
#include "support/oracles.hpp"

using namespace civa;

namespace {

DatasetCollection random_collection(int n, int k, long v, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> xs;
  for (int i = 0; i < k; ++i) xs.push_back(rng.gaussian_matrix(n, v));
  return DatasetCollection(std::move(xs));
}

}  // namespace

TEST_CASE("center_datasets leaves zero-mean data unchanged") {
  Matrix x(2, 4);
  x << 1, -1, 2, -2, 0.5, -0.5, 1.5, -1.5;
  DatasetCollection data({x});
  DatasetCollection centered = center_datasets(data);
  CHECK(centered.centered());
  CHECK((centered.dataset(0) - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("center_datasets subtracts the row mean") {
  Matrix x(2, 3);
  x << 1, 2, 3, 10, 20, 30;
  DatasetCollection centered = center_datasets(DatasetCollection({x}));
  Vector expected(3);
  expected << -1, 0, 1;
  CHECK((centered.dataset(0).row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((centered.dataset(0).row(1).transpose() - 10 * expected).cwiseAbs().maxCoeff() < 1e-12);
  // input untouched
  CHECK(x(0, 0) == 1.0);
}

TEST_CASE("center_datasets drives every row mean below 1e-12") {
  DatasetCollection centered = center_datasets(random_collection(3, 2, 100, 42));
  for (int k = 0; k < 2; ++k)
    CHECK(centered.dataset(k).rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dataset collections reject dimension mismatches") {
  Rng rng(1);
  std::vector<Matrix> xs{rng.gaussian_matrix(3, 50), rng.gaussian_matrix(4, 50)};
  CHECK_THROWS_AS(DatasetCollection(std::move(xs)), DimensionError);
  CHECK_THROWS_AS(DatasetCollection({Matrix::Zero(3, 2)}), DimensionError);  // V <= N
}

TEST_CASE("cross-covariance blocks match the dense product") {
  DatasetCollection data = center_datasets(random_collection(3, 2, 200, 7));
  CrossCovarianceCache cache = build_cross_covariance_cache(data);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) {
      const Matrix direct = data.dataset(k) * data.dataset(l).transpose() / 200.0;
      CHECK((cache.block(k, l) - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("cross-covariance scaling is 1/V") {
  Matrix x(2, 3);
  x << 1, -1, 0, 0, 1, -1;
  DatasetCollection data({x}, true);
  CrossCovarianceCache cache = build_cross_covariance_cache(data);
  // (1/3) X X^T by hand: diagonal 2/3, off-diagonal -1/3.
  CHECK(cache.block(0, 0)(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(cache.block(0, 0)(0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("cross-covariance grid is symmetric by construction") {
  DatasetCollection data = center_datasets(random_collection(4, 3, 150, 9));
  CrossCovarianceCache cache = build_cross_covariance_cache(data);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      CHECK((cache.block(k, l) - cache.block(l, k).transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cache construction requires centered data") {
  DatasetCollection raw = random_collection(3, 2, 100, 3);
  CHECK_THROWS_AS(build_cross_covariance_cache(raw), NotCenteredError);
}

TEST_CASE("cache fidelity: quadratic forms equal per-sample products") {
  DatasetCollection data = center_datasets(random_collection(4, 3, 500, 11));
  CrossCovarianceCache cache = build_cross_covariance_cache(data);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Vector wk = rng.gaussian_matrix(4, 1).col(0).normalized();
    Vector wl = rng.gaussian_matrix(4, 1).col(0).normalized();
    const int k = trial % 3, l = (trial + 1) % 3;
    const Vector yk = data.dataset(k).transpose() * wk;
    const Vector yl = data.dataset(l).transpose() * wl;
    const double direct = yk.dot(yl) / 500.0;
    const double cached = wk.transpose() * cache.block(k, l) * wl;
    CHECK(std::abs(direct - cached) < 1e-10);
  }
}

TEST_CASE("estimate_sources returns rows under the identity demixing") {
  DatasetCollection data = center_datasets(random_collection(3, 2, 60, 13));
  DemixingSet w = DemixingSet::identity(3, 2);
  for (int n = 0; n < 3; ++n) {
    const std::vector<Vector> y = estimate_sources(w, data, n);
    for (int k = 0; k < 2; ++k)
      CHECK((y[k] - data.dataset(k).row(n).transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("estimate_sources rejects non-unit rows in strict mode") {
  DatasetCollection data = center_datasets(random_collection(2, 1, 50, 17));
  Matrix w(2, 2);
  w << 1, 1, 0, 1;  // first row has norm sqrt(2)
  DemixingSet set({w});
  CHECK_THROWS_AS(estimate_sources(set, data, 0), DegenerateDemixingError);
  CHECK_NOTHROW(estimate_sources(set, data, 0, false));
  CHECK_THROWS_AS(estimate_sources(set, data, 5), DimensionError);
}

TEST_CASE("estimate_sources matches dense matrix-vector products") {
  DatasetCollection data = center_datasets(random_collection(3, 2, 50, 19));
  DemixingSet w = DemixingSet::random_orthonormal(3, 2, 23);
  for (int n = 0; n < 3; ++n) {
    const std::vector<Vector> y = estimate_sources(w, data, n);
    for (int k = 0; k < 2; ++k) {
      const Vector direct = data.dataset(k).transpose() * w.mat(k).row(n).transpose();
      CHECK((y[k] - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("whiten_datasets produces identity sample covariance") {
  DatasetCollection data = center_datasets(random_collection(4, 2, 300, 29));
  WhitenedData white = whiten_datasets(data);
  for (int k = 0; k < 2; ++k) {
    const Matrix& x = white.data.dataset(k);
    const Matrix cov = x * x.transpose() / 300.0;
    CHECK((cov - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((white.transforms[k] * data.dataset(k) - x).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("reference sets are renormalized on load") {
  Rng rng(31);
  Matrix raw = 3.0 * rng.gaussian_matrix(2, 400);
  raw.array() += 1.5;
  ReferenceSet refs(raw, true);
  for (int m = 0; m < 2; ++m) {
    CHECK(std::abs(refs.signals().row(m).mean()) < 1e-10);
    CHECK(std::abs(refs.signals().row(m).squaredNorm() / 400.0 - 1.0) < 1e-8);
  }
  CHECK_THROWS_AS(ReferenceSet(Matrix::Zero(1, 10), true), DegenerateSignalError);
}

TEST_CASE("projected references hold (1/V) X r products") {
  DatasetCollection data = center_datasets(random_collection(3, 2, 120, 37));
  Rng rng(41);
  ReferenceSet refs(rng.gaussian_matrix(2, 120), true);
  ProjectedReferences proj = project_references(refs, data);
  REQUIRE(proj.num_references() == 2);
  for (int k = 0; k < 2; ++k)
    for (int m = 0; m < 2; ++m) {
      const Vector direct = data.dataset(k) * refs.signal(m) / 120.0;
      CHECK((proj.q[k].col(m) - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
  CHECK(proj.var_r(0) == doctest::Approx(1.0).epsilon(1e-8));
}
