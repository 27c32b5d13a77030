#include "civa/core.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace civa {

DatasetCollection center_datasets(const DatasetCollection& raw) {
  std::vector<Matrix> centered;
  centered.reserve(raw.num_datasets());
  for (const Matrix& x : raw.datasets())
    centered.push_back(x.colwise() - x.rowwise().mean());
  return DatasetCollection(std::move(centered), true);
}

CrossCovarianceCache build_cross_covariance_cache(const DatasetCollection& data) {
  return CrossCovarianceCache::from_datasets(data);
}

WhitenedData whiten_datasets(const DatasetCollection& centered) {
  if (!centered.centered()) throw NotCenteredError("whiten_datasets requires centered data");
  const double scale = 1.0 / static_cast<double>(centered.num_samples());
  std::vector<Matrix> whitened, transforms;
  whitened.reserve(centered.num_datasets());
  transforms.reserve(centered.num_datasets());
  for (const Matrix& x : centered.datasets()) {
    const Matrix cov = scale * (x * x.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success)
      throw NumericalFailureError("whiten_datasets: eigendecomposition failed");
    const Vector values = es.eigenvalues();
    if (values.minCoeff() < 1e-12 * values.maxCoeff())
      throw IllConditionedModelError("whiten_datasets: dataset covariance is near-singular");
    const Matrix t = es.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
                     es.eigenvectors().transpose();
    transforms.push_back(t);
    whitened.push_back(t * x);
  }
  return {DatasetCollection(std::move(whitened), true), std::move(transforms)};
}

std::vector<Vector> estimate_sources(const DemixingSet& w, const DatasetCollection& data, int n,
                                     bool strict) {
  if (n < 0 || n >= w.num_sources()) throw DimensionError("estimate_sources: component index out of range");
  if (w.num_datasets() != data.num_datasets() || w.num_sources() != data.num_sources())
    throw DimensionError("estimate_sources: demixing/data dimensions differ");
  std::vector<Vector> out;
  out.reserve(data.num_datasets());
  for (int k = 0; k < data.num_datasets(); ++k) {
    if (strict && std::abs(w.mat(k).row(n).norm() - 1.0) > 1e-6)
      throw DegenerateDemixingError("estimate_sources: demixing row is not unit-norm");
    out.push_back(data.dataset(k).transpose() * w.mat(k).row(n).transpose());
  }
  return out;
}

}  // namespace civa
