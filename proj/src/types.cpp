#include "civa/types.hpp"

#include <cmath>

#include <Eigen/QR>

#include "civa/rng.hpp"

namespace civa {

DatasetCollection::DatasetCollection(std::vector<Matrix> datasets, bool centered)
    : datasets_(std::move(datasets)), centered_(centered) {
  if (datasets_.empty()) throw DimensionError("DatasetCollection: need at least one dataset");
  n_ = static_cast<int>(datasets_[0].rows());
  v_ = static_cast<long>(datasets_[0].cols());
  if (n_ < 2) throw DimensionError("DatasetCollection: need at least 2 channels");
  if (v_ <= n_) throw DimensionError("DatasetCollection: need more samples than channels");
  for (const Matrix& x : datasets_) {
    if (x.rows() != n_ || x.cols() != v_)
      throw DimensionError("DatasetCollection: datasets must share identical dimensions");
  }
  if (centered_) {
    for (const Matrix& x : datasets_) {
      if ((x.rowwise().mean()).cwiseAbs().maxCoeff() > 1e-10)
        throw NotCenteredError("DatasetCollection: centered flag set but row means exceed 1e-10");
    }
  }
}

CrossCovarianceCache CrossCovarianceCache::from_datasets(const DatasetCollection& data) {
  if (!data.centered())
    throw NotCenteredError("cross-covariance cache requires centered data");
  CrossCovarianceCache cache;
  const int k_total = data.num_datasets();
  cache.k_ = k_total;
  cache.n_ = data.num_sources();
  cache.blocks_.resize(static_cast<size_t>(k_total) * k_total);
  const double scale = 1.0 / static_cast<double>(data.num_samples());
  for (int k = 0; k < k_total; ++k) {
    for (int l = k; l < k_total; ++l) {
      Matrix block = scale * (data.dataset(k) * data.dataset(l).transpose());
      if (l == k) block = 0.5 * (block + block.transpose());  // kill rounding asymmetry
      cache.blocks_[cache.idx(k, l)] = block;
      if (l != k) cache.blocks_[cache.idx(l, k)] = block.transpose();
    }
  }
  return cache;
}

CrossCovarianceCache CrossCovarianceCache::from_blocks(std::vector<Matrix> blocks, int num_datasets) {
  if (num_datasets < 1 || blocks.size() != static_cast<size_t>(num_datasets) * num_datasets)
    throw DimensionError("cross-covariance cache: expected K*K blocks");
  CrossCovarianceCache cache;
  cache.k_ = num_datasets;
  cache.n_ = static_cast<int>(blocks[0].rows());
  for (const Matrix& b : blocks) {
    if (b.rows() != cache.n_ || b.cols() != cache.n_)
      throw DimensionError("cross-covariance cache: blocks must be square and equal-sized");
  }
  cache.blocks_ = std::move(blocks);
  for (int k = 0; k < num_datasets; ++k)
    for (int l = 0; l < k; ++l) {
      const double gap =
          (cache.blocks_[cache.idx(k, l)] - cache.blocks_[cache.idx(l, k)].transpose())
              .cwiseAbs()
              .maxCoeff();
      if (gap > 1e-12) throw DimensionError("cross-covariance cache: grid is not symmetric");
    }
  return cache;
}

DemixingSet::DemixingSet(std::vector<Matrix> matrices) : w_(std::move(matrices)) {
  if (w_.empty()) throw DimensionError("DemixingSet: need at least one matrix");
  n_ = static_cast<int>(w_[0].rows());
  for (const Matrix& m : w_) {
    if (m.rows() != n_ || m.cols() != n_)
      throw DimensionError("DemixingSet: matrices must be square and equal-sized");
    if (!m.allFinite()) throw NumericalFailureError("DemixingSet: non-finite entries");
  }
}

DemixingSet DemixingSet::random_orthonormal(int num_sources, int num_datasets, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> mats;
  mats.reserve(num_datasets);
  for (int k = 0; k < num_datasets; ++k) {
    const Matrix g = rng.gaussian_matrix(num_sources, num_sources);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < num_sources; ++i)
      if (r(i, i) < 0) q.col(i) = -q.col(i);
    mats.push_back(std::move(q));
  }
  return DemixingSet(std::move(mats));
}

DemixingSet DemixingSet::identity(int num_sources, int num_datasets) {
  std::vector<Matrix> mats(num_datasets, Matrix::Identity(num_sources, num_sources));
  return DemixingSet(std::move(mats));
}

bool DemixingSet::rows_unit_norm(double tol) const {
  for (const Matrix& m : w_)
    for (int i = 0; i < n_; ++i)
      if (std::abs(m.row(i).norm() - 1.0) > tol) return false;
  return true;
}

void DemixingSet::renormalize_rows() {
  for (Matrix& m : w_)
    for (int i = 0; i < n_; ++i) {
      const double norm = m.row(i).norm();
      if (norm <= 0.0) throw DegenerateDemixingError("DemixingSet: zero row");
      m.row(i) /= norm;
    }
}

ReferenceSet::ReferenceSet(Matrix signals, bool renormalize) : signals_(std::move(signals)) {
  if (signals_.rows() < 1 || signals_.cols() < 2)
    throw DimensionError("ReferenceSet: need at least one reference of length >= 2");
  const long v = signals_.cols();
  for (int m = 0; m < signals_.rows(); ++m) {
    const double mean = signals_.row(m).mean();
    if (renormalize) {
      signals_.row(m).array() -= mean;
      const double sd = std::sqrt(signals_.row(m).squaredNorm() / static_cast<double>(v));
      if (sd < 1e-12) throw DegenerateSignalError("ReferenceSet: zero-variance reference");
      signals_.row(m) /= sd;
    } else {
      const double sd = std::sqrt((signals_.row(m).array() - mean).matrix().squaredNorm() /
                                  static_cast<double>(v));
      if (std::abs(sd - 1.0) > 1e-8 || std::abs(mean) > 1e-8)
        throw DegenerateSignalError("ReferenceSet: reference not zero-mean/unit-variance");
    }
  }
}

ReferenceSet ReferenceSet::truncated(int m) const {
  if (m < 1 || m > num_references()) throw DimensionError("ReferenceSet: bad truncation size");
  return ReferenceSet(signals_.topRows(m), false);
}

ProjectedReferences project_references(const ReferenceSet& refs, const DatasetCollection& data) {
  if (!data.centered()) throw NotCenteredError("project_references requires centered data");
  if (refs.num_samples() != data.num_samples())
    throw DimensionError("project_references: sample counts differ");
  if (refs.num_references() > data.num_sources())
    throw DimensionError("project_references: more references than components");
  ProjectedReferences out;
  const double scale = 1.0 / static_cast<double>(data.num_samples());
  out.q.reserve(data.num_datasets());
  for (int k = 0; k < data.num_datasets(); ++k)
    out.q.push_back(scale * (data.dataset(k) * refs.signals().transpose()));
  out.var_r.resize(refs.num_references());
  for (int m = 0; m < refs.num_references(); ++m)
    out.var_r(m) = refs.signals().row(m).squaredNorm() * scale;
  return out;
}

}  // namespace civa
