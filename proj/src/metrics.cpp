#include "civa/metrics.hpp"

#include <cmath>

#include <Eigen/LU>

#include "civa/constraints.hpp"
#include "civa/core.hpp"
#include "civa/hybrid.hpp"

namespace civa {

GlobalMatrixSet GlobalMatrixSet::from(const DemixingSet& w, const std::vector<Matrix>& mixing) {
  if (static_cast<int>(mixing.size()) != w.num_datasets())
    throw DimensionError("GlobalMatrixSet: mixing count must match dataset count");
  GlobalMatrixSet out;
  out.g.reserve(mixing.size());
  for (int k = 0; k < w.num_datasets(); ++k) {
    if (mixing[k].rows() != w.num_sources() || mixing[k].cols() != w.num_sources())
      throw DimensionError("GlobalMatrixSet: mixing matrix has wrong size");
    out.g.push_back(w.mat(k) * mixing[k]);
  }
  return out;
}

double isi(const Matrix& g) {
  const int n = static_cast<int>(g.rows());
  if (g.cols() != n || n < 2) throw DimensionError("isi: need a square matrix of order >= 2");
  if (!g.allFinite()) throw UndefinedMetricError("isi: non-finite entries");
  const Matrix a = g.cwiseAbs();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double row_max = a.row(i).maxCoeff();
    if (row_max <= 0.0) throw UndefinedMetricError("isi: all-zero row");
    total += a.row(i).sum() / row_max - 1.0;
  }
  for (int j = 0; j < n; ++j) {
    const double col_max = a.col(j).maxCoeff();
    if (col_max <= 0.0) throw UndefinedMetricError("isi: all-zero column");
    total += a.col(j).sum() / col_max - 1.0;
  }
  return total / (2.0 * n * (n - 1));
}

double joint_isi(const GlobalMatrixSet& gs) {
  if (gs.g.empty()) throw DimensionError("joint_isi: empty set");
  Matrix mean = gs.g[0].cwiseAbs();
  for (size_t k = 1; k < gs.g.size(); ++k) mean += gs.g[k].cwiseAbs();
  mean /= static_cast<double>(gs.g.size());
  return isi(mean);
}

double joint_isi(const DemixingSet& w, const std::vector<Matrix>& mixing) {
  return joint_isi(GlobalMatrixSet::from(w, mixing));
}

std::vector<double> cross_joint_isi(const std::vector<DemixingSet>& runs) {
  const int r_total = static_cast<int>(runs.size());
  if (r_total < 1) throw DimensionError("cross_joint_isi: no runs");
  const int k_total = runs[0].num_datasets();
  for (const DemixingSet& w : runs)
    if (w.num_datasets() != k_total || w.num_sources() != runs[0].num_sources())
      throw DimensionError("cross_joint_isi: runs must share dimensions");

  // Inverses once per run; P_ij^[k] = W_j^[k] (W_i^[k])^-1 is a scaled
  // permutation exactly when runs i and j agree up to row order and sign.
  std::vector<std::vector<Matrix>> inverses(r_total);
  for (int i = 0; i < r_total; ++i) {
    inverses[i].reserve(k_total);
    for (int k = 0; k < k_total; ++k) {
      Eigen::FullPivLU<Matrix> lu(runs[i].mat(k));
      if (!lu.isInvertible())
        throw DegenerateDemixingError("cross_joint_isi: singular demixing matrix");
      inverses[i].push_back(lu.inverse());
    }
  }

  Matrix pairwise = Matrix::Zero(r_total, r_total);
  for (int i = 0; i < r_total; ++i)
    for (int j = 0; j < r_total; ++j) {
      if (i == j) continue;
      GlobalMatrixSet gs;
      gs.g.reserve(k_total);
      for (int k = 0; k < k_total; ++k) gs.g.push_back(runs[j].mat(k) * inverses[i][k]);
      pairwise(i, j) = joint_isi(gs);
    }

  std::vector<double> out(r_total, 0.0);
  for (int i = 0; i < r_total; ++i) out[i] = pairwise.row(i).sum() / static_cast<double>(r_total);
  return out;
}

namespace {

/// Mean over datasets of |corr(s_n^[k], y_m^[k])| for every (n, m) pair.
Matrix mean_similarity_matrix(const GroundTruth& truth, const DemixingSet& w,
                              const DatasetCollection& data) {
  const int n_total = w.num_sources();
  const int k_total = w.num_datasets();
  Matrix sim = Matrix::Zero(n_total, n_total);
  for (int m = 0; m < n_total; ++m) {
    const std::vector<Vector> estimates = estimate_sources(w, data, m);
    for (int n = 0; n < n_total; ++n)
      for (int k = 0; k < k_total; ++k)
        sim(n, m) += similarity(truth.sources[n].row(k).transpose(), estimates[k]);
  }
  return sim / static_cast<double>(k_total);
}

}  // namespace

std::vector<int> match_components(const GroundTruth& truth, const DemixingSet& w,
                                  const DatasetCollection& data) {
  const int n_total = w.num_sources();
  if (static_cast<int>(truth.sources.size()) != n_total)
    throw DimensionError("match_components: ground truth size mismatch");
  Matrix sim = mean_similarity_matrix(truth, w, data);
  std::vector<int> perm(n_total, -1);
  std::vector<bool> row_used(n_total, false), col_used(n_total, false);
  for (int step = 0; step < n_total; ++step) {
    int best_n = -1, best_m = -1;
    double best = -1.0;
    for (int n = 0; n < n_total; ++n) {
      if (row_used[n]) continue;
      for (int m = 0; m < n_total; ++m) {
        if (col_used[m]) continue;
        if (sim(n, m) > best) {
          best = sim(n, m);
          best_n = n;
          best_m = m;
        }
      }
    }
    perm[best_n] = best_m;
    row_used[best_n] = true;
    col_used[best_m] = true;
  }
  return perm;
}

double similarity_factor(const GroundTruth& truth, const DemixingSet& w,
                         const DatasetCollection& data, int num_constraints,
                         const std::vector<int>* perm) {
  const int k_total = w.num_datasets();
  if (num_constraints < 1 || num_constraints > w.num_sources())
    throw DimensionError("similarity_factor: bad constraint count");
  double total = 0.0;
  for (int n = 0; n < num_constraints; ++n) {
    const int m = perm ? perm->at(n) : n;
    const std::vector<Vector> estimates = estimate_sources(w, data, m);
    for (int k = 0; k < k_total; ++k) {
      const double eps = similarity(truth.sources[n].row(k).transpose(), estimates[k]);
      total += eps * eps;
    }
  }
  return std::sqrt(total / static_cast<double>(num_constraints * k_total));
}

}  // namespace civa
