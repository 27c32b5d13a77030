#pragma once

#include <vector>

#include "civa/types.hpp"

namespace civa {

struct GroundTruth;

/// The per-dataset demixing-mixing products G^[k] = W^[k] A^[k].
struct GlobalMatrixSet {
  std::vector<Matrix> g;

  static GlobalMatrixSet from(const DemixingSet& w, const std::vector<Matrix>& mixing);

  int num_datasets() const { return static_cast<int>(g.size()); }
};

/// Normalized inter-symbol interference of a single global matrix, in [0,1].
/// 0 for any scaled permutation, 1 for the all-ones matrix.
double isi(const Matrix& g);

/// ISI of the entrywise mean of |G^[k]| over datasets; penalizes
/// permutation inconsistency across datasets.
double joint_isi(const GlobalMatrixSet& gs);
double joint_isi(const DemixingSet& w, const std::vector<Matrix>& mixing);

/// Ground-truth-free consistency across R repeated runs: entry i is the
/// mean over j != i of joint_isi({W_j^[k] (W_i^[k])^-1}), divided by R.
std::vector<double> cross_joint_isi(const std::vector<DemixingSet>& runs);

/// Greedy maximum-|correlation| assignment of estimated components to true
/// sources on the mean-over-datasets similarity matrix. perm[n] is the
/// estimated component matched to true source n.
std::vector<int> match_components(const GroundTruth& truth, const DemixingSet& w,
                                  const DatasetCollection& data);

/// Root-mean-square |correlation| between estimated and true constrained
/// sources, n = 1..M paired by index (or by `perm` when supplied).
double similarity_factor(const GroundTruth& truth, const DemixingSet& w,
                         const DatasetCollection& data, int num_constraints,
                         const std::vector<int>* perm = nullptr);

}  // namespace civa
