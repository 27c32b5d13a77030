#pragma once

#include <vector>

#include "civa/types.hpp"

namespace civa::testing {

/// Best assignment score by exhaustive permutation search (rows to columns,
/// maximizing the sum of picked entries). Feasible for n <= 8.
double brute_force_assignment_score(const Matrix& score);

/// Score of a given assignment perm (row n matched to column perm[n]).
double assignment_score(const Matrix& score, const std::vector<int>& perm);

/// Sample covariance (1/V convention) of the rows of a matrix.
Matrix empirical_covariance(const Matrix& samples);

/// Whiten rows so the sample covariance is exactly the identity.
Matrix whiten_rows(const Matrix& x);

}  // namespace civa::testing
