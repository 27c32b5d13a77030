#pragma once

#include <functional>
#include <string>
#include <vector>

#include "civa/types.hpp"

namespace civa {

// Independent oracles and the fast self-verification suite. Everything here
// recomputes from first principles (full passes over the samples, finite
// differences) and must stay independent of the cached solver path it checks.

/// Central finite differences of f w.r.t. row n of W^[k].
Vector fd_gradient_w(const std::function<double(const DemixingSet&)>& f, const DemixingSet& at,
                     int n, int k, double h = 1e-6);

/// ||a - b|| / max(||b||, floor).
double relative_error(const Vector& a, const Vector& b, double floor = 1e-12);

/// The IVA cost evaluated the long way: per-sample Gaussian log-likelihoods
/// summed over all V samples, minus the demixing log-determinants.
double per_sample_iva_cost(const DemixingSet& w, const SCVCovarianceSet& sigma,
                           const DatasetCollection& data);

/// (1/V) sum_v y_n(v) y_n(v)^T computed from full sample vectors.
Matrix per_sample_scv_covariance(const DemixingSet& w, const DatasetCollection& data, int n);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// One named finite-difference comparison; `grad_fn` is injectable so a
/// deliberately broken gradient can be shown to fail.
CheckResult check_gradient_fd(const std::string& name,
                              const std::function<double(const DemixingSet&)>& value_fn,
                              const std::function<Vector(const DemixingSet&, int, int)>& grad_fn,
                              const DemixingSet& at, double rel_tol, double h = 1e-6);

struct VerifyOptions {
  std::uint64_t seed = 7;
  long generator_samples = 20000;  // reduced-V statistics
};

/// The fast invariant suite behind `civa verify`: gradient checks, oracle
/// equivalences, metric properties and generator statistics.
std::vector<CheckResult> run_verification(const VerifyOptions& options);

}  // namespace civa
