#include "civa/constraints.hpp"

#include <algorithm>
#include <cmath>

namespace civa {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::IvaG: return "iva-g-v";
    case Variant::CivaFixed: return "civa-fixed";
    case Variant::PtCiva: return "pt-civa";
    case Variant::ArCiva: return "ar-civa";
    case Variant::TfCiva: return "tf-civa";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "iva-g-v" || name == "iva-g") return Variant::IvaG;
  if (name == "civa-fixed") return Variant::CivaFixed;
  if (name == "pt-civa") return Variant::PtCiva;
  if (name == "ar-civa") return Variant::ArCiva;
  if (name == "tf-civa") return Variant::TfCiva;
  throw ConfigError("unknown variant name: " + name);
}

ConstraintSettings ConstraintSettings::fixed_defaults() {
  ConstraintSettings s;
  s.strategy = ThresholdStrategy::Fixed;
  s.gamma = 3.0;
  s.fixed_rho = 0.5;
  return s;
}

ConstraintSettings ConstraintSettings::pt_defaults() {
  ConstraintSettings s;
  s.strategy = ThresholdStrategy::ParameterTuned;
  s.gamma = 3.0;
  s.thresholds = {0.001};
  for (int i = 1; i <= 9; ++i) s.thresholds.push_back(i / 10.0);
  return s;
}

ConstraintSettings ConstraintSettings::ar_defaults() {
  ConstraintSettings s;
  s.strategy = ThresholdStrategy::AdaptiveReverse;
  s.gamma = 100.0;
  s.mu_max = 1.0;
  s.thresholds.clear();
  for (int i = 1; i <= 99; ++i) s.thresholds.push_back(i / 100.0);
  return s;
}

void ConstraintSettings::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("constraint: gamma must be positive");
  if (initial_mu < 0.0) throw ConfigError("constraint: initial_mu must be non-negative");
  if (strategy == ThresholdStrategy::Fixed) {
    if (!(fixed_rho > 0.0 && fixed_rho < 1.0))
      throw ConfigError("constraint: fixed rho must lie in (0,1)");
    return;
  }
  if (thresholds.empty()) throw ConfigError("constraint: candidate threshold set is empty");
  for (size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
      throw ConfigError("constraint: thresholds must lie in (0,1)");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      throw ConfigError("constraint: thresholds must be strictly ascending");
  }
  if (strategy == ThresholdStrategy::AdaptiveReverse && !(mu_max > 0.0))
    throw ConfigError("constraint: mu_max must be positive");
}

void RegularizerSettings::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("regularizer: lambda must be positive");
}

ConstraintState::ConstraintState(int num_constraints, int num_datasets,
                                 const ConstraintSettings& settings)
    : settings_(settings), m_(num_constraints), k_(num_datasets) {
  settings_.validate();
  if (m_ < 1 || k_ < 1) throw DimensionError("ConstraintState: empty constraint grid");
  rho_ = Matrix::Constant(m_, k_, settings_.fixed_rho);
  mu_ = Matrix::Constant(m_, k_, settings_.initial_mu);
  scheme_.assign(static_cast<size_t>(m_) * k_, settings_.initial_scheme);
  first_argmax_switch_ = Eigen::MatrixXi::Constant(m_, k_, -1);
  first_mu_zero_ = Eigen::MatrixXi::Constant(m_, k_, -1);
}

void ConstraintState::set_mu(int n, int k, double value) {
  mu_(n, k) = value;
  if (value <= 0.0 && first_mu_zero_(n, k) < 0) first_mu_zero_(n, k) = sweep_;
}

void ConstraintState::maybe_switch_scheme(int n, int k) {
  const SelectionScheme current = scheme_[idx(n, k)];
  SelectionScheme next = current;
  if (mu_(n, k) >= settings_.mu_max) {
    next = SelectionScheme::ArgMax;
  } else if (mu_(n, k) <= 0.0) {
    next = SelectionScheme::ArgMin;
  }
  if (next != current) {
    scheme_[idx(n, k)] = next;
    switch_events_.push_back({sweep_, n, k, next == SelectionScheme::ArgMax});
    if (next == SelectionScheme::ArgMax && first_argmax_switch_(n, k) < 0)
      first_argmax_switch_(n, k) = sweep_;
  }
}

// ---------------------------------------------------------------------------

double similarity(const Vector& a, const Vector& b, SimilarityMode mode) {
  if (a.size() != b.size()) throw DimensionError("similarity: length mismatch");
  Vector ac = a;
  Vector bc = b;
  if (mode == SimilarityMode::Pearson) {
    ac.array() -= ac.mean();
    bc.array() -= bc.mean();
  }
  const double na = ac.norm();
  const double nb = bc.norm();
  if (na < 1e-12 || nb < 1e-12) throw DegenerateSignalError("similarity: zero-variance input");
  return std::abs(ac.dot(bc)) / (na * nb);
}

Vector similarity_gradient_y(const Vector& r, const Vector& y, SimilarityMode mode) {
  Vector rc = r;
  Vector yc = y;
  if (mode == SimilarityMode::Pearson) {
    rc.array() -= rc.mean();
    yc.array() -= yc.mean();
  }
  const double nr = rc.norm();
  const double ny = yc.norm();
  if (nr < 1e-12 || ny < 1e-12)
    throw DegenerateSignalError("similarity_gradient_y: zero-variance input");
  const double inner = rc.dot(yc);
  const double sign = inner >= 0.0 ? 1.0 : -1.0;
  return (sign / (nr * ny)) * (rc - (inner / (ny * ny)) * yc);
}

namespace {

struct VfreeParts {
  double u = 0.0;      // (1/V) r^T y
  double c = 0.0;      // (1/V) ||y||^2 = w^T R^kk w
  double var_r = 0.0;  // (1/V) ||r||^2
};

VfreeParts vfree_parts(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                       const DemixingSet& w, int m, int n, int k) {
  VfreeParts p;
  const auto row = w.mat(k).row(n);
  p.u = proj.q.at(k).col(m).dot(row);
  p.c = row * cache.block(k, k) * row.transpose();
  p.var_r = proj.var_r(m);
  if (p.c < 1e-24 || p.var_r < 1e-24)
    throw DegenerateSignalError("similarity: degenerate estimate or reference");
  return p;
}

}  // namespace

double similarity_vfree(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                        const DemixingSet& w, int m, int n, int k) {
  const VfreeParts p = vfree_parts(proj, cache, w, m, n, k);
  return std::abs(p.u) / std::sqrt(p.var_r * p.c);
}

Vector similarity_gradient(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                           const DemixingSet& w, int m, int n, int k) {
  const VfreeParts p = vfree_parts(proj, cache, w, m, n, k);
  const double sign = p.u >= 0.0 ? 1.0 : -1.0;
  const Vector bw = cache.block(k, k) * w.mat(k).row(n).transpose();
  return (sign / std::sqrt(p.var_r * p.c)) * (proj.q.at(k).col(m) - (p.u / p.c) * bw);
}

Matrix constrained_similarities(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                                const DemixingSet& w, int num_constraints) {
  Matrix eps(num_constraints, w.num_datasets());
  for (int n = 0; n < num_constraints; ++n)
    for (int k = 0; k < w.num_datasets(); ++k)
      eps(n, k) = similarity_vfree(proj, cache, w, n, n, k);
  return eps;
}

// ---------------------------------------------------------------------------

double penalty_value(const ConstraintState& state, const Matrix& eps) {
  if (eps.rows() != state.num_constraints() || eps.cols() != state.num_datasets())
    throw DimensionError("penalty_value: similarity matrix has wrong shape");
  const double gamma = state.settings().gamma;
  double total = 0.0;
  for (int n = 0; n < eps.rows(); ++n)
    for (int k = 0; k < eps.cols(); ++k) {
      const double mu = state.mu(n, k);
      const double active = std::max(0.0, mu + gamma * (state.rho(n, k) - eps(n, k)));
      total += active * active - mu * mu;
    }
  return total / (2.0 * gamma);
}

std::pair<double, double> update_multiplier(double mu, double gamma, double rho, double eps) {
  const double alpha = mu + gamma * (rho - eps);
  return {alpha, std::max(0.0, alpha)};
}

double select_threshold(ThresholdStrategy strategy, const ConstraintState& state,
                        const Vector& eps_row, int n, int k) {
  const ConstraintSettings& s = state.settings();
  switch (strategy) {
    case ThresholdStrategy::Fixed:
      return s.fixed_rho;
    case ThresholdStrategy::ParameterTuned: {
      // rho_n = argmin over candidates of min_k |rho - eps_n^[k]|, ties to
      // the smallest candidate.
      double best = s.thresholds.front();
      double best_dist = std::numeric_limits<double>::infinity();
      for (double candidate : s.thresholds) {
        const double dist = (eps_row.array() - candidate).abs().minCoeff();
        if (dist < best_dist) {
          best_dist = dist;
          best = candidate;
        }
      }
      return best;
    }
    case ThresholdStrategy::AdaptiveReverse: {
      const double eps = eps_row(k);
      if (state.scheme(n, k) == SelectionScheme::ArgMin) {
        for (double candidate : s.thresholds)
          if (candidate > eps) return candidate;
        return s.thresholds.back();  // no candidate exceeds eps
      }
      for (auto it = s.thresholds.rbegin(); it != s.thresholds.rend(); ++it)
        if (*it <= eps) return *it;
      return s.thresholds.front();  // eps below the whole candidate set
    }
  }
  throw ConfigError("select_threshold: unknown strategy");
}

Vector grad_constraint_term(const ConstraintState& state, const ProjectedReferences& proj,
                            const CrossCovarianceCache& cache, const DemixingSet& w, int n,
                            int k) {
  if (n >= state.num_constraints()) return Vector::Zero(w.num_sources());
  const double eps = similarity_vfree(proj, cache, w, n, n, k);
  const double active =
      std::max(0.0, state.mu(n, k) + state.settings().gamma * (state.rho(n, k) - eps));
  if (active == 0.0) return Vector::Zero(w.num_sources());
  return -active * similarity_gradient(proj, cache, w, n, n, k);
}

// ---------------------------------------------------------------------------

double j_ref_value(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                   const DemixingSet& w) {
  const int m_total = proj.num_references();
  if (m_total < 1) throw DimensionError("j_ref_value: no references");
  double total = 0.0;
  for (int k = 0; k < w.num_datasets(); ++k) {
    for (int n = 0; n < m_total; ++n) {
      for (int m = 0; m < m_total; ++m) {
        const double eps = similarity_vfree(proj, cache, w, n, m, k);
        total += (m == n) ? -eps * eps : eps * eps;
      }
    }
  }
  return total;
}

Vector grad_j_ref(const ProjectedReferences& proj, const CrossCovarianceCache& cache,
                  const DemixingSet& w, int n, int k) {
  const int m_total = proj.num_references();
  if (n >= m_total) return Vector::Zero(w.num_sources());
  Vector grad = Vector::Zero(w.num_sources());
  for (int m = 0; m < m_total; ++m) {
    const double eps = similarity_vfree(proj, cache, w, m, n, k);
    const Vector deps = similarity_gradient(proj, cache, w, m, n, k);
    grad += (m == n) ? -eps * deps : eps * deps;
  }
  return 2.0 * grad;
}

}  // namespace civa
