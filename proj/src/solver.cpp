#include <chrono>
#include <optional>

#include "civa/constraints.hpp"
#include "civa/core.hpp"
#include "civa/ivag.hpp"

namespace civa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_lagrangian(Variant v) {
  return v == Variant::CivaFixed || v == Variant::PtCiva || v == Variant::ArCiva;
}

struct SweepInputs {
  Variant variant;
  const CrossCovarianceCache& cache;
  const ProjectedReferences* proj = nullptr;
  SolverSettings settings;
  ConstraintSettings constraint;
  RegularizerSettings regularizer;
};

RunReport run_sweeps(const SweepInputs& in) {
  in.settings.validate();
  const int n_total = in.cache.num_sources();
  const int k_total = in.cache.num_datasets();
  const bool lagrangian = is_lagrangian(in.variant);
  const bool tf = in.variant == Variant::TfCiva;
  if ((lagrangian || tf) && in.proj == nullptr)
    throw ConfigError("constrained run requires references");
  const int m_total = (lagrangian || tf) ? in.proj->num_references() : 0;
  if (lagrangian || tf) {
    if (m_total > n_total)
      throw DimensionError("constrained run: more references than components");
    if (static_cast<int>(in.proj->q.size()) != k_total)
      throw DimensionError("constrained run: projected references do not match the cache");
  }
  if (lagrangian) in.constraint.validate();
  if (tf) in.regularizer.validate();

  RunReport rep;
  rep.variant = variant_name(in.variant);
  rep.seed = in.settings.seed;

  const auto t_solve = Clock::now();
  DemixingSet w = DemixingSet::random_orthonormal(n_total, k_total, in.settings.seed);

  SCVCovarianceSet scv;
  scv.sigma.reserve(n_total);
  for (int n = 0; n < n_total; ++n) scv.sigma.push_back(update_scv_covariance(w, in.cache, n));

  std::optional<ConstraintState> state;
  if (lagrangian) {
    state.emplace(m_total, k_total, in.constraint);
    // Thresholds start from a first selection on the initial estimates, so
    // the very first multiplier update sees a meaningful rho.
    const Matrix eps0 = constrained_similarities(*in.proj, in.cache, w, m_total);
    for (int n = 0; n < m_total; ++n) {
      const Vector eps_row = eps0.row(n).transpose();
      if (in.constraint.strategy == ThresholdStrategy::ParameterTuned) {
        const double rho = select_threshold(in.constraint.strategy, *state, eps_row, n, 0);
        for (int k = 0; k < k_total; ++k) state->set_rho(n, k, rho);
      } else {
        for (int k = 0; k < k_total; ++k)
          state->set_rho(n, k, select_threshold(in.constraint.strategy, *state, eps_row, n, k));
      }
    }
  }

  const auto objective = [&]() {
    double obj = iva_g_cost(w, scv, in.cache);
    if (lagrangian)
      obj += penalty_value(*state, constrained_similarities(*in.proj, in.cache, w, m_total));
    if (tf) obj += 0.5 * in.regularizer.lambda * j_ref_value(*in.proj, in.cache, w);
    return obj;
  };

  double obj_prev = objective();
  rep.objective_trace.push_back(obj_prev);
  double eta = in.settings.eta0;
  double ridge_worst = 0.0;

  for (int iter = 1; iter <= in.settings.max_iters; ++iter) {
    if (state) state->record_sweep(iter);
    const DemixingSet w_prev = w;
    for (int n = 0; n < n_total; ++n) {
      const bool constrained_comp = n < m_total;
      if (lagrangian && constrained_comp &&
          in.constraint.strategy == ThresholdStrategy::ParameterTuned) {
        // The shared-per-component threshold is recomputed once per n-visit.
        Vector eps_row(k_total);
        for (int k = 0; k < k_total; ++k)
          eps_row(k) = similarity_vfree(*in.proj, in.cache, w, n, n, k);
        const double rho = select_threshold(in.constraint.strategy, *state, eps_row, n, 0);
        for (int k = 0; k < k_total; ++k) state->set_rho(n, k, rho);
      }
      for (int k = 0; k < k_total; ++k) {
        double ridge = 0.0;
        const Vector inv_col =
            spd_inverse_column(scv.sigma[n], k, in.settings.ridge_rel, &ridge);
        if (ridge > ridge_worst) ridge_worst = ridge;

        if (lagrangian && constrained_comp) {
          const double eps_nk = similarity_vfree(*in.proj, in.cache, w, n, n, k);
          state->set_mu(n, k,
                        update_multiplier(state->mu(n, k), in.constraint.gamma,
                                          state->rho(n, k), eps_nk)
                            .second);
          if (in.constraint.strategy == ThresholdStrategy::AdaptiveReverse) {
            state->maybe_switch_scheme(n, k);
            state->set_rho(n, k,
                           select_threshold(in.constraint.strategy, *state,
                                            Vector::Constant(k_total, eps_nk), n, k));
          }
        }

        Vector grad = grad_iva_g_core(w, inv_col, in.cache, n, k);
        if (lagrangian && constrained_comp)
          grad += grad_constraint_term(*state, *in.proj, in.cache, w, n, k);
        if (tf && constrained_comp)
          grad += 0.5 * in.regularizer.lambda * grad_j_ref(*in.proj, in.cache, w, n, k);

        const Vector stepped = gradient_step(w.mat(k).row(n).transpose(), grad, eta);
        w.mat(k).row(n) = stepped.transpose();

        for (int l = 0; l < k_total; ++l) {
          const double value =
              w.mat(k).row(n) * in.cache.block(k, l) * w.mat(l).row(n).transpose();
          scv.sigma[n](k, l) = value;
          scv.sigma[n](l, k) = value;
        }
      }
    }

    const double obj = objective();
    rep.objective_trace.push_back(obj);
    if (obj >= obj_prev) {
      eta *= in.settings.decay;
      rep.decay_iterations.push_back(iter);
    }
    obj_prev = obj;
    if (lagrangian) {
      rep.mean_mu_trace.push_back(state->mu_matrix().mean());
      rep.mean_rho_trace.push_back(state->rho_matrix().mean());
    }

    rep.iterations = iter;
    rep.final_change = demixing_change(w_prev, w);
    if (rep.final_change < in.settings.tol) {
      rep.converged = true;
      break;
    }
  }

  rep.solve_seconds = seconds_since(t_solve);
  rep.per_iteration_seconds = rep.iterations > 0 ? rep.solve_seconds / rep.iterations : 0.0;
  rep.total_seconds = rep.solve_seconds;
  rep.final_objective = obj_prev;
  rep.final_eta = eta;

  scv.ridge = ridge_worst;
  if (lagrangian || tf) {
    rep.final_eps = constrained_similarities(*in.proj, in.cache, w, m_total);
    rep.eps_rank_violations = 0;
    for (int n = 0; n < m_total; ++n)
      for (int k = 0; k < k_total; ++k)
        for (int m = 0; m < m_total; ++m) {
          if (m == n) continue;
          if (similarity_vfree(*in.proj, in.cache, w, n, m, k) >= rep.final_eps(n, k)) {
            ++rep.eps_rank_violations;
            break;
          }
        }
  }
  if (lagrangian) {
    rep.final_rho = state->rho_matrix();
    rep.final_mu = state->mu_matrix();
    rep.switch_events = state->switch_events();
    rep.first_argmax_switch = state->first_argmax_switch();
    rep.first_mu_zero = state->first_mu_zero();
    rep.constraints_total = m_total * k_total;
    rep.constraints_satisfied = 0;
    for (int n = 0; n < m_total; ++n)
      for (int k = 0; k < k_total; ++k)
        if (rep.final_eps(n, k) >= rep.final_rho(n, k)) ++rep.constraints_satisfied;
  }
  rep.demixing = std::move(w);
  rep.scv_covariances = std::move(scv);
  return rep;
}

}  // namespace

DemixingSet compose_demixing(const DemixingSet& internal, const std::vector<Matrix>& transforms,
                             SCVCovarianceSet* sigma) {
  if (static_cast<int>(transforms.size()) != internal.num_datasets())
    throw DimensionError("compose_demixing: transform count must match dataset count");
  const int n_total = internal.num_sources();
  const int k_total = internal.num_datasets();
  std::vector<Matrix> composed;
  composed.reserve(k_total);
  Matrix scales(k_total, n_total);
  for (int k = 0; k < k_total; ++k) {
    Matrix m = internal.mat(k) * transforms[k];
    for (int n = 0; n < n_total; ++n) {
      const double norm = m.row(n).norm();
      if (norm <= 0.0 || !std::isfinite(norm))
        throw DegenerateDemixingError("compose_demixing: degenerate row");
      m.row(n) /= norm;
      scales(k, n) = norm;
    }
    composed.push_back(std::move(m));
  }
  if (sigma) {
    // Estimates scale by 1/norm per row; covariances follow suit.
    for (int n = 0; n < static_cast<int>(sigma->sigma.size()); ++n)
      for (int k = 0; k < k_total; ++k)
        for (int l = 0; l < k_total; ++l)
          sigma->sigma[n](k, l) /= scales(k, n) * scales(l, n);
  }
  return DemixingSet(std::move(composed));
}

RunReport run_iva_g_v(const DatasetCollection& data, const CrossCovarianceCache& cache,
                      const SolverSettings& settings) {
  if (!data.centered()) throw NotCenteredError("run_iva_g_v requires centered data");
  SweepInputs in{Variant::IvaG, cache, nullptr, settings, {}, {}};
  return run_sweeps(in);
}

RunReport run_constrained(Variant variant, const DatasetCollection& data,
                          const CrossCovarianceCache& cache, const ReferenceSet& refs,
                          const ProjectedReferences& proj, const SolverSettings& settings,
                          const ConstraintSettings& constraint,
                          const RegularizerSettings& regularizer) {
  if (variant == Variant::IvaG) return run_iva_g_v(data, cache, settings);
  if (!data.centered()) throw NotCenteredError("run_constrained requires centered data");
  if (refs.num_references() != proj.num_references())
    throw DimensionError("run_constrained: reference set and projections disagree");
  SweepInputs in{variant, cache, &proj, settings, constraint, regularizer};
  return run_sweeps(in);
}

namespace {

/// Shared body of the whitening convenience overloads.
RunReport run_standardized(Variant variant, const DatasetCollection& data,
                           const ReferenceSet* refs, const SolverSettings& settings,
                           const ConstraintSettings& constraint,
                           const RegularizerSettings& regularizer) {
  const auto t0 = Clock::now();
  const WhitenedData white = whiten_datasets(data);
  const CrossCovarianceCache cache = build_cross_covariance_cache(white.data);
  RunReport rep;
  if (variant == Variant::IvaG) {
    const double cache_seconds = seconds_since(t0);
    rep = run_iva_g_v(white.data, cache, settings);
    rep.cache_seconds = cache_seconds;
  } else {
    const ProjectedReferences proj = project_references(*refs, white.data);
    const double cache_seconds = seconds_since(t0);
    rep = run_constrained(variant, white.data, cache, *refs, proj, settings, constraint,
                          regularizer);
    rep.cache_seconds = cache_seconds;
  }
  rep.total_seconds = rep.solve_seconds + rep.cache_seconds;
  if (rep.demixing)
    rep.demixing = compose_demixing(*rep.demixing, white.transforms,
                                    rep.scv_covariances ? &*rep.scv_covariances : nullptr);
  return rep;
}

}  // namespace

RunReport run_iva_g_v(const DatasetCollection& data, const SolverSettings& settings) {
  return run_standardized(Variant::IvaG, data, nullptr, settings, {}, {});
}

RunReport run_constrained(Variant variant, const DatasetCollection& data, const ReferenceSet& refs,
                          const SolverSettings& settings, const ConstraintSettings& constraint,
                          const RegularizerSettings& regularizer) {
  if (variant == Variant::IvaG) return run_iva_g_v(data, settings);
  return run_standardized(variant, data, &refs, settings, constraint, regularizer);
}

}  // namespace civa
