#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "civa/types.hpp"

namespace civa {

/// Two readings of the source construction weights.
/// VarianceFraction: S_n = sqrt(1-phi) 1 r^T + sqrt(phi) Z_n, so phi is the
/// fraction of source variance carried by the latent part.
/// Amplitude: S_n = sqrt(1-phi^2) 1 r^T + phi Z_n.
enum class SourceForm { VarianceFraction, Amplitude };

struct SyntheticRefSettings {
  int smoothing_window = 9;
  double pairwise_corr = 0.1;
};

struct HybridConfig {
  int n_sources = 20;   // N
  int n_datasets = 20;  // K
  int n_references = 20;  // M handed to the solver; sources always use all N
  long n_samples = 58515;  // V
  double mu0 = 0.1;  // cross-SCV latent correlation
  double mu1 = 0.2;  // within-SCV latent correlation
  std::vector<double> phi;  // empty -> linearly spaced in [0.3, 0.9]
  SourceForm form = SourceForm::VarianceFraction;
  std::string ref_file;  // empty -> synthesize
  SyntheticRefSettings synth;
  double cond_limit = 1e3;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<double> resolved_phi() const;
};

/// Everything the generator knows that the solver must not see.
struct GroundTruth {
  std::vector<Matrix> sources;  // N matrices, K x V; S_n row k is s_n^[k]
  std::vector<Matrix> mixing;   // K matrices, N x N
  Matrix references;            // N x V, all references used in generation
};

/// Latent covariance (mu0 11^T + (mu1-mu0) I_N) (x) 1_K 1_K^T + (1-mu1) I_NK.
Matrix build_sigma_z(int n_sources, int n_datasets, double mu0, double mu1);

/// V iid draws of the NK-dimensional latent, partitioned into N blocks of
/// K x V. Uses a Cholesky square root, falling back to an eigenvalue square
/// root when the covariance is only semidefinite.
std::vector<Matrix> sample_latent(const Matrix& sigma_z, int n_sources, int n_datasets,
                                  long n_samples, std::uint64_t seed);

/// M smooth pseudo-spatial references: moving-average filtered noise,
/// orthonormalized and mixed to the requested common pairwise correlation,
/// then normalized to zero mean and unit variance.
ReferenceSet synthesize_references(int count, long n_samples, int smoothing_window,
                                   double pairwise_corr, std::uint64_t seed);

std::vector<Matrix> build_sources(const std::vector<Matrix>& latents, const ReferenceSet& refs,
                                  const std::vector<double>& phi, SourceForm form);

/// K iid standard-normal mixing matrices, redrawn until cond < cond_limit.
std::vector<Matrix> generate_mixing(int n_sources, int n_datasets, double cond_limit,
                                    std::uint64_t seed);

std::pair<DatasetCollection, GroundTruth> assemble_datasets(const std::vector<Matrix>& sources,
                                                            const std::vector<Matrix>& mixing);

/// Full pipeline: references, latents, sources, mixing, observations.
std::pair<DatasetCollection, GroundTruth> generate_hybrid(const HybridConfig& config);

/// Same, but with externally supplied mixing (the sweep harness keeps the
/// mixing fixed per point while redrawing sources).
std::pair<DatasetCollection, GroundTruth> generate_hybrid(const HybridConfig& config,
                                                          const std::vector<Matrix>& mixing);

}  // namespace civa
