#include "civa/hybrid.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "civa/matio.hpp"
#include "civa/rng.hpp"

namespace civa {

void HybridConfig::validate() const {
  if (n_sources < 2) throw ConfigError("hybrid: need at least 2 sources");
  if (n_datasets < 1) throw ConfigError("hybrid: need at least 1 dataset");
  if (n_samples <= n_sources) throw ConfigError("hybrid: need more samples than sources");
  if (n_references < 1 || n_references > n_sources)
    throw ConfigError("hybrid: reference count must lie in [1, N]");
  if (!(mu0 >= 0.0 && mu0 <= mu1 && mu1 <= 1.0))
    throw ConfigError("hybrid: need 0 <= mu0 <= mu1 <= 1");
  if (!phi.empty() && static_cast<int>(phi.size()) != n_sources)
    throw ConfigError("hybrid: phi must have one entry per source");
  for (double p : phi)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("hybrid: phi entries must lie in [0,1]");
  if (!(cond_limit > 1.0)) throw ConfigError("hybrid: cond_limit must exceed 1");
  if (ref_file.empty()) {
    if (synth.smoothing_window < 1) throw ConfigError("hybrid: smoothing window must be >= 1");
    if (!(synth.pairwise_corr >= 0.0 && synth.pairwise_corr < 1.0))
      throw ConfigError("hybrid: pairwise_corr must lie in [0,1)");
  }
}

std::vector<double> HybridConfig::resolved_phi() const {
  if (!phi.empty()) return phi;
  std::vector<double> out(n_sources);
  if (n_sources == 1) {
    out[0] = 0.3;
    return out;
  }
  for (int n = 0; n < n_sources; ++n)
    out[n] = 0.3 + (0.9 - 0.3) * n / static_cast<double>(n_sources - 1);
  return out;
}

Matrix build_sigma_z(int n_sources, int n_datasets, double mu0, double mu1) {
  if (!(mu0 >= 0.0 && mu0 <= mu1 && mu1 <= 1.0))
    throw ConfigError("build_sigma_z: need 0 <= mu0 <= mu1 <= 1");
  const int dim = n_sources * n_datasets;
  Matrix sigma = Matrix::Constant(dim, dim, mu0);
  for (int n = 0; n < n_sources; ++n)
    sigma.block(n * n_datasets, n * n_datasets, n_datasets, n_datasets).setConstant(mu1);
  sigma.diagonal().setOnes();
  return sigma;
}

std::vector<Matrix> sample_latent(const Matrix& sigma_z, int n_sources, int n_datasets,
                                  long n_samples, std::uint64_t seed) {
  const int dim = n_sources * n_datasets;
  if (sigma_z.rows() != dim || sigma_z.cols() != dim)
    throw DimensionError("sample_latent: covariance has wrong size");

  Matrix root;
  Eigen::LLT<Matrix> llt(sigma_z);
  if (llt.info() == Eigen::Success) {
    root = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_z);
    if (es.info() != Eigen::Success)
      throw NumericalFailureError("sample_latent: factorization failed");
    Vector values = es.eigenvalues();
    if (values.minCoeff() < -1e-10 * values.cwiseAbs().maxCoeff())
      throw NumericalFailureError("sample_latent: covariance is not PSD");
    values = values.cwiseMax(0.0);
    root = es.eigenvectors() * values.cwiseSqrt().asDiagonal();
  }

  Rng rng(seed);
  Matrix z(dim, n_samples);
  Vector draw(dim);
  for (long v = 0; v < n_samples; ++v) {
    for (int i = 0; i < dim; ++i) draw(i) = rng.gaussian();
    z.col(v) = root * draw;
  }

  std::vector<Matrix> blocks;
  blocks.reserve(n_sources);
  for (int n = 0; n < n_sources; ++n)
    blocks.push_back(z.middleRows(n * n_datasets, n_datasets));
  return blocks;
}

ReferenceSet synthesize_references(int count, long n_samples, int smoothing_window,
                                   double pairwise_corr, std::uint64_t seed) {
  if (count < 1) throw ConfigError("synthesize_references: need at least one reference");
  if (n_samples < 2 * count)
    throw ConfigError("synthesize_references: too few samples for the reference count");
  if (!(pairwise_corr >= 0.0 && pairwise_corr < 1.0))
    throw ConfigError("synthesize_references: pairwise_corr must lie in [0,1)");
  if (smoothing_window < 1) throw ConfigError("synthesize_references: bad smoothing window");

  Rng rng(seed);
  Matrix noise = rng.gaussian_matrix(count, n_samples);

  // Moving average along the sample axis; gives the pseudo-spatial smoothness.
  Matrix smooth(count, n_samples);
  const int half = smoothing_window / 2;
  for (int m = 0; m < count; ++m) {
    for (long v = 0; v < n_samples; ++v) {
      const long lo = std::max<long>(0, v - half);
      const long hi = std::min<long>(n_samples - 1, v + half);
      smooth(m, v) = noise.row(m).segment(lo, hi - lo + 1).mean();
    }
  }

  // Orthonormalize the centered rows, then mix with the Cholesky factor of
  // the target Gram so the sample correlations hit pairwise_corr exactly.
  for (int m = 0; m < count; ++m) smooth.row(m).array() -= smooth.row(m).mean();
  Eigen::HouseholderQR<Matrix> qr(smooth.transpose());
  Matrix q = qr.householderQ() * Matrix::Identity(n_samples, count);
  const Matrix r = qr.matrixQR().topRows(count).triangularView<Eigen::Upper>();
  for (int m = 0; m < count; ++m) {
    if (std::abs(r(m, m)) < 1e-12)
      throw DegenerateSignalError("synthesize_references: degenerate noise draw");
    if (r(m, m) < 0) q.col(m) = -q.col(m);
  }

  Matrix gram = Matrix::Constant(count, count, pairwise_corr);
  gram.diagonal().setOnes();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success)
    throw ConfigError("synthesize_references: correlation target is not positive definite");
  const Matrix mix = llt.matrixL();

  // Rows of q^T have unit Euclidean norm; scale to unit sample variance.
  Matrix refs = std::sqrt(static_cast<double>(n_samples)) * (mix * q.transpose());
  return ReferenceSet(std::move(refs), true);
}

std::vector<Matrix> build_sources(const std::vector<Matrix>& latents, const ReferenceSet& refs,
                                  const std::vector<double>& phi, SourceForm form) {
  const int n_sources = static_cast<int>(latents.size());
  if (refs.num_references() < n_sources)
    throw DimensionError("build_sources: need one reference per source");
  if (static_cast<int>(phi.size()) != n_sources)
    throw DimensionError("build_sources: phi size mismatch");

  std::vector<Matrix> sources;
  sources.reserve(n_sources);
  for (int n = 0; n < n_sources; ++n) {
    const Matrix& z = latents[n];
    if (z.cols() != refs.num_samples())
      throw DimensionError("build_sources: latent/reference sample counts differ");
    double ref_weight = 0.0, latent_weight = 0.0;
    if (form == SourceForm::VarianceFraction) {
      ref_weight = std::sqrt(1.0 - phi[n]);
      latent_weight = std::sqrt(phi[n]);
    } else {
      ref_weight = std::sqrt(1.0 - phi[n] * phi[n]);
      latent_weight = phi[n];
    }
    Matrix s = latent_weight * z;
    s.rowwise() += ref_weight * refs.signals().row(n);
    sources.push_back(std::move(s));
  }
  return sources;
}

std::vector<Matrix> generate_mixing(int n_sources, int n_datasets, double cond_limit,
                                    std::uint64_t seed) {
  if (!(cond_limit > 1.0)) throw ConfigError("generate_mixing: cond_limit must exceed 1");
  Rng rng(seed);
  std::vector<Matrix> mixing;
  mixing.reserve(n_datasets);
  const int redraw_budget = 1000;
  for (int k = 0; k < n_datasets; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt < redraw_budget; ++attempt) {
      Matrix a = rng.gaussian_matrix(n_sources, n_sources);
      Eigen::JacobiSVD<Matrix> svd(a);
      const double smin = svd.singularValues().minCoeff();
      if (smin > 0.0 && svd.singularValues().maxCoeff() / smin < cond_limit) {
        mixing.push_back(std::move(a));
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NumericalFailureError("generate_mixing: redraw budget exhausted");
  }
  return mixing;
}

std::pair<DatasetCollection, GroundTruth> assemble_datasets(const std::vector<Matrix>& sources,
                                                            const std::vector<Matrix>& mixing) {
  const int n_sources = static_cast<int>(sources.size());
  const int n_datasets = static_cast<int>(mixing.size());
  if (n_sources < 1 || n_datasets < 1)
    throw DimensionError("assemble_datasets: empty sources or mixing");
  const long n_samples = sources[0].cols();
  for (const Matrix& s : sources)
    if (s.rows() != n_datasets || s.cols() != n_samples)
      throw DimensionError("assemble_datasets: source matrices must be K x V");

  std::vector<Matrix> observations;
  observations.reserve(n_datasets);
  for (int k = 0; k < n_datasets; ++k) {
    Matrix s_k(n_sources, n_samples);
    for (int n = 0; n < n_sources; ++n) s_k.row(n) = sources[n].row(k);
    observations.push_back(mixing[k] * s_k);
  }

  GroundTruth truth;
  truth.sources = sources;
  truth.mixing = mixing;
  return {DatasetCollection(std::move(observations), false), std::move(truth)};
}

std::pair<DatasetCollection, GroundTruth> generate_hybrid(const HybridConfig& config) {
  config.validate();
  const std::vector<Matrix> mixing = generate_mixing(
      config.n_sources, config.n_datasets, config.cond_limit, derive_seed(config.seed, "mixing"));
  return generate_hybrid(config, mixing);
}

std::pair<DatasetCollection, GroundTruth> generate_hybrid(const HybridConfig& config,
                                                          const std::vector<Matrix>& mixing) {
  config.validate();

  ReferenceSet refs = config.ref_file.empty()
                          ? synthesize_references(config.n_sources, config.n_samples,
                                                  config.synth.smoothing_window,
                                                  config.synth.pairwise_corr,
                                                  derive_seed(config.seed, "references"))
                          : ReferenceSet(load_matrix(config.ref_file), true);
  if (refs.num_references() < config.n_sources || refs.num_samples() != config.n_samples)
    throw DimensionError("generate_hybrid: reference file does not match the configuration");

  const Matrix sigma_z =
      build_sigma_z(config.n_sources, config.n_datasets, config.mu0, config.mu1);
  const std::vector<Matrix> latents =
      sample_latent(sigma_z, config.n_sources, config.n_datasets, config.n_samples,
                    derive_seed(config.seed, "latent"));
  const std::vector<Matrix> sources =
      build_sources(latents, refs, config.resolved_phi(), config.form);

  auto [data, truth] = assemble_datasets(sources, mixing);
  truth.references = refs.signals();
  return {std::move(data), std::move(truth)};
}

}  // namespace civa
