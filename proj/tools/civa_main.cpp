#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "civa/checks.hpp"
#include "civa/constraints.hpp"
#include "civa/core.hpp"
#include "civa/experiment.hpp"
#include "civa/hybrid.hpp"
#include "civa/matio.hpp"
#include "civa/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SolverOverrides {
  std::optional<double> eta0, tol, gamma, mu_max, lambda, rho;
  std::optional<int> max_iters;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--eta0", eta0, "initial step size");
    cmd->add_option("--tol", tol, "convergence tolerance");
    cmd->add_option("--max-iters", max_iters, "iteration cap");
    cmd->add_option("--gamma", gamma, "augmented Lagrangian penalty parameter");
    cmd->add_option("--mu-max", mu_max, "multiplier cut-off (ar-civa)");
    cmd->add_option("--lambda", lambda, "regularization weight (tf-civa)");
    cmd->add_option("--rho", rho, "fixed constraint threshold (civa-fixed)");
  }

  void apply(civa::AlgorithmSpec& spec) const {
    if (eta0) spec.solver.eta0 = *eta0;
    if (tol) spec.solver.tol = *tol;
    if (max_iters) spec.solver.max_iters = *max_iters;
    if (gamma) spec.constraint.gamma = *gamma;
    if (mu_max) spec.constraint.mu_max = *mu_max;
    if (lambda) spec.regularizer.lambda = *lambda;
    if (rho) spec.constraint.fixed_rho = *rho;
  }
};

int cmd_simulate(const civa::HybridConfig& hc, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto [data, truth] = civa::generate_hybrid(hc);

  json manifest;
  manifest["n_sources"] = hc.n_sources;
  manifest["n_datasets"] = hc.n_datasets;
  manifest["n_references"] = hc.n_references;
  manifest["n_samples"] = hc.n_samples;

  auto path_of = [&](const char* stem, int idx) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s%03d.ivamat", stem, idx);
    return (fs::path(out_dir) / name).string();
  };

  json data_files = json::array(), mixing_files = json::array(), source_files = json::array();
  for (int k = 0; k < hc.n_datasets; ++k) {
    const std::string p = path_of("data_k", k);
    civa::save_matrix_binary(p, data.dataset(k));
    data_files.push_back(p);
  }
  for (int k = 0; k < hc.n_datasets; ++k) {
    const std::string p = path_of("mixing_k", k);
    civa::save_matrix_binary(p, truth.mixing[k]);
    mixing_files.push_back(p);
  }
  for (int n = 0; n < hc.n_sources; ++n) {
    const std::string p = path_of("source_n", n);
    civa::save_matrix_binary(p, truth.sources[n]);
    source_files.push_back(p);
  }
  const std::string ref_path = (fs::path(out_dir) / "refs.ivamat").string();
  civa::save_matrix_binary(ref_path, truth.references);

  manifest["data_files"] = data_files;
  manifest["mixing_files"] = mixing_files;
  manifest["source_files"] = source_files;
  manifest["ref_file"] = ref_path;
  manifest["seed"] = hc.seed;

  std::ofstream mf(fs::path(out_dir) / "dataset.json");
  mf << manifest.dump(2) << '\n';
  std::printf("simulate: wrote %d datasets (N=%d, V=%ld) to %s\n", hc.n_datasets, hc.n_sources,
              hc.n_samples, out_dir.c_str());
  return 0;
}

std::vector<civa::Matrix> split_stacked(const civa::Matrix& stacked, const std::string& path) {
  const int n = static_cast<int>(stacked.cols());
  if (n < 1 || stacked.rows() % n != 0)
    throw civa::IoError("stacked matrix file has inconsistent shape: " + path);
  const int k_total = static_cast<int>(stacked.rows() / n);
  std::vector<civa::Matrix> mats;
  mats.reserve(k_total);
  for (int k = 0; k < k_total; ++k) mats.push_back(stacked.middleRows(k * n, n));
  return mats;
}

/// One stacked (K*N x N) file or a list of per-dataset square files.
std::vector<civa::Matrix> load_square_set(const std::vector<std::string>& paths) {
  if (paths.size() == 1) return split_stacked(civa::load_matrix(paths[0]), paths[0]);
  std::vector<civa::Matrix> mats;
  mats.reserve(paths.size());
  for (const std::string& p : paths) mats.push_back(civa::load_matrix(p));
  return mats;
}

civa::DemixingSet load_stacked_demixing(const std::string& path) {
  return civa::DemixingSet(split_stacked(civa::load_matrix(path), path));
}

std::vector<civa::Matrix> load_matrix_list(const std::vector<std::string>& paths) {
  std::vector<civa::Matrix> out;
  out.reserve(paths.size());
  for (const std::string& p : paths) out.push_back(civa::load_matrix(p));
  return out;
}

int cmd_run(const std::string& manifest_path, const std::vector<std::string>& data_paths,
            const std::string& refs_path, const std::string& variant_name,
            std::uint64_t seed, const std::string& out_dir, int m_override,
            const SolverOverrides& overrides) {
  std::vector<std::string> files = data_paths;
  std::string ref_file = refs_path;
  int m = m_override;
  std::vector<std::string> mixing_files, source_files;

  if (!manifest_path.empty()) {
    std::ifstream in(manifest_path);
    if (!in) throw civa::IoError("cannot open manifest " + manifest_path);
    json manifest = json::parse(in);
    files = manifest.at("data_files").get<std::vector<std::string>>();
    ref_file = manifest.value("ref_file", ref_file);
    if (m <= 0) m = manifest.value("n_references", 0);
    if (manifest.contains("mixing_files"))
      mixing_files = manifest.at("mixing_files").get<std::vector<std::string>>();
    if (manifest.contains("source_files"))
      source_files = manifest.at("source_files").get<std::vector<std::string>>();
  }
  if (files.empty()) throw civa::ConfigError("run: no data files given");

  const civa::Variant variant = civa::variant_from_name(variant_name);
  civa::DatasetCollection raw(load_matrix_list(files), false);
  civa::DatasetCollection data = civa::center_datasets(raw);

  civa::AlgorithmSpec spec = civa::AlgorithmSpec::for_variant(variant);
  overrides.apply(spec);
  spec.solver.seed = seed;

  civa::RunReport rep;
  if (variant == civa::Variant::IvaG) {
    rep = civa::run_iva_g_v(data, spec.solver);
  } else {
    if (ref_file.empty()) throw civa::ConfigError("run: constrained variant needs --refs");
    civa::ReferenceSet refs(civa::load_matrix(ref_file), true);
    if (m > 0 && m < refs.num_references()) refs = refs.truncated(m);
    rep = civa::run_constrained(variant, data, refs, spec.solver, spec.constraint,
                                spec.regularizer);
  }
  rep.config_echo = civa::algorithm_spec_json(spec);

  // Ground truth metrics when the manifest carries them.
  if (!mixing_files.empty()) {
    civa::GroundTruth truth;
    truth.mixing = load_matrix_list(mixing_files);
    rep.joint_isi = civa::joint_isi(*rep.demixing, truth.mixing);
    if (!source_files.empty()) {
      truth.sources = load_matrix_list(source_files);
      const int sf_m = m > 0 ? m : static_cast<int>(truth.sources.size());
      if (variant == civa::Variant::IvaG) {
        const std::vector<int> perm = civa::match_components(truth, *rep.demixing, data);
        rep.similarity_factor = civa::similarity_factor(truth, *rep.demixing, data, sf_m, &perm);
        rep.sf_used_matching = true;
      } else {
        rep.similarity_factor = civa::similarity_factor(truth, *rep.demixing, data, sf_m);
      }
    }
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const civa::DemixingSet& w = *rep.demixing;
    civa::Matrix stacked(static_cast<Eigen::Index>(w.num_datasets()) * w.num_sources(),
                         w.num_sources());
    for (int k = 0; k < w.num_datasets(); ++k)
      stacked.middleRows(static_cast<Eigen::Index>(k) * w.num_sources(), w.num_sources()) =
          w.mat(k);
    rep.w_path = (fs::path(out_dir) / "W.ivamat").string();
    civa::save_matrix_binary(rep.w_path, stacked);
    const civa::SCVCovarianceSet& s = *rep.scv_covariances;
    const int kk = static_cast<int>(s.sigma[0].rows());
    civa::Matrix sig(static_cast<Eigen::Index>(s.sigma.size()) * kk, kk);
    for (size_t n = 0; n < s.sigma.size(); ++n)
      sig.middleRows(static_cast<Eigen::Index>(n) * kk, kk) = s.sigma[n];
    rep.sigma_path = (fs::path(out_dir) / "Sigma.ivamat").string();
    civa::save_matrix_binary(rep.sigma_path, sig);
    civa::save_report((fs::path(out_dir) / "run.report").string(), rep);
  }

  std::printf("%s: %s after %d sweeps, objective %.6f", rep.variant.c_str(),
              rep.converged ? "converged" : "stopped", rep.iterations, rep.final_objective);
  if (std::isfinite(rep.joint_isi)) std::printf(", joint-ISI %.4f", rep.joint_isi);
  if (std::isfinite(rep.similarity_factor)) std::printf(", SF %.4f", rep.similarity_factor);
  std::printf(" (%.2fs)\n", rep.total_seconds);
  return 0;
}

int cmd_metrics(const std::vector<std::string>& w_paths, const std::vector<std::string>& a_paths,
                const std::vector<std::string>& run_w_paths) {
  if (!run_w_paths.empty()) {
    std::vector<civa::DemixingSet> runs;
    runs.reserve(run_w_paths.size());
    for (const std::string& p : run_w_paths) runs.push_back(load_stacked_demixing(p));
    const std::vector<double> cji = civa::cross_joint_isi(runs);
    for (size_t i = 0; i < cji.size(); ++i)
      std::printf("cross_joint_isi[%zu] = %.6f  (%s)\n", i, cji[i], run_w_paths[i].c_str());
    return 0;
  }
  if (w_paths.empty() || a_paths.empty())
    throw civa::ConfigError("metrics: need --w and --a, or at least two --run-w");
  const civa::DemixingSet w(load_square_set(w_paths));
  const std::vector<civa::Matrix> mixing = load_square_set(a_paths);
  std::printf("joint_isi = %.6f\n", civa::joint_isi(w, mixing));
  return 0;
}

int cmd_verify(const std::string& config_path, std::uint64_t seed, long samples) {
  if (!config_path.empty()) {
    const civa::ExperimentConfig config = civa::load_config_file(config_path);
    config.validate();  // a bad config fails here, before any check runs
    std::printf("config %s validated\n", config_path.c_str());
  }
  civa::VerifyOptions options;
  options.seed = seed;
  options.generator_samples = samples;
  const std::vector<civa::CheckResult> results = civa::run_verification(options);
  bool all_pass = true;
  for (const civa::CheckResult& r : results) {
    std::printf("[%s] %-55s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("%s\n", all_pass ? "verify: all checks passed" : "verify: FAILURES detected");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"civa — constrained independent vector analysis toolkit"};
  app.require_subcommand(1);

  // simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "generate a hybrid fMRI-like dataset");
  civa::HybridConfig hc;
  hc.n_sources = 10;
  hc.n_datasets = 10;
  hc.n_references = 10;
  hc.n_samples = 10000;
  std::string sim_out = "dataset";
  simulate->add_option("--out", sim_out, "output directory");
  simulate->add_option("--n", hc.n_sources, "number of sources");
  simulate->add_option("--k", hc.n_datasets, "number of datasets");
  simulate->add_option("--m", hc.n_references, "number of references exposed to solvers");
  simulate->add_option("--v", hc.n_samples, "number of samples");
  simulate->add_option("--mu0", hc.mu0, "cross-SCV latent correlation");
  simulate->add_option("--mu1", hc.mu1, "within-SCV latent correlation");
  simulate->add_option("--seed", hc.seed, "generator seed");
  simulate->add_option("--cond-limit", hc.cond_limit, "mixing condition-number limit");
  simulate->add_option("--window", hc.synth.smoothing_window, "reference smoothing window");
  simulate->add_option("--pairwise-corr", hc.synth.pairwise_corr, "reference pairwise correlation");
  simulate->add_option("--ref-file", hc.ref_file, "load references from file instead");
  std::string form = "variance_fraction";
  simulate->add_option("--form", form, "source form: variance_fraction | amplitude");

  // run ----------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "run one algorithm on given data");
  std::string run_manifest, run_refs, run_variant = "iva-g-v", run_out;
  std::vector<std::string> run_data;
  std::uint64_t run_seed = 0;
  int run_m = 0;
  SolverOverrides overrides;
  run->add_option("--manifest", run_manifest, "dataset manifest from `simulate`");
  run->add_option("--data", run_data, "data matrix files (one per dataset)")->delimiter(',');
  run->add_option("--refs", run_refs, "reference matrix file (M x V)");
  run->add_option("--variant", run_variant,
                  "iva-g-v | civa-fixed | pt-civa | ar-civa | tf-civa");
  run->add_option("--seed", run_seed, "initialization seed");
  run->add_option("--m", run_m, "number of references to use");
  run->add_option("--out", run_out, "output directory for W/Sigma/report");
  overrides.add_flags(run);

  // sweep ---------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "run a configured experiment sweep");
  std::string sweep_config, sweep_out;
  std::optional<std::uint64_t> sweep_seed;
  std::optional<int> sweep_threads;
  sweep->add_option("--config", sweep_config, "experiment config (JSON or TOML)")->required();
  sweep->add_option("--out", sweep_out, "override output directory");
  sweep->add_option("--seed", sweep_seed, "override base seed");
  sweep->add_option("--threads", sweep_threads, "worker thread limit");

  // metrics --------------------------------------------------------------------
  auto* metrics = app.add_subcommand("metrics", "compute metrics from persisted matrices");
  std::vector<std::string> met_w, met_a, met_runs;
  metrics->add_option("--w", met_w, "demixing matrices: one stacked K*N x N file or K files")
      ->delimiter(',');
  metrics->add_option("--a", met_a, "mixing matrices: one stacked file or K files")
      ->delimiter(',');
  metrics->add_option("--run-w", met_runs, "stacked demixing files of repeated runs");

  // verify -----------------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "run the fast invariant suite");
  std::string verify_config;
  std::uint64_t verify_seed = 7;
  long verify_samples = 20000;
  verify->add_option("--config", verify_config, "experiment config to validate first");
  verify->add_option("--seed", verify_seed, "suite seed");
  verify->add_option("--samples", verify_samples, "sample count for generator statistics");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      hc.form = form == "amplitude" ? civa::SourceForm::Amplitude
                                    : civa::SourceForm::VarianceFraction;
      hc.validate();
      return cmd_simulate(hc, sim_out);
    }
    if (run->parsed())
      return cmd_run(run_manifest, run_data, run_refs, run_variant, run_seed, run_out, run_m,
                     overrides);
    if (sweep->parsed()) {
      civa::ExperimentConfig config = civa::load_config_file(sweep_config);
      if (!sweep_out.empty()) config.output_dir = sweep_out;
      if (sweep_seed) config.base_seed = *sweep_seed;
      if (sweep_threads) config.threads = *sweep_threads;
      config.validate();
      const civa::ExperimentResult result = civa::run_experiment(config);
      int failures = 0;
      for (const civa::ExperimentRun& r : result.runs)
        if (r.report.failed) ++failures;
      std::printf("sweep: %zu runs (%d failed), results in %s\n", result.runs.size(), failures,
                  config.output_dir.empty() ? "<memory>" : config.output_dir.c_str());
      return failures == static_cast<int>(result.runs.size()) && !result.runs.empty() ? 1 : 0;
    }
    if (metrics->parsed()) return cmd_metrics(met_w, met_a, met_runs);
    if (verify->parsed()) return cmd_verify(verify_config, verify_seed, verify_samples);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
