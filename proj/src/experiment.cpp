#include "civa/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <thread>

#include "civa/core.hpp"
#include "civa/matio.hpp"
#include "civa/metrics.hpp"
#include "civa/rng.hpp"

namespace civa {

namespace fs = std::filesystem;

AlgorithmSpec AlgorithmSpec::for_variant(Variant v) {
  AlgorithmSpec spec;
  spec.variant = v;
  switch (v) {
    case Variant::IvaG:
      break;
    case Variant::CivaFixed:
      spec.constraint = ConstraintSettings::fixed_defaults();
      break;
    case Variant::PtCiva:
      spec.constraint = ConstraintSettings::pt_defaults();
      break;
    case Variant::ArCiva:
      spec.constraint = ConstraintSettings::ar_defaults();
      break;
    case Variant::TfCiva:
      spec.regularizer = RegularizerSettings{};
      break;
  }
  return spec;
}

void ExperimentConfig::validate() const {
  hybrid.validate();
  if (algorithms.empty()) throw ConfigError("experiment: no algorithms configured");
  for (const AlgorithmSpec& a : algorithms) {
    a.solver.validate();
    if (a.variant == Variant::CivaFixed || a.variant == Variant::PtCiva ||
        a.variant == Variant::ArCiva)
      a.constraint.validate();
    if (a.variant == Variant::TfCiva) a.regularizer.validate();
  }
  if (runs_per_point < 1) throw ConfigError("experiment: runs_per_point must be >= 1");
  if (axis != SweepAxis::None) {
    if (values.empty()) throw ConfigError("experiment: sweep value list is empty");
    for (long v : values) {
      if (axis == SweepAxis::K && v < 1) throw ConfigError("experiment: K values must be >= 1");
      if (axis == SweepAxis::M && (v < 1 || v > hybrid.n_sources))
        throw ConfigError("experiment: M values must lie in [1, N]");
    }
  }
  if (threads < 0) throw ConfigError("experiment: threads must be >= 0");
}

DataProtocol ExperimentConfig::resolved_protocol() const {
  if (protocol != DataProtocol::Auto) return protocol;
  return axis == SweepAxis::M ? DataProtocol::FreshSources : DataProtocol::FixedSources;
}

namespace {

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None: return "none";
    case SweepAxis::K: return "K";
    case SweepAxis::M: return "M";
  }
  return "none";
}

// The sweep value enters a seed tag only when it changes the data itself
// (the K axis). M only changes what the solver is shown, so data and
// initialization are deliberately identical across M points.
std::string value_tag(const ExperimentConfig& config, long value) {
  if (config.axis == SweepAxis::K) return "|K=" + std::to_string(value);
  return "";
}

std::string format_g(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct PreparedPoint {
  std::shared_ptr<DatasetCollection> data;   // centered, original coordinates
  std::shared_ptr<DatasetCollection> white;  // whitened view the solvers see
  std::shared_ptr<std::vector<Matrix>> transforms;
  std::shared_ptr<CrossCovarianceCache> cache;
  std::shared_ptr<ReferenceSet> refs;  // truncated to the point's M
  std::shared_ptr<ProjectedReferences> proj;
  std::shared_ptr<GroundTruth> truth;
  double cache_seconds = 0.0;
};

PreparedPoint prepare_point_data(const HybridConfig& hc, const std::vector<Matrix>& mixing,
                                 int num_refs_for_solver) {
  auto [raw, truth] = generate_hybrid(hc, mixing);
  PreparedPoint p;
  const auto t0 = std::chrono::steady_clock::now();
  p.data = std::make_shared<DatasetCollection>(center_datasets(raw));
  WhitenedData white = whiten_datasets(*p.data);
  p.white = std::make_shared<DatasetCollection>(std::move(white.data));
  p.transforms = std::make_shared<std::vector<Matrix>>(std::move(white.transforms));
  p.cache = std::make_shared<CrossCovarianceCache>(build_cross_covariance_cache(*p.white));
  p.refs = std::make_shared<ReferenceSet>(
      ReferenceSet(truth.references, true).truncated(num_refs_for_solver));
  p.proj = std::make_shared<ProjectedReferences>(project_references(*p.refs, *p.white));
  p.cache_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  p.truth = std::make_shared<GroundTruth>(std::move(truth));
  return p;
}

void run_parallel(int threads, int job_count, const std::function<void(int)>& job) {
  if (threads <= 1 || job_count <= 1) {
    for (int i = 0; i < job_count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(threads, job_count);
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < job_count; i = next.fetch_add(1)) job(i);
    });
  for (std::thread& t : pool) t.join();
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::uint64_t experiment_mixing_seed(const ExperimentConfig& config, long value) {
  return derive_seed(config.base_seed, "mixing" + value_tag(config, value));
}

std::uint64_t experiment_data_seed(const ExperimentConfig& config, long value, int run_index) {
  std::string tag = "data" + value_tag(config, value);
  if (config.resolved_protocol() == DataProtocol::FreshSources)
    tag += "|run=" + std::to_string(run_index);
  return derive_seed(config.base_seed, tag);
}

std::uint64_t experiment_init_seed(const ExperimentConfig& config, long value, int run_index,
                                   const std::string& variant_tag) {
  std::string tag = "init" + value_tag(config, value) + "|run=" + std::to_string(run_index);
  if (!config.shared_init) tag += "|variant=" + variant_tag;
  return derive_seed(config.base_seed, tag);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const DataProtocol protocol = config.resolved_protocol();
  const int threads =
      config.threads > 0
          ? config.threads
          : std::max(1, std::min(8, static_cast<int>(std::thread::hardware_concurrency())));

  if (!config.output_dir.empty()) fs::create_directories(config.output_dir);

  ExperimentResult result;
  result.axis = axis_name(config.axis);
  result.point_values = config.axis == SweepAxis::None ? std::vector<long>{0} : config.values;
  for (const AlgorithmSpec& a : config.algorithms) result.variant_order.push_back(a.tag());

  const int algo_count = static_cast<int>(config.algorithms.size());
  const int runs = config.runs_per_point;

  for (long value : result.point_values) {
    HybridConfig hc = config.hybrid;
    if (config.axis == SweepAxis::K) hc.n_datasets = static_cast<int>(value);
    const int point_m =
        config.axis == SweepAxis::M ? static_cast<int>(value) : config.hybrid.n_references;
    hc.n_references = point_m;

    const std::vector<Matrix> mixing = generate_mixing(
        hc.n_sources, hc.n_datasets, hc.cond_limit, experiment_mixing_seed(config, value));

    // One dataset per point under FixedSources, one per run otherwise.
    std::vector<PreparedPoint> prepared;
    if (protocol == DataProtocol::FixedSources) {
      hc.seed = experiment_data_seed(config, value, 0);
      prepared.push_back(prepare_point_data(hc, mixing, point_m));
    } else {
      prepared.reserve(runs);
      for (int r = 0; r < runs; ++r) {
        hc.seed = experiment_data_seed(config, value, r);
        prepared.push_back(prepare_point_data(hc, mixing, point_m));
      }
    }

    const int job_count = runs * algo_count;
    std::vector<ExperimentRun> slots(job_count);
    run_parallel(threads, job_count, [&](int idx) {
      const int r = idx / algo_count;
      const int a = idx % algo_count;
      const AlgorithmSpec& algo = config.algorithms[a];
      const PreparedPoint& point = prepared[protocol == DataProtocol::FixedSources ? 0 : r];

      ExperimentRun run;
      run.axis = result.axis;
      run.value = value;
      run.run_index = r;

      SolverSettings settings = algo.solver;
      settings.seed = experiment_init_seed(config, value, r, algo.tag());
      try {
        RunReport rep =
            algo.variant == Variant::IvaG
                ? run_iva_g_v(*point.white, *point.cache, settings)
                : run_constrained(algo.variant, *point.white, *point.cache, *point.refs,
                                  *point.proj, settings, algo.constraint, algo.regularizer);
        rep.cache_seconds = point.cache_seconds;
        rep.total_seconds = rep.solve_seconds + point.cache_seconds;
        rep.config_echo = algorithm_spec_json(algo);
        rep.demixing = compose_demixing(*rep.demixing, *point.transforms,
                                        rep.scv_covariances ? &*rep.scv_covariances : nullptr);

        rep.joint_isi = joint_isi(*rep.demixing, point.truth->mixing);
        if (algo.variant == Variant::IvaG) {
          const std::vector<int> perm =
              match_components(*point.truth, *rep.demixing, *point.data);
          rep.similarity_factor =
              similarity_factor(*point.truth, *rep.demixing, *point.data, point_m, &perm);
          rep.sf_used_matching = true;
        } else {
          rep.similarity_factor =
              similarity_factor(*point.truth, *rep.demixing, *point.data, point_m);
        }
        run.report = std::move(rep);
      } catch (const std::exception& e) {
        run.report.variant = algo.tag();
        run.report.seed = settings.seed;
        run.report.failed = true;
        run.report.error = e.what();
      }
      slots[idx] = std::move(run);
    });

    // Consistency across the point's runs, one value per run.
    for (int a = 0; a < algo_count; ++a) {
      std::vector<DemixingSet> sets;
      std::vector<int> owners;
      for (int r = 0; r < runs; ++r) {
        const ExperimentRun& run = slots[r * algo_count + a];
        if (!run.report.failed && run.report.demixing) {
          sets.push_back(*run.report.demixing);
          owners.push_back(r * algo_count + a);
        }
      }
      if (!sets.empty()) {
        const std::vector<double> xs = cross_joint_isi(sets);
        for (size_t i = 0; i < owners.size(); ++i)
          slots[owners[i]].report.cross_joint_isi = xs[i];
      }
    }

    // Persist in deterministic order.
    for (int r = 0; r < runs; ++r)
      for (int a = 0; a < algo_count; ++a) {
        ExperimentRun& run = slots[r * algo_count + a];
        if (!config.output_dir.empty() && !run.report.failed) {
          char stem[128];
          std::snprintf(stem, sizeof(stem), "%s%ld_run%03d_%s",
                        result.axis == "none" ? "single" : result.axis.c_str(),
                        result.axis == "none" ? 0L : value, r,
                        config.algorithms[a].tag().c_str());
          const fs::path base = fs::path(config.output_dir) / stem;
          if (config.persist_matrices && run.report.demixing) {
            const DemixingSet& w = *run.report.demixing;
            Matrix stacked(static_cast<Eigen::Index>(w.num_datasets()) * w.num_sources(),
                           w.num_sources());
            for (int k = 0; k < w.num_datasets(); ++k)
              stacked.middleRows(static_cast<Eigen::Index>(k) * w.num_sources(),
                                 w.num_sources()) = w.mat(k);
            run.report.w_path = (base.string() + ".w.ivamat");
            save_matrix_binary(run.report.w_path, stacked);
          }
          if (config.persist_matrices && run.report.scv_covariances) {
            const SCVCovarianceSet& s = *run.report.scv_covariances;
            if (!s.sigma.empty()) {
              const int kk = static_cast<int>(s.sigma[0].rows());
              Matrix stacked(static_cast<Eigen::Index>(s.sigma.size()) * kk, kk);
              for (size_t n = 0; n < s.sigma.size(); ++n)
                stacked.middleRows(static_cast<Eigen::Index>(n) * kk, kk) = s.sigma[n];
              run.report.sigma_path = (base.string() + ".sigma.ivamat");
              save_matrix_binary(run.report.sigma_path, stacked);
            }
          }
          if (config.write_reports) save_report(base.string() + ".report", run.report);
        }
        result.runs.push_back(std::move(run));
      }
  }

  // Aggregates per (point, variant) over non-failed runs.
  for (long value : result.point_values)
    for (const std::string& tag : result.variant_order) {
      AggregateRow row;
      row.axis = result.axis;
      row.value = value;
      row.variant = tag;
      std::vector<double> ji, cji, sf, rt, it;
      for (const ExperimentRun& run : result.runs) {
        if (run.value != value || run.report.variant != tag || run.report.failed) continue;
        ji.push_back(run.report.joint_isi);
        cji.push_back(run.report.cross_joint_isi);
        sf.push_back(run.report.similarity_factor);
        rt.push_back(run.report.solve_seconds);
        it.push_back(run.report.iterations);
      }
      row.count = static_cast<int>(ji.size());
      if (row.count > 0) {
        auto mean = [](const std::vector<double>& xs) {
          double acc = 0.0;
          for (double x : xs) acc += x;
          return acc / static_cast<double>(xs.size());
        };
        row.mean_joint_isi = mean(ji);
        row.std_joint_isi = sample_std(ji, row.mean_joint_isi);
        row.mean_cross_joint_isi = mean(cji);
        row.std_cross_joint_isi = sample_std(cji, row.mean_cross_joint_isi);
        row.mean_sf = mean(sf);
        row.std_sf = sample_std(sf, row.mean_sf);
        row.mean_runtime = mean(rt);
        row.std_runtime = sample_std(rt, row.mean_runtime);
        row.mean_iters = mean(it);
      }
      result.aggregates.push_back(std::move(row));
    }

  if (!config.output_dir.empty()) {
    write_summary_csv((fs::path(config.output_dir) / "summary.csv").string(), result,
                      config.omit_timing);
    write_aggregate_csv((fs::path(config.output_dir) / "aggregate.csv").string(), result);
    emit_plot_data(config.output_dir, result);
  }
  return result;
}

std::string summary_csv_text(const ExperimentResult& result, bool omit_timing) {
  std::string out =
      "sweep_axis,sweep_value,variant,seed,joint_isi,cross_joint_isi,sf,iters,runtime_s,"
      "converged\n";
  for (const ExperimentRun& run : result.runs) {
    const RunReport& r = run.report;
    out += run.axis + ',' + std::to_string(run.value) + ',' + r.variant + ',' +
           std::to_string(r.seed) + ',' + format_g(r.joint_isi) + ',' +
           format_g(r.cross_joint_isi) + ',' + format_g(r.similarity_factor) + ',' +
           std::to_string(r.iterations) + ',' +
           format_g(omit_timing ? 0.0 : r.solve_seconds) + ',' + (r.converged ? "1" : "0") +
           '\n';
  }
  return out;
}

void write_summary_csv(const std::string& path, const ExperimentResult& result,
                       bool omit_timing) {
  std::ofstream out(path);
  if (!out) throw IoError("summary csv: cannot open " + path);
  out << summary_csv_text(result, omit_timing);
  if (!out) throw IoError("summary csv: write failed for " + path);
}

void write_aggregate_csv(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("aggregate csv: cannot open " + path);
  out << "sweep_axis,sweep_value,variant,runs,joint_isi_mean,joint_isi_std,cross_joint_isi_mean,"
         "cross_joint_isi_std,sf_mean,sf_std,runtime_mean,runtime_std,iters_mean\n";
  for (const AggregateRow& a : result.aggregates) {
    out << a.axis << ',' << a.value << ',' << a.variant << ',' << a.count << ','
        << format_g(a.mean_joint_isi) << ',' << format_g(a.std_joint_isi) << ','
        << format_g(a.mean_cross_joint_isi) << ',' << format_g(a.std_cross_joint_isi) << ','
        << format_g(a.mean_sf) << ',' << format_g(a.std_sf) << ',' << format_g(a.mean_runtime)
        << ',' << format_g(a.std_runtime) << ',' << format_g(a.mean_iters) << '\n';
  }
  if (!out) throw IoError("aggregate csv: write failed for " + path);
}

void emit_plot_data(const std::string& dir, const ExperimentResult& result) {
  if (result.aggregates.empty()) throw ConfigError("emit_plot_data: empty summary");
  struct MetricCol {
    const char* file;
    double AggregateRow::* mean;
    double AggregateRow::* std;
  };
  const MetricCol metrics[] = {
      {"plot_joint_isi.dat", &AggregateRow::mean_joint_isi, &AggregateRow::std_joint_isi},
      {"plot_cross_joint_isi.dat", &AggregateRow::mean_cross_joint_isi,
       &AggregateRow::std_cross_joint_isi},
      {"plot_sf.dat", &AggregateRow::mean_sf, &AggregateRow::std_sf},
      {"plot_runtime.dat", &AggregateRow::mean_runtime, &AggregateRow::std_runtime},
  };
  for (const MetricCol& metric : metrics) {
    std::ofstream out(fs::path(dir) / metric.file);
    if (!out) throw IoError("plot data: cannot open " + std::string(metric.file));
    out << "# sweep_value";
    for (const std::string& tag : result.variant_order) out << ' ' << tag << "_mean " << tag << "_std";
    out << '\n';
    for (long value : result.point_values) {
      out << value;
      for (const std::string& tag : result.variant_order) {
        for (const AggregateRow& a : result.aggregates)
          if (a.value == value && a.variant == tag) {
            out << ' ' << format_g(a.*(metric.mean)) << ' ' << format_g(a.*(metric.std));
            break;
          }
      }
      out << '\n';
    }
  }
}

}  // namespace civa
