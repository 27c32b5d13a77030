#include <fstream>
#include <sstream>

#include <json.hpp>

#include "civa/experiment.hpp"

namespace civa {

namespace {

using nlohmann::json;

// --- TOML subset ------------------------------------------------------------
// Enough TOML for experiment configs: comments, [tables], [[arrays of
// tables]], and key = string | number | bool | flat array. Converted into
// the same JSON document the native path consumes.

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

json parse_toml_scalar(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw ConfigError("toml: empty value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ConfigError("toml: unterminated string");
    return text.substr(1, text.size() - 2);
  }
  if (text == "true") return true;
  if (text == "false") return false;
  try {
    if (text.find_first_of(".eE") == std::string::npos &&
        text.find("inf") == std::string::npos && text.find("nan") == std::string::npos) {
      size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used == text.size()) return v;
    }
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("toml: cannot parse value '" + text + "'");
}

json parse_toml_value(const std::string& raw) {
  const std::string text = trim(raw);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ConfigError("toml: unterminated array");
    json arr = json::array();
    std::string body = text.substr(1, text.size() - 2);
    std::string item;
    std::stringstream ss(body);
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      arr.push_back(parse_toml_scalar(item));
    }
    return arr;
  }
  return parse_toml_scalar(text);
}

json* resolve_path(json& root, const std::string& dotted) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    part = trim(part);
    if (part.empty()) throw ConfigError("toml: bad table name");
    node = &(*node)[part];
  }
  return node;
}

json toml_to_json(const std::string& text) {
  json root = json::object();
  json* current = &root;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.size() >= 4 && line.substr(0, 2) == "[[" &&
        line.substr(line.size() - 2) == "]]") {
      json* arr = resolve_path(root, line.substr(2, line.size() - 4));
      if (!arr->is_array()) *arr = json::array();
      arr->push_back(json::object());
      current = &arr->back();
      continue;
    }
    if (line.front() == '[' && line.back() == ']') {
      current = resolve_path(root, line.substr(1, line.size() - 2));
      if (!current->is_object()) *current = json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("toml: expected key = value at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("toml: empty key at line " + std::to_string(lineno));
    (*current)[key] = parse_toml_value(line.substr(eq + 1));
  }
  return root;
}

// --- JSON -> config ---------------------------------------------------------

SourceForm form_from_name(const std::string& name) {
  if (name == "variance_fraction") return SourceForm::VarianceFraction;
  if (name == "amplitude") return SourceForm::Amplitude;
  throw ConfigError("config: unknown source form '" + name + "'");
}

std::string form_name(SourceForm f) {
  return f == SourceForm::VarianceFraction ? "variance_fraction" : "amplitude";
}

HybridConfig hybrid_from_json(const json& j) {
  HybridConfig hc;
  hc.n_sources = j.value("n_sources", hc.n_sources);
  hc.n_datasets = j.value("n_datasets", hc.n_datasets);
  hc.n_references = j.value("n_references", hc.n_sources);
  hc.n_samples = j.value("n_samples", hc.n_samples);
  hc.mu0 = j.value("mu0", hc.mu0);
  hc.mu1 = j.value("mu1", hc.mu1);
  if (j.contains("phi")) hc.phi = j.at("phi").get<std::vector<double>>();
  if (j.contains("form")) hc.form = form_from_name(j.at("form").get<std::string>());
  hc.ref_file = j.value("ref_file", std::string());
  hc.synth.smoothing_window = j.value("smoothing_window", hc.synth.smoothing_window);
  hc.synth.pairwise_corr = j.value("pairwise_corr", hc.synth.pairwise_corr);
  hc.cond_limit = j.value("cond_limit", hc.cond_limit);
  hc.seed = j.value("seed", hc.seed);
  return hc;
}

json hybrid_to_json(const HybridConfig& hc) {
  json j{{"n_sources", hc.n_sources},       {"n_datasets", hc.n_datasets},
         {"n_references", hc.n_references}, {"n_samples", hc.n_samples},
         {"mu0", hc.mu0},                   {"mu1", hc.mu1},
         {"form", form_name(hc.form)},      {"ref_file", hc.ref_file},
         {"smoothing_window", hc.synth.smoothing_window},
         {"pairwise_corr", hc.synth.pairwise_corr},
         {"cond_limit", hc.cond_limit},     {"seed", hc.seed}};
  if (!hc.phi.empty()) j["phi"] = hc.phi;
  return j;
}

AlgorithmSpec algorithm_from_json(const json& j) {
  const Variant v = variant_from_name(j.at("variant").get<std::string>());
  AlgorithmSpec spec = AlgorithmSpec::for_variant(v);
  spec.solver.eta0 = j.value("eta0", spec.solver.eta0);
  spec.solver.decay = j.value("decay", spec.solver.decay);
  spec.solver.tol = j.value("tol", spec.solver.tol);
  spec.solver.max_iters = j.value("max_iters", spec.solver.max_iters);
  spec.solver.ridge_rel = j.value("ridge_rel", spec.solver.ridge_rel);
  spec.constraint.gamma = j.value("gamma", spec.constraint.gamma);
  spec.constraint.mu_max = j.value("mu_max", spec.constraint.mu_max);
  spec.constraint.fixed_rho = j.value("rho", spec.constraint.fixed_rho);
  spec.constraint.initial_mu = j.value("initial_mu", spec.constraint.initial_mu);
  if (j.contains("thresholds"))
    spec.constraint.thresholds = j.at("thresholds").get<std::vector<double>>();
  if (j.contains("initial_scheme")) {
    const std::string s = j.at("initial_scheme").get<std::string>();
    if (s == "argmin")
      spec.constraint.initial_scheme = SelectionScheme::ArgMin;
    else if (s == "argmax")
      spec.constraint.initial_scheme = SelectionScheme::ArgMax;
    else
      throw ConfigError("config: unknown initial_scheme '" + s + "'");
  }
  spec.regularizer.lambda = j.value("lambda", spec.regularizer.lambda);
  return spec;
}

json algorithm_to_json(const AlgorithmSpec& a) {
  json j{{"variant", a.tag()},
         {"eta0", a.solver.eta0},
         {"decay", a.solver.decay},
         {"tol", a.solver.tol},
         {"max_iters", a.solver.max_iters},
         {"ridge_rel", a.solver.ridge_rel}};
  switch (a.variant) {
    case Variant::IvaG:
      break;
    case Variant::CivaFixed:
      j["gamma"] = a.constraint.gamma;
      j["rho"] = a.constraint.fixed_rho;
      break;
    case Variant::PtCiva:
      j["gamma"] = a.constraint.gamma;
      j["thresholds"] = a.constraint.thresholds;
      break;
    case Variant::ArCiva:
      j["gamma"] = a.constraint.gamma;
      j["mu_max"] = a.constraint.mu_max;
      j["thresholds"] = a.constraint.thresholds;
      j["initial_scheme"] =
          a.constraint.initial_scheme == SelectionScheme::ArgMin ? "argmin" : "argmax";
      j["initial_mu"] = a.constraint.initial_mu;
      break;
    case Variant::TfCiva:
      j["lambda"] = a.regularizer.lambda;
      break;
  }
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig config;
  if (j.contains("hybrid")) config.hybrid = hybrid_from_json(j.at("hybrid"));
  if (!j.contains("algorithms")) throw ConfigError("config: missing 'algorithms'");
  for (const json& a : j.at("algorithms")) config.algorithms.push_back(algorithm_from_json(a));
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    const std::string axis = s.value("axis", std::string("none"));
    if (axis == "none")
      config.axis = SweepAxis::None;
    else if (axis == "K")
      config.axis = SweepAxis::K;
    else if (axis == "M")
      config.axis = SweepAxis::M;
    else
      throw ConfigError("config: unknown sweep axis '" + axis + "'");
    if (s.contains("values")) config.values = s.at("values").get<std::vector<long>>();
  }
  config.runs_per_point = j.value("runs_per_point", config.runs_per_point);
  config.base_seed = j.value("base_seed", config.base_seed);
  config.output_dir = j.value("output_dir", config.output_dir);
  config.shared_init = j.value("shared_init", config.shared_init);
  if (j.contains("protocol")) {
    const std::string p = j.at("protocol").get<std::string>();
    if (p == "auto")
      config.protocol = DataProtocol::Auto;
    else if (p == "fixed_sources")
      config.protocol = DataProtocol::FixedSources;
    else if (p == "fresh_sources")
      config.protocol = DataProtocol::FreshSources;
    else
      throw ConfigError("config: unknown protocol '" + p + "'");
  }
  config.threads = j.value("threads", config.threads);
  config.omit_timing = j.value("omit_timing", config.omit_timing);
  config.persist_matrices = j.value("persist_matrices", config.persist_matrices);
  config.write_reports = j.value("write_reports", config.write_reports);
  return config;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_to_json_text(const ExperimentConfig& config) {
  json j;
  j["hybrid"] = hybrid_to_json(config.hybrid);
  j["algorithms"] = json::array();
  for (const AlgorithmSpec& a : config.algorithms) j["algorithms"].push_back(algorithm_to_json(a));
  json sweep;
  sweep["axis"] = config.axis == SweepAxis::None ? "none" : (config.axis == SweepAxis::K ? "K" : "M");
  sweep["values"] = config.values;
  j["sweep"] = std::move(sweep);
  j["runs_per_point"] = config.runs_per_point;
  j["base_seed"] = config.base_seed;
  j["output_dir"] = config.output_dir;
  j["shared_init"] = config.shared_init;
  j["protocol"] = config.protocol == DataProtocol::Auto
                      ? "auto"
                      : (config.protocol == DataProtocol::FixedSources ? "fixed_sources"
                                                                       : "fresh_sources");
  j["threads"] = config.threads;
  j["omit_timing"] = config.omit_timing;
  j["persist_matrices"] = config.persist_matrices;
  j["write_reports"] = config.write_reports;
  return j.dump(2);
}

std::string algorithm_spec_json(const AlgorithmSpec& spec) {
  return algorithm_to_json(spec).dump();
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".toml") == 0)
    return config_from_json(toml_to_json(text));
  return config_from_json_text(text);
}

}  // namespace civa
