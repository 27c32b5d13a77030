#include "civa/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace civa {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) return Matrix(0, 0);
  const auto rows = j.size();
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i)
    for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  return m;
}

json imatrix_to_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXi imatrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) return Eigen::MatrixXi(0, 0);
  const auto rows = j.size();
  const auto cols = j[0].size();
  Eigen::MatrixXi m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i)
    for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<int>();
  return m;
}

// NaN is not representable in JSON; encode as null.
json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double double_or_nan(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

std::string report_to_text(const RunReport& r) {
  std::ostringstream out;

  json meta{{"kind", "meta"},
            {"variant", r.variant},
            {"seed", r.seed},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"final_objective", finite_or_null(r.final_objective)},
            {"final_eta", r.final_eta},
            {"final_change", finite_or_null(r.final_change)},
            {"cache_seconds", r.cache_seconds},
            {"solve_seconds", r.solve_seconds},
            {"per_iteration_seconds", r.per_iteration_seconds},
            {"total_seconds", r.total_seconds},
            {"failed", r.failed},
            {"error", r.error},
            {"w_path", r.w_path},
            {"sigma_path", r.sigma_path},
            {"config_echo", r.config_echo}};
  out << meta.dump() << '\n';

  json trace{{"kind", "trace"},
             {"objective", r.objective_trace},
             {"decay_iterations", r.decay_iterations}};
  out << trace.dump() << '\n';

  json constraints{{"kind", "constraints"},
                   {"final_eps", matrix_to_json(r.final_eps)},
                   {"final_rho", matrix_to_json(r.final_rho)},
                   {"final_mu", matrix_to_json(r.final_mu)},
                   {"mean_mu_trace", r.mean_mu_trace},
                   {"mean_rho_trace", r.mean_rho_trace},
                   {"first_argmax_switch", imatrix_to_json(r.first_argmax_switch)},
                   {"first_mu_zero", imatrix_to_json(r.first_mu_zero)},
                   {"constraints_satisfied", r.constraints_satisfied},
                   {"eps_rank_violations", r.eps_rank_violations},
                   {"constraints_total", r.constraints_total}};
  json events = json::array();
  for (const SchemeSwitchEvent& e : r.switch_events)
    events.push_back({{"sweep", e.sweep},
                      {"component", e.component},
                      {"dataset", e.dataset},
                      {"to_argmax", e.to_argmax}});
  constraints["switch_events"] = std::move(events);
  out << constraints.dump() << '\n';

  json metrics{{"kind", "metrics"},
               {"joint_isi", finite_or_null(r.joint_isi)},
               {"cross_joint_isi", finite_or_null(r.cross_joint_isi)},
               {"similarity_factor", finite_or_null(r.similarity_factor)},
               {"sf_used_matching", r.sf_used_matching}};
  out << metrics.dump() << '\n';

  return out.str();
}

RunReport report_from_text(const std::string& text) {
  RunReport r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "meta") {
      r.variant = j.at("variant").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.iterations = j.at("iterations").get<int>();
      r.converged = j.at("converged").get<bool>();
      r.final_objective = double_or_nan(j.at("final_objective"));
      r.final_eta = j.at("final_eta").get<double>();
      r.final_change = double_or_nan(j.at("final_change"));
      r.cache_seconds = j.at("cache_seconds").get<double>();
      r.solve_seconds = j.at("solve_seconds").get<double>();
      r.per_iteration_seconds = j.at("per_iteration_seconds").get<double>();
      r.total_seconds = j.at("total_seconds").get<double>();
      r.failed = j.at("failed").get<bool>();
      r.error = j.at("error").get<std::string>();
      r.w_path = j.at("w_path").get<std::string>();
      r.sigma_path = j.at("sigma_path").get<std::string>();
      r.config_echo = j.at("config_echo").get<std::string>();
    } else if (kind == "trace") {
      r.objective_trace = j.at("objective").get<std::vector<double>>();
      r.decay_iterations = j.at("decay_iterations").get<std::vector<int>>();
    } else if (kind == "constraints") {
      r.final_eps = matrix_from_json(j.at("final_eps"));
      r.final_rho = matrix_from_json(j.at("final_rho"));
      r.final_mu = matrix_from_json(j.at("final_mu"));
      r.mean_mu_trace = j.at("mean_mu_trace").get<std::vector<double>>();
      r.mean_rho_trace = j.at("mean_rho_trace").get<std::vector<double>>();
      r.first_argmax_switch = imatrix_from_json(j.at("first_argmax_switch"));
      r.first_mu_zero = imatrix_from_json(j.at("first_mu_zero"));
      r.constraints_satisfied = j.at("constraints_satisfied").get<int>();
      r.eps_rank_violations = j.value("eps_rank_violations", -1);
      r.constraints_total = j.at("constraints_total").get<int>();
      for (const json& e : j.at("switch_events"))
        r.switch_events.push_back({e.at("sweep").get<int>(), e.at("component").get<int>(),
                                   e.at("dataset").get<int>(), e.at("to_argmax").get<bool>()});
    } else if (kind == "metrics") {
      r.joint_isi = double_or_nan(j.at("joint_isi"));
      r.cross_joint_isi = double_or_nan(j.at("cross_joint_isi"));
      r.similarity_factor = double_or_nan(j.at("similarity_factor"));
      r.sf_used_matching = j.at("sf_used_matching").get<bool>();
    }
  }
  return r;
}

void save_report(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("report save: cannot open " + path);
  out << report_to_text(report);
  if (!out) throw IoError("report save: write failed for " + path);
}

RunReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("report load: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return report_from_text(buf.str());
}

}  // namespace civa
