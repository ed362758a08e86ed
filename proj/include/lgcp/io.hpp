#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgcp/diagnostics.hpp"
#include "lgcp/grid.hpp"
#include "lgcp/kfunction.hpp"

namespace lgcp {

namespace io {

/// Shortest exact decimal representation (17 significant digits round-trips
/// binary64 exactly).
inline std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

inline void ensure_parent_dir(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

/// Point pattern text format: one header line "x,y", one point per line.
inline void write_pattern(const std::filesystem::path& path, const PointPattern& pattern) {
  auto out = open_output(path);
  out << "x,y\n";
  for (const Point& p : pattern.points)
    out << format_double(p.x) << "," << format_double(p.y) << "\n";
}

inline PointPattern read_pattern(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y", 0) != 0)
    throw std::runtime_error("read_pattern: missing 'x,y' header in " + path.string());
  PointPattern pattern;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("read_pattern: malformed line " + std::to_string(line_no) +
                               " in " + path.string());
    std::size_t used_x = 0, used_y = 0;
    const double x = std::stod(line.substr(0, comma), &used_x);
    const double y = std::stod(line.substr(comma + 1), &used_y);
    pattern.points.push_back({x, y});
  }
  return pattern;
}

/// Little-endian float64 binary block with a JSON sidecar carrying shape and
/// semantic name. `path` names the .bin file; the sidecar replaces the
/// extension with .json.
inline void write_array(const std::filesystem::path& path, const std::string& name,
                        const Eigen::MatrixXd& values) {
  auto out = open_output(path);
  // Eigen default storage is column-major; write row-major for sidecar clarity
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  nlohmann::json meta{{"name", name},
                      {"dtype", "<f8"},
                      {"order", "row-major"},
                      {"shape", {values.rows(), values.cols()}}};
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  open_output(sidecar) << meta.dump(2) << "\n";
}

inline Eigen::MatrixXd read_array(const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  nlohmann::json meta = nlohmann::json::parse(open_input(sidecar));
  const Eigen::Index rows = meta.at("shape").at(0).get<Eigen::Index>();
  const Eigen::Index cols = meta.at("shape").at(1).get<Eigen::Index>();
  auto in = open_input(path);
  Eigen::MatrixXd values(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw std::runtime_error("read_array: truncated " + path.string());
      values(r, c) = v;
    }
  return values;
}

inline void write_vector(const std::filesystem::path& path, const std::string& name,
                         const Eigen::VectorXd& values) {
  write_array(path, name, values);
}

/// KCurve as CSV (r,value) plus a JSON sidecar with estimator metadata.
inline void write_kcurve(const std::filesystem::path& path, const KCurve& curve,
                         const std::string& value_name = "k") {
  auto out = open_output(path);
  out << "r," << value_name << "\n";
  for (Eigen::Index i = 0; i < curve.r.size(); ++i)
    out << format_double(curve.r[i]) << "," << format_double(curve.k[i]) << "\n";
  nlohmann::json meta{{"estimator", curve.estimator}, {"value", value_name}};
  if (std::isfinite(curve.intensity)) meta["intensity"] = curve.intensity;
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  open_output(sidecar) << meta.dump(2) << "\n";
}

inline void write_ppc(const std::filesystem::path& csv_path, const PpcResult& ppc) {
  auto out = open_output(csv_path);
  out << "r,lower,mean,median,upper\n";
  for (Eigen::Index i = 0; i < ppc.rgrid.size(); ++i)
    out << format_double(ppc.rgrid[i]) << "," << format_double(ppc.lower[i]) << ","
        << format_double(ppc.mean[i]) << "," << format_double(ppc.median[i]) << ","
        << format_double(ppc.upper[i]) << "\n";
  nlohmann::json meta{{"n_draws", ppc.n_draws}, {"n_missing", ppc.n_missing}};
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  open_output(sidecar) << meta.dump(2) << "\n";
}

inline void write_study_csv(const std::filesystem::path& path, const StudyTable& table) {
  auto out = open_output(path);
  out << "parameter,measure";
  for (const auto& method : table.methods)
    out << "," << method << "," << method << "_rel";
  out << "\n";
  const std::vector<std::pair<std::string, std::pair<const Eigen::MatrixXd*, const Eigen::MatrixXd*>>>
      rows = {{"bias", {&table.bias, &table.bias_rel}},
              {"variance", {&table.variance, &table.variance_rel}},
              {"mse", {&table.mse, &table.mse_rel}},
              {"avg_marginal_var", {&table.avg_marginal_var, &table.avg_marginal_var_rel}}};
  for (std::size_t p = 0; p < table.parameters.size(); ++p) {
    for (const auto& [measure, mats] : rows) {
      out << table.parameters[p] << "," << measure;
      for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(table.methods.size()); ++m)
        out << "," << format_double((*mats.first)(p, m)) << ","
            << format_double((*mats.second)(p, m));
      out << "\n";
    }
  }
}

inline std::string render_study_text(const StudyTable& table) {
  std::ostringstream out;
  out << "replicates: " << table.replicates << "   baseline: " << table.baseline << "\n\n";
  auto row = [&](const std::string& label, const Eigen::MatrixXd& abs,
                 const Eigen::MatrixXd& rel, std::size_t p) {
    out << "  " << std::left << std::setw(18) << label;
    for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(table.methods.size()); ++m) {
      std::ostringstream cell;
      cell << std::setprecision(5) << abs(p, m) << " (" << std::setprecision(4) << rel(p, m)
           << ")";
      out << std::right << std::setw(26) << cell.str();
    }
    out << "\n";
  };
  out << std::left << std::setw(20) << "parameter";
  for (const auto& method : table.methods)
    out << std::right << std::setw(26) << (method + " (rel)");
  out << "\n";
  for (std::size_t p = 0; p < table.parameters.size(); ++p) {
    out << table.parameters[p] << "\n";
    row("bias", table.bias, table.bias_rel, p);
    row("variance", table.variance, table.variance_rel, p);
    row("mse", table.mse, table.mse_rel, p);
    row("avg marg. var", table.avg_marginal_var, table.avg_marginal_var_rel, p);
  }
  return out.str();
}

inline nlohmann::json study_to_json(const StudyTable& table) {
  nlohmann::json j;
  j["parameters"] = table.parameters;
  j["methods"] = table.methods;
  j["baseline"] = table.baseline;
  j["replicates"] = table.replicates;
  auto matrix = [&](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["bias"] = matrix(table.bias);
  j["variance"] = matrix(table.variance);
  j["mse"] = matrix(table.mse);
  j["avg_marginal_var"] = matrix(table.avg_marginal_var);
  j["bias_rel"] = matrix(table.bias_rel);
  j["variance_rel"] = matrix(table.variance_rel);
  j["mse_rel"] = matrix(table.mse_rel);
  j["avg_marginal_var_rel"] = matrix(table.avg_marginal_var_rel);
  return j;
}

inline StudyTable study_from_json(const nlohmann::json& j) {
  StudyTable table;
  table.parameters = j.at("parameters").get<std::vector<std::string>>();
  table.methods = j.at("methods").get<std::vector<std::string>>();
  table.baseline = j.at("baseline").get<std::string>();
  table.replicates = j.at("replicates").get<long>();
  auto matrix = [&](const char* key) {
    const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
  };
  table.bias = matrix("bias");
  table.variance = matrix("variance");
  table.mse = matrix("mse");
  table.avg_marginal_var = matrix("avg_marginal_var");
  table.bias_rel = matrix("bias_rel");
  table.variance_rel = matrix("variance_rel");
  table.mse_rel = matrix("mse_rel");
  table.avg_marginal_var_rel = matrix("avg_marginal_var_rel");
  return table;
}

}  // namespace io

}  // namespace lgcp
