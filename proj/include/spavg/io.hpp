#pragma once

// CSV trajectories and JSON reports.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spavg/errors.hpp"
#include "spavg/harness.hpp"
#include "spavg/numkit.hpp"
#include "spavg/seeker.hpp"

namespace spavg::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// CSV

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Shortest text that reads back to the same double: 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw DimensionError("csv: row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  f.flush();
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_csv(const std::string& path, const Table& table) { write_text(path, to_csv(table)); }

/// Parses a CSV written by write_csv. The first column must be strictly
/// increasing time.
inline Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line) || line.empty()) throw IoError("csv: missing header row");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) throw IoError("csv: row width differs from header");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        throw IoError("csv: bad number '" + c + "'");
      }
      if (used != c.size()) throw IoError("csv: bad number '" + c + "'");
      row.push_back(v);
    }
    if (!t.rows.empty() && !(row[0] > t.rows.back()[0])) {
      throw IoError("csv: time column is not strictly increasing");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table read_csv(const std::string& path) { return parse_csv(read_text(path)); }

inline std::vector<std::string> seeker_csv_header() {
  return {"t",  "p1", "p2", "p3", "q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8",
          "q9", "y1", "y2", "c_at_center", "V_c", "manifold_residual"};
}

/// One row per sample of a full seeker trajectory.
inline Table seeker_table(const Trajectory& traj, const seeker::ScalarField& field) {
  Table t;
  t.header = seeker_csv_header();
  const double c_star = field.c(field.p_star);
  t.rows.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Vector& s = traj.x[i];
    std::vector<double> row;
    row.reserve(t.header.size());
    row.push_back(traj.t[i]);
    for (Eigen::Index k = 0; k < seeker::kStateSize; ++k) row.push_back(s[k]);
    const double c = field.c(s.segment<3>(seeker::kP));
    row.push_back(c);
    row.push_back(c_star - c);
    row.push_back(so3::manifold_residual(s.segment<9>(seeker::kQ)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// JSON

/// Non-finite doubles are written as null and read back as the given fallback.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or(const json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}
inline json optional_number(const std::optional<double>& v) {
  return v ? number(*v) : json(nullptr);
}
inline std::optional<double> read_optional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace spavg::io

namespace spavg::harness {

inline void to_json(nlohmann::json& j, const SweepEntry& e) {
  using io::number;
  using io::optional_number;
  j = {{"omega", number(e.omega)},
       {"error", number(e.error)},
       {"failed", e.failed},
       {"blowup_time", optional_number(e.blowup_time)},
       {"lambda_hat", optional_number(e.lambda_hat)},
       {"gamma_hat", optional_number(e.gamma_hat)},
       {"fit_note", e.fit_note}};
}

inline void from_json(const nlohmann::json& j, SweepEntry& e) {
  e.omega = j.at("omega").get<double>();
  e.failed = j.at("failed").get<bool>();
  e.error = io::number_or(j.at("error"), INFINITY);
  e.blowup_time = io::read_optional(j.at("blowup_time"));
  e.lambda_hat = io::read_optional(j.at("lambda_hat"));
  e.gamma_hat = io::read_optional(j.at("gamma_hat"));
  e.fit_note = j.at("fit_note").get<std::string>();
}

inline void to_json(nlohmann::json& j, const SweepReport& r) {
  using io::number;
  using io::optional_number;
  j = {{"schema_version", io::kSchemaVersion},
       {"kind", "sweep"},
       {"t_f", number(r.t_f)},
       {"entries", r.entries},
       {"slope", number(r.slope)},
       {"intercept", number(r.intercept)},
       {"slope_threshold", number(r.slope_threshold)},
       {"lambda_hat", optional_number(r.lambda_hat)},
       {"gamma_hat", optional_number(r.gamma_hat)},
       {"non_monotone_pairs", r.non_monotone_pairs},
       {"verdicts",
        {{"slope", r.slope_pass ? "pass" : "fail"},
         {"strictly_decreasing", r.strictly_decreasing ? "pass" : "fail"}}}};
}

inline void from_json(const nlohmann::json& j, SweepReport& r) {
  if (j.at("schema_version").get<int>() != io::kSchemaVersion) {
    throw IoError("sweep report: unsupported schema_version");
  }
  r.t_f = j.at("t_f").get<double>();
  r.entries = j.at("entries").get<std::vector<SweepEntry>>();
  r.slope = io::number_or(j.at("slope"), NAN);
  r.intercept = io::number_or(j.at("intercept"), NAN);
  r.slope_threshold = j.at("slope_threshold").get<double>();
  r.lambda_hat = io::read_optional(j.at("lambda_hat"));
  r.gamma_hat = io::read_optional(j.at("gamma_hat"));
  r.non_monotone_pairs = j.at("non_monotone_pairs").get<int>();
  r.slope_pass = j.at("verdicts").at("slope").get<std::string>() == "pass";
  r.strictly_decreasing = j.at("verdicts").at("strictly_decreasing").get<std::string>() == "pass";
}

inline void to_json(nlohmann::json& j, const ProbeCell& c) {
  j = {{"delta", c.delta},
       {"omega", c.omega},
       {"runs", c.runs},
       {"diverged", c.diverged},
       {"contained", c.contained},
       {"entry_time", io::optional_number(c.entry_time)},
       {"sup_dist_x", io::number(c.sup_dist_x)},
       {"sup_z", io::number(c.sup_z)}};
}

inline void from_json(const nlohmann::json& j, ProbeCell& c) {
  c.delta = j.at("delta").get<double>();
  c.omega = j.at("omega").get<double>();
  c.runs = j.at("runs").get<int>();
  c.diverged = j.at("diverged").get<bool>();
  c.contained = j.at("contained").get<bool>();
  c.entry_time = io::read_optional(j.at("entry_time"));
  c.sup_dist_x = io::number_or(j.at("sup_dist_x"), INFINITY);
  c.sup_z = io::number_or(j.at("sup_z"), INFINITY);
}

inline void to_json(nlohmann::json& j, const ItemVerdict& v) {
  j = {{"verdict", v.found ? "pass" : "not found on grid"},
       {"omega_star", io::optional_number(v.omega_star)}};
}

inline void from_json(const nlohmann::json& j, ItemVerdict& v) {
  v.found = j.at("verdict").get<std::string>() == "pass";
  v.omega_star = io::read_optional(j.at("omega_star"));
}

inline void to_json(nlohmann::json& j, const ProbeDeltaVerdict& v) {
  j = {{"delta", v.delta},
       {"item1", v.item1},
       {"item2", v.item2},
       {"item3", v.item3},
       {"T_f", io::optional_number(v.t_f)},
       {"eps_x_found", io::number(v.eps_x_found)},
       {"eps_z_found", io::number(v.eps_z_found)}};
}

inline void from_json(const nlohmann::json& j, ProbeDeltaVerdict& v) {
  v.delta = j.at("delta").get<double>();
  v.item1 = j.at("item1").get<ItemVerdict>();
  v.item2 = j.at("item2").get<ItemVerdict>();
  v.item3 = j.at("item3").get<ItemVerdict>();
  v.t_f = io::read_optional(j.at("T_f"));
  v.eps_x_found = io::number_or(j.at("eps_x_found"), INFINITY);
  v.eps_z_found = io::number_or(j.at("eps_z_found"), INFINITY);
}

inline void to_json(nlohmann::json& j, const StabilityProbeReport& r) {
  j = {{"schema_version", io::kSchemaVersion},
       {"kind", "stability_probe"},
       {"eps_x", r.eps_x},
       {"eps_z", r.eps_z},
       {"delta_z", r.delta_z},
       {"horizon", r.horizon},
       {"omega_free", r.omega_free},
       {"omega_grid", r.omega_grid},
       {"phases", r.phases},
       {"cells", r.cells},
       {"verdicts", r.verdicts}};
}

inline void from_json(const nlohmann::json& j, StabilityProbeReport& r) {
  if (j.at("schema_version").get<int>() != io::kSchemaVersion) {
    throw IoError("probe report: unsupported schema_version");
  }
  r.eps_x = j.at("eps_x").get<double>();
  r.eps_z = j.at("eps_z").get<double>();
  r.delta_z = j.at("delta_z").get<double>();
  r.horizon = j.at("horizon").get<double>();
  r.omega_free = j.at("omega_free").get<bool>();
  r.omega_grid = j.at("omega_grid").get<std::vector<double>>();
  r.phases = j.at("phases").get<std::vector<double>>();
  r.cells = j.at("cells").get<std::vector<ProbeCell>>();
  r.verdicts = j.at("verdicts").get<std::vector<ProbeDeltaVerdict>>();
}

}  // namespace spavg::harness
