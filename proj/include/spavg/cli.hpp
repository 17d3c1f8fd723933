#pragma once

// Batch commands driven by JSON configuration files. Every command is
// callable in-process and returns an exit code:
//   0 success or verdict recorded, 1 validation error, 2 numeric divergence,
//   3 criterion failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spavg/averaging.hpp"
#include "spavg/errors.hpp"
#include "spavg/experiments.hpp"
#include "spavg/harness.hpp"
#include "spavg/io.hpp"
#include "spavg/seeker.hpp"

namespace spavg::cli {

using nlohmann::json;
using so3::Vector3;

enum ExitCode : int { kOk = 0, kValidation = 1, kDivergence = 2, kCriterion = 3 };

struct RunOptions {
  std::string out_dir = ".";
  bool quiet = false;
};

struct CommandResult {
  int exit_code = kOk;
  std::vector<std::string> files;
  std::string summary;
};

// ---------------------------------------------------------------------------
// Config reading

/// Typed access to a config object that remembers every key it was asked
/// about; finish() rejects the rest and reports all problems at once.
class ConfigReader {
 public:
  ConfigReader(const json& j, std::string command) : j_(j), command_(std::move(command)) {
    if (!j_.is_object()) throw ConfigurationError(command_ + ": config must be a JSON object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    known_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(key + ": wrong type");
      return fallback;
    }
  }

  /// A number that must satisfy `ok`.
  double number(const std::string& key, double fallback, const std::function<bool(double)>& ok,
                const std::string& requirement) {
    const double v = get<double>(key, fallback);
    if (!std::isfinite(v) || !ok(v)) problems_.push_back(key + ": " + requirement);
    return v;
  }

  int integer(const std::string& key, int fallback, int min_value) {
    const int v = get<int>(key, fallback);
    if (v < min_value) problems_.push_back(key + ": must be >= " + std::to_string(min_value));
    return v;
  }

  std::string choice(const std::string& key, const std::string& fallback,
                     const std::vector<std::string>& allowed) {
    const auto v = get<std::string>(key, fallback);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      problems_.push_back(key + ": must be one of " + list);
    }
    return v;
  }

  Vector3 vec3(const std::string& key, const Vector3& fallback) {
    const auto v = get<std::vector<double>>(key, {fallback.x(), fallback.y(), fallback.z()});
    if (v.size() != 3 || !std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); })) {
      problems_.push_back(key + ": must be 3 finite numbers");
      return fallback;
    }
    return {v[0], v[1], v[2]};
  }

  void problem(const std::string& text) { problems_.push_back(text); }

  void finish() {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) problems_.push_back(item.key() + ": unknown key");
    }
    if (!problems_.empty()) {
      std::string msg = command_ + ": invalid config:";
      for (const auto& p : problems_) msg += "\n  " + p;
      throw ConfigurationError(msg);
    }
  }

 private:
  const json& j_;
  std::string command_;
  std::set<std::string> known_;
  std::vector<std::string> problems_;
};

inline bool positive(double v) { return v > 0.0; }
inline bool non_negative(double v) { return v >= 0.0; }

inline std::vector<double> default_ladder() {
  std::vector<double> out;
  for (int k = 0; k <= 4; ++k) out.push_back(4.0 * M_PI * std::pow(2.0, k));
  return out;
}

inline seeker::ScalarField field_for(const std::string& system) {
  return system == "seeker-quadratic" ? seeker::quadratic_field() : seeker::log_field();
}

/// Seeker settings shared by several commands.
inline seeker::SeekerConfig read_seeker_config(ConfigReader& r) {
  seeker::SeekerConfig cfg;
  cfg.omega = r.number("omega", cfg.omega, positive, "must be > 0");
  cfg.steps_per_fast_period = r.integer("steps_per_fast_period", cfg.steps_per_fast_period, 50);
  cfg.projection = r.get<bool>("projection", cfg.projection);
  cfg.filter_init = r.choice("filter_init", "quasi_steady", {"quasi_steady", "zero"}) == "zero"
                        ? seeker::FilterInit::zero
                        : seeker::FilterInit::quasi_steady;
  cfg.frame = r.choice("frame", "kinematic", {"kinematic", "index_form"}) == "index_form"
                  ? seeker::FrameConvention::index_form
                  : seeker::FrameConvention::kinematic;
  return cfg;
}

inline std::string output_path(const RunOptions& opt, const std::string& name) {
  std::filesystem::path dir(opt.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + opt.out_dir + "': " + ec.message());
  return (dir / name).string();
}

inline void say(const RunOptions& opt, std::ostream& out, const std::string& line) {
  if (!opt.quiet) out << line << '\n';
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Commands

/// Full seeker run written as a CSV trajectory.
inline CommandResult cmd_simulate(const json& config, const RunOptions& opt = {},
                                  std::ostream& out = std::cout) {
  ConfigReader r(config, "simulate");
  const auto system = r.choice("system", "seeker-log", {"seeker-log", "seeker-quadratic"});
  const auto cfg = read_seeker_config(r);
  const double horizon = r.number("horizon", 100.0, non_negative, "must be >= 0");
  const int stride = r.integer("stride", 1, 1);
  const Vector3 p0 = r.vec3("p0", Vector3(6.0, 2.0, -2.0));
  const Vector3 r0 = r.vec3("r0_rotvec", Vector3::Zero());
  const auto name = r.get<std::string>("output", "trajectory.csv");
  r.finish();

  const auto field = field_for(system);
  const auto init = seeker::initial_state(cfg, field, p0, so3::exp_so3(r0));
  const auto traj = seeker::simulate(cfg, field, init, horizon, static_cast<std::size_t>(stride));
  const auto table = io::seeker_table(traj, field);
  const auto path = output_path(opt, name);
  io::write_csv(path, table);

  double worst = 0.0;
  for (const auto& row : table.rows) worst = std::max(worst, row.back());
  const Vector3 p_end = traj.back().segment<3>(seeker::kP);
  CommandResult res;
  res.files.push_back(path);
  res.summary = "simulate: final |p - p*| = " + fmt((p_end - field.p_star).norm()) +
                ", max manifold residual = " + fmt(worst);
  say(opt, out, res.summary);
  return res;
}

/// Numeric second-order average of the seeker against the closed form.
inline CommandResult cmd_average_check(const json& config, const RunOptions& opt = {},
                                       std::ostream& out = std::cout) {
  ConfigReader r(config, "average-check");
  const auto system = r.choice("system", "seeker-log", {"seeker-log", "seeker-quadratic"});
  const auto cfg = read_seeker_config(r);
  const int samples = r.integer("samples", 20, 1);
  const auto seed = r.get<std::uint64_t>("seed", 2024);
  const int panels = r.integer("panels", kDefaultPanels, 2);
  if (panels % 2 != 0) r.problem("panels: must be even");
  const double tol = r.number("tolerance", 1e-6, non_negative, "must be >= 0");
  const auto name = r.get<std::string>("output", "average_check.json");
  r.finish();

  const auto field = field_for(system);
  const auto pipeline = build_averaged(seeker::as_system_spec(cfg, field), panels);
  const auto closed = seeker::averaged_seeker_field(field, cfg.frame);
  const auto xs = seeker::sample_states(samples, seed);
  const auto errors = harness::parallel_map(xs.size(), [&](std::size_t i) {
    const Vector num = pipeline.averaged(xs[i]);
    const Vector ref = closed(xs[i]);
    return (num - ref).norm() / std::max(ref.norm(), 1e-12);
  });

  json rows = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    worst = std::max(worst, errors[i]);
    rows.push_back({{"x", std::vector<double>(xs[i].data(), xs[i].data() + xs[i].size())},
                    {"relative_error", errors[i]}});
  }
  const bool pass = worst <= tol;
  const json report = {{"schema_version", io::kSchemaVersion},
                       {"kind", "average_check"},
                       {"system", system},
                       {"panels", panels},
                       {"tolerance", tol},
                       {"samples", rows},
                       {"max_relative_error", worst},
                       {"verdict", pass ? "pass" : "fail"}};
  const auto path = output_path(opt, name);
  io::write_json(path, report);

  CommandResult res;
  res.exit_code = pass ? kOk : kCriterion;
  res.files.push_back(path);
  res.summary = "average-check: max relative error = " + fmt(worst) + " (" +
                (pass ? "pass" : "fail") + ")";
  say(opt, out, res.summary);
  return res;
}

/// Convergence sweep over a geometric frequency ladder.
inline CommandResult cmd_sweep(const json& config, const RunOptions& opt = {},
                               std::ostream& out = std::cout) {
  ConfigReader r(config, "sweep");
  const auto system =
      r.choice("system", "seeker-quadratic", {"seeker-log", "seeker-quadratic", "linear-test"});
  const auto cfg = read_seeker_config(r);
  const auto omegas = r.get<std::vector<double>>("omegas", default_ladder());
  const double t_f = r.number("t_f", 5.0, positive, "must be > 0");
  const int stride = r.integer("stride", 1, 1);
  const Vector3 p0 = r.vec3("p0", Vector3(6.0, 2.0, -2.0));
  const double avg_dt = r.number("averaged_dt", 1e-3, positive, "must be > 0");
  const double threshold =
      r.get<double>("slope_threshold", system == "linear-test" ? -0.9 : -0.4);
  const auto name = r.get<std::string>("output", "sweep.json");
  if (omegas.size() < 4) r.problem("omegas: need at least 4 entries");
  r.finish();

  harness::SetupBuilder builder;
  if (system == "linear-test") {
    builder = experiments::linear_test_builder(avg_dt);
  } else {
    experiments::SeekerExperiment ex{cfg, field_for(system), p0, so3::Rotation(), avg_dt};
    builder = experiments::seeker_sweep_builder(ex);
  }
  harness::SweepOptions sopt;
  sopt.t_f = t_f;
  sopt.stride = static_cast<std::size_t>(stride);
  sopt.slope_threshold = threshold;
  const auto report = harness::sweep_convergence(builder, omegas, sopt);
  const auto path = output_path(opt, name);
  io::write_json(path, json(report));

  bool diverged = false;
  for (const auto& e : report.entries) diverged = diverged || e.failed;
  CommandResult res;
  res.exit_code = diverged ? kDivergence : report.slope_pass ? kOk : kCriterion;
  res.files.push_back(path);
  res.summary = "sweep: slope = " + fmt(report.slope) + " (threshold " + fmt(threshold) + ", " +
                (report.slope_pass ? "pass" : "fail") + ")";
  say(opt, out, res.summary);
  return res;
}

/// Practical-stability probe of the averaged or the full seeker.
inline CommandResult cmd_stability_probe(const json& config, const RunOptions& opt = {},
                                         std::ostream& out = std::cout) {
  ConfigReader r(config, "stability-probe");
  const auto system = r.choice("system", "seeker-quadratic", {"seeker-log", "seeker-quadratic"});
  const auto cfg = read_seeker_config(r);
  const bool averaged = r.get<bool>("averaged", true);
  harness::ProbeOptions popt;
  popt.eps_x = r.number("eps_x", 0.1, positive, "must be > 0");
  popt.eps_z = r.number("eps_z", 1.0, positive, "must be > 0");
  popt.delta_grid = r.get<std::vector<double>>("delta_grid", {6.0});
  popt.delta_z = r.number("delta_z", 0.0, non_negative, "must be >= 0");
  popt.omega_grid = r.get<std::vector<double>>("omega_grid", {4.0 * M_PI});
  popt.horizon = r.number("horizon", 200.0, positive, "must be > 0");
  popt.entry_fraction = r.number("entry_fraction", popt.entry_fraction,
                                 [](double v) { return v > 0.0 && v <= 1.0; }, "must be in (0, 1]");
  const double avg_dt = r.number("averaged_dt", 1e-2, positive, "must be > 0");
  const auto name = r.get<std::string>("output", "stability_probe.json");
  if (popt.delta_grid.empty()) r.problem("delta_grid: must not be empty");
  for (double d : popt.delta_grid)
    if (!(d >= 0.0)) r.problem("delta_grid: entries must be >= 0");
  if (!averaged && popt.omega_grid.empty()) r.problem("omega_grid: must not be empty");
  for (double w : popt.omega_grid)
    if (!(w > 0.0)) r.problem("omega_grid: entries must be > 0");
  r.finish();

  const auto field = field_for(system);
  const auto problem = averaged ? experiments::averaged_seeker_probe(field, cfg.frame, avg_dt)
                                : experiments::full_seeker_probe(cfg, field);
  const auto report = harness::probe_practical_stability(problem, popt);
  const auto path = output_path(opt, name);
  io::write_json(path, json(report));

  CommandResult res;
  res.files.push_back(path);
  std::string items;
  for (int k = 1; k <= 3; ++k) {
    items += " item" + std::to_string(k) + ": " +
             (report.item_holds_everywhere(k) ? "pass" : "not found on grid") + (k < 3 ? "," : "");
  }
  res.summary = "stability-probe:" + items;
  say(opt, out, res.summary);
  return res;
}

/// Residuals of the periodic corrector problems.
inline CommandResult cmd_bvp_check(const json& config, const RunOptions& opt = {},
                                   std::ostream& out = std::cout) {
  ConfigReader r(config, "bvp-check");
  const std::vector<std::string> all = {"cosine", "jordan", "seeker-phi1", "seeker-phi2"};
  const auto cases = r.get<std::vector<std::string>>("cases", all);
  const auto system = r.choice("system", "seeker-log", {"seeker-log", "seeker-quadratic"});
  const auto cfg = read_seeker_config(r);
  const int panels = r.integer("panels", 512, 2);
  if (panels % 2 != 0) r.problem("panels: must be even");
  const int samples = r.integer("samples", 5, 1);
  const auto seed = r.get<std::uint64_t>("seed", 7);
  const double threshold = r.number("threshold", 1e-6, positive, "must be > 0");
  const auto name = r.get<std::string>("output", "bvp_check.json");
  if (cases.empty()) r.problem("cases: must not be empty");
  for (const auto& c : cases) {
    if (std::find(all.begin(), all.end(), c) == all.end()) r.problem("cases: unknown case '" + c + "'");
  }
  r.finish();

  struct Row {
    std::string name;
    int sample;
    double residual;
  };
  std::vector<Row> rows;
  auto want = [&](const std::string& c) { return std::find(cases.begin(), cases.end(), c) != cases.end(); };
  for (const auto& c : {experiments::cosine_case(), experiments::jordan_case()}) {
    if (!want(c.name)) continue;
    const auto phi = solve_periodic_bvp(c.A, c.b, c.T, panels);
    for (std::size_t i = 0; i < c.xs.size(); ++i) {
      rows.push_back({c.name, static_cast<int>(i), residual_bvp(phi, c.A, c.b, c.T, c.xs[i])});
    }
  }
  if (want("seeker-phi1") || want("seeker-phi2")) {
    const auto sc = experiments::seeker_correctors(cfg, field_for(system), panels, samples, seed);
    const auto res1 = harness::parallel_map(sc.xs.size(), [&](std::size_t i) {
      return std::pair{want("seeker-phi1") ? residual_bvp(sc.phi1, sc.spec.A, sc.b1, sc.spec.T, sc.xs[i]) : 0.0,
                       want("seeker-phi2") ? residual_bvp(sc.phi2, sc.spec.A, sc.b2, sc.spec.T, sc.xs[i]) : 0.0};
    });
    for (std::size_t i = 0; i < res1.size(); ++i) {
      if (want("seeker-phi1")) rows.push_back({"seeker-phi1", static_cast<int>(i), res1[i].first});
    }
    for (std::size_t i = 0; i < res1.size(); ++i) {
      if (want("seeker-phi2")) rows.push_back({"seeker-phi2", static_cast<int>(i), res1[i].second});
    }
  }

  json items = json::array();
  double worst = 0.0;
  for (const auto& row : rows) {
    worst = std::max(worst, row.residual);
    items.push_back({{"case", row.name}, {"sample", row.sample}, {"residual", io::number(row.residual)}});
  }
  const bool pass = std::isfinite(worst) && worst <= threshold;
  const json report = {{"schema_version", io::kSchemaVersion},
                       {"kind", "bvp_check"},
                       {"panels", panels},
                       {"threshold", threshold},
                       {"residuals", items},
                       {"max_residual", io::number(worst)},
                       {"verdict", pass ? "pass" : "fail"}};
  const auto path = output_path(opt, name);
  io::write_json(path, report);

  CommandResult res;
  res.exit_code = pass ? kOk : kCriterion;
  res.files.push_back(path);
  res.summary = "bvp-check: max residual = " + fmt(worst) + " (" + (pass ? "pass" : "fail") + ")";
  say(opt, out, res.summary);
  return res;
}

// ---------------------------------------------------------------------------
// Dispatch

using Command = CommandResult (*)(const json&, const RunOptions&, std::ostream&);

inline const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table = {
      {"simulate", &cmd_simulate},
      {"average-check", &cmd_average_check},
      {"sweep", &cmd_sweep},
      {"stability-probe", &cmd_stability_probe},
      {"bvp-check", &cmd_bvp_check},
  };
  return table;
}

/// Runs a command and maps errors to exit codes, reporting them on `err`.
inline int run(const std::string& command, const json& config, const RunOptions& opt,
               std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto it = commands().find(command);
  if (it == commands().end()) {
    err << "unknown command '" << command << "'\n";
    return kValidation;
  }
  try {
    return it->second(config, opt, out).exit_code;
  } catch (const DivergenceError& e) {
    err << command << ": divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const NumericError& e) {
    err << command << ": numeric error: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    err << command << ": I/O error: " << e.what() << '\n';
    return kValidation;
  } catch (const Error& e) {
    err << command << ": " << e.what() << '\n';
    return kValidation;
  }
}

/// Loads the config file and runs the command.
inline int run_file(const std::string& command, const std::string& config_path,
                    const RunOptions& opt, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  json config;
  try {
    config = io::read_json(config_path);
  } catch (const IoError& e) {
    err << command << ": " << e.what() << '\n';
    return kValidation;
  }
  return run(command, config, opt, out, err);
}

}  // namespace spavg::cli
