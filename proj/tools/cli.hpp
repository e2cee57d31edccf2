#pragma once

// Command-line front end. Kept in a header so the test suite can drive
// run() in-process.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qfb/qfb.hpp"

#ifndef QFB_VERSION
#define QFB_VERSION "0.0.0"
#endif

namespace qfb::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3, kDivergence = 4, kRecovery = 5 };

using json = nlohmann::ordered_json;

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

/// Numbers are rounded to 12 significant digits before they enter JSON too,
/// so CSV and JSON carry identical values.
inline double round12(double x) { return std::stod(fmt(x)); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(round12(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(round12(v(i)));
  return out;
}

inline void write_matrix(std::ostream& os, const std::string& label, const Matrix& m) {
  os << label << " =\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << " ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << fmt(m(i, j));
    os << '\n';
  }
}

struct OutputRecord {
  double chi = 0.0;
  std::string scheme;
  std::string param_name;
  double param_value = 0.0;
  double L_bits = 0.0;
  double S_bits = 0.0;
  double m_cost = 0.0;
  std::string stability_flag;
};

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{"chi",    "scheme", "param_name", "param_value",
                                             "L_bits", "S_bits", "m_cost",     "stability_flag"};
  return cols;
}

/// The nonlocal scheme is summarized by beta, the no-feedback scheme has no parameter.
inline OutputRecord to_record(const nopo::SchemeResult& r) {
  OutputRecord rec{r.chi, std::string(nopo::scheme_name(r.scheme)), "", 0.0, r.L, r.S, r.m,
                   r.at_boundary ? "boundary" : "stable"};
  if (!r.params.empty()) {
    const auto& p = r.scheme == nopo::SchemeId::nonlocal_optimal ? r.params.back() : r.params.front();
    rec.param_name = p.name;
    rec.param_value = p.value;
  }
  return rec;
}

inline std::string to_csv(const std::vector<OutputRecord>& rows) {
  std::ostringstream os;
  const auto& cols = record_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    os << fmt(r.chi) << ',' << r.scheme << ',' << r.param_name << ',' << fmt(r.param_value) << ',' << fmt(r.L_bits)
       << ',' << fmt(r.S_bits) << ',' << fmt(r.m_cost) << ',' << r.stability_flag << '\n';
  }
  return os.str();
}

inline std::vector<OutputRecord> parse_csv(std::istream& in) {
  std::vector<OutputRecord> rows;
  std::string line;
  if (!std::getline(in, line)) throw InputError("parse_csv: empty input");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw InputError("parse_csv: expected 8 fields in '" + line + "'");
    rows.push_back({std::stod(f[0]), f[1], f[2], std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]),
                    f[7]});
  }
  return rows;
}

inline json record_json(const OutputRecord& r) {
  return json{{"chi", round12(r.chi)},       {"scheme", r.scheme},           {"param_name", r.param_name},
              {"param_value", round12(r.param_value)}, {"L_bits", round12(r.L_bits)}, {"S_bits", round12(r.S_bits)},
              {"m_cost", round12(r.m_cost)}, {"stability_flag", r.stability_flag}};
}

inline json document(const std::string& command, const json& flags, json rows) {
  json doc;
  doc["meta"] = json{{"version", QFB_VERSION},
                     {"command", command},
                     {"flags", flags},
                     {"units", json{{"L_bits", "bits"}, {"S_bits", "bits"}, {"rates", "mode linewidth"}}}};
  doc["rows"] = std::move(rows);
  return doc;
}

inline std::vector<nopo::SchemeId> parse_scheme_list(const std::string& spec) {
  if (spec == "all") return {nopo::kFigureSchemes.begin(), nopo::kFigureSchemes.end()};
  std::vector<nopo::SchemeId> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto s = nopo::parse_scheme(item);
    if (!s) throw InputError("unknown scheme '" + item + "'");
    out.push_back(*s);
  }
  if (out.empty()) throw InputError("no schemes given");
  return out;
}

inline nopo::SchemeId parse_one_scheme(const std::string& name) {
  const auto s = nopo::parse_scheme(name);
  if (!s) throw InputError("unknown scheme '" + name + "'");
  return *s;
}

/// Labels a measured quadrature when the row of C is proportional to a
/// {0, +1, -1} pattern over (q1, p1, q2, p2); empty otherwise.
inline std::string quadrature_label(const Vector& row) {
  static const char* names[] = {"q1", "p1", "q2", "p2"};
  if (row.size() != 4) return {};
  const double scale = row.cwiseAbs().maxCoeff();
  if (scale < 1e-12) return {};
  Vector r = row / scale;
  Eigen::Index first = 0;
  while (std::abs(r(first)) < 0.5) ++first;
  if (r(first) < 0) r = -r;
  std::string label;
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double v = r(k);
    if (std::abs(v) <= 1e-8) continue;
    if (std::abs(std::abs(v) - 1.0) > 1e-8) return {};
    if (!label.empty()) label += v > 0 ? "+" : "-";
    label += names[k];
  }
  return label;
}

struct Flags {
  double chi = 0.25;
  double chi_min = 0.05;
  double chi_max = 0.45;
  int steps = 9;
  std::string schemes = "all";
  std::string scheme = "nonlocal";
  std::string format;
  std::string out;
  long long ntraj = 1000;
  double dt = 1e-3;
  double horizon = 40.0;
  std::uint64_t seed = 7;
  double burn_in = 0.5;
};

struct Emitted {
  std::string body;
  int code = kOk;
};

inline Emitted cmd_model(const Flags& f) {
  const nopo::NopoParams p(f.chi);
  const PlantModel plant = nopo::build_plant(p);
  const DriftDiffusion dd = drift_diffusion(plant);
  const CovarianceMatrix v = nopo::open_loop_V(p);
  const double l = log_negativity(v);
  const double s = von_neumann_entropy(v);
  const double epr = epr_variance(v, 0.0);
  if (f.format == "json") {
    json flags{{"chi", f.chi}};
    json row{{"chi", round12(f.chi)},
             {"G", to_json(plant.G)},
             {"Ctilde", json{{"re", to_json(Matrix(plant.ctilde.real()))}, {"im", to_json(Matrix(plant.ctilde.imag()))}}},
             {"A", to_json(dd.A)},
             {"D", to_json(dd.D)},
             {"V", to_json(v.matrix())},
             {"L_bits", round12(l)},
             {"S_bits", round12(s)},
             {"epr_variance", round12(epr)}};
    return {document("model", flags, json::array({row})).dump(2) + "\n"};
  }
  std::ostringstream os;
  os << "chi = " << fmt(f.chi) << '\n';
  write_matrix(os, "G", plant.G);
  write_matrix(os, "Ctilde (real part)", plant.ctilde.real());
  write_matrix(os, "Ctilde (imaginary part)", plant.ctilde.imag());
  write_matrix(os, "A", dd.A);
  write_matrix(os, "D", dd.D);
  write_matrix(os, "V (open loop)", v.matrix());
  os << "L_bits = " << fmt(l) << '\n' << "S_bits = " << fmt(s) << '\n' << "epr_variance = " << fmt(epr) << '\n';
  return {os.str()};
}

inline Emitted cmd_curves(const Flags& f) {
  const auto schemes = parse_scheme_list(f.schemes);
  const auto results = nopo::scheme_curves(f.chi_min, f.chi_max, f.steps, schemes);
  std::vector<OutputRecord> rows;
  rows.reserve(results.size());
  for (const auto& r : results) rows.push_back(to_record(r));
  if (f.format == "json") {
    json flags{{"chi_min", f.chi_min}, {"chi_max", f.chi_max}, {"steps", f.steps}, {"schemes", f.schemes}};
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(record_json(r));
    return {document("curves", flags, std::move(arr)).dump(2) + "\n"};
  }
  return {to_csv(rows)};
}

inline Emitted cmd_optimize(const Flags& f) {
  const nopo::NopoParams p(f.chi);
  const auto r = nopo::optimize_scheme(p, parse_one_scheme(f.scheme));
  const OutputRecord rec = to_record(r);
  if (f.format == "json") {
    json row = record_json(rec);
    json params = json::object();
    for (const auto& nv : r.params) params[nv.name] = round12(nv.value);
    row["params"] = params;
    row["stability_margin"] = round12(r.stability_margin);
    return {document("optimize", json{{"chi", f.chi}, {"scheme", f.scheme}}, json::array({row})).dump(2) + "\n"};
  }
  std::ostringstream os;
  os << "scheme = " << rec.scheme << '\n' << "chi = " << fmt(r.chi) << '\n';
  for (const auto& nv : r.params) os << nv.name << " = " << fmt(nv.value) << '\n';
  os << "L_bits = " << fmt(r.L) << '\n'
     << "S_bits = " << fmt(r.S) << '\n'
     << "m_cost = " << fmt(r.m) << '\n'
     << "stability_margin = " << fmt(r.stability_margin) << '\n'
     << "stability_flag = " << rec.stability_flag << '\n';
  return {os.str()};
}

struct Check {
  std::string name;
  bool pass;
  double value;
  double bound;
};

/// Monte-Carlo run of the scheme's controller, checked against
///  - riccati: V_c at the horizon vs the Riccati solution of the unravelling (1e-6),
///  - mean: time-averaged <x> vs 0 (4 standard errors per component),
///  - decomposition: mean_outer vs the exact closed-loop moment oracle over the same
///    window (5 standard errors per entry),
///  - cost: regulation cost vs the same oracle (3 standard errors).
inline Emitted cmd_verify(const Flags& f) {
  const nopo::NopoParams p(f.chi);
  const nopo::SchemeId sid = parse_one_scheme(f.scheme);
  if (f.ntraj < 1) throw InputError("--ntraj must be >= 1");
  SimConfig cfg;
  cfg.dt = f.dt;
  cfg.t_final = f.horizon;
  cfg.n_traj = static_cast<std::size_t>(f.ntraj);
  cfg.seed = f.seed;
  cfg.burn_in = f.burn_in;
  cfg.validate();

  const auto result = nopo::optimize_scheme(p, sid);
  const auto ctl = nopo::scheme_controller(p, result);
  const PlantModel plant = nopo::build_plant(p);
  const CovarianceMatrix w = riccati_steady(plant, ctl.unravelling);
  const TrajectoryStats st = simulate_conditional(plant, ctl.unravelling, ctl.gain, cfg);

  const Matrix window = unconditional_window_average(plant, ctl.unravelling, ctl.gain, cfg);
  const Matrix expected_outer = window - st.v_c_window;
  const Matrix pm = nopo::cost_matrix();
  constexpr double kFloor = 1e-12;

  std::vector<Check> checks;
  const double ric = detail::max_abs(st.v_c_final.matrix() - w.matrix());
  checks.push_back({"riccati", ric <= 1e-6, ric, 1e-6});
  double worst_mean = 0.0;
  for (Eigen::Index i = 0; i < st.mean_x.size(); ++i) {
    worst_mean = std::max(worst_mean, std::abs(st.mean_x(i)) / std::max(st.mean_x_se(i), kFloor));
  }
  checks.push_back({"mean", worst_mean <= 4.0, worst_mean, 4.0});
  double worst_dec = 0.0;
  for (Eigen::Index i = 0; i < expected_outer.rows(); ++i) {
    for (Eigen::Index j = 0; j < expected_outer.cols(); ++j) {
      const double dev = std::abs(st.mean_outer(i, j) - expected_outer(i, j));
      worst_dec = std::max(worst_dec, dev / std::max(st.mean_outer_se(i, j), kFloor));
    }
  }
  checks.push_back({"decomposition", worst_dec <= 5.0, worst_dec, 5.0});
  const double cost = regulation_cost(st, pm);
  const double cost_expected = (pm * (st.v_c_final.matrix() + expected_outer)).trace();
  const double cost_z = std::abs(cost - cost_expected) / std::max(regulation_cost_standard_error(st, pm), kFloor);
  checks.push_back({"cost", cost_z <= 3.0, cost_z, 3.0});

  bool all = true;
  for (const auto& c : checks) all = all && c.pass;
  const double m_steady = nopo::cost(result.V);

  if (f.format == "json") {
    json flags{{"chi", f.chi},   {"scheme", f.scheme}, {"ntraj", f.ntraj},    {"dt", f.dt},
               {"horizon", f.horizon}, {"seed", f.seed},     {"burn_in", f.burn_in}};
    json rows = json::array();
    for (const auto& c : checks) {
      rows.push_back(json{{"check", c.name}, {"status", c.pass ? "pass" : "fail"}, {"value", round12(c.value)},
                          {"bound", round12(c.bound)}});
    }
    json doc = document("verify", flags, std::move(rows));
    doc["summary"] = json{{"regulation_cost", round12(cost)}, {"m_steady_state", round12(m_steady)},
                          {"n_steps", st.n_steps}, {"warnings", st.warnings}};
    return {doc.dump(2) + "\n", all ? kOk : kCheckFailed};
  }
  std::ostringstream os;
  os << "scheme = " << nopo::scheme_name(sid) << ", chi = " << fmt(f.chi) << ", ntraj = " << f.ntraj
     << ", dt = " << fmt(f.dt) << ", horizon = " << fmt(f.horizon) << ", seed = " << f.seed << '\n';
  for (const auto& wmsg : st.warnings) os << "warning: " << wmsg << '\n';
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << fmt(c.value) << "  bound=" << fmt(c.bound) << '\n';
  }
  os << "regulation_cost = " << fmt(cost) << "  (stationary tr[PV] = " << fmt(m_steady) << ")\n";
  return {os.str(), all ? kOk : kCheckFailed};
}

inline Emitted cmd_recover(const Flags& f) {
  const nopo::NopoParams p(f.chi);
  const auto [alpha, beta] = nopo::nonlocal_closed_form(p);
  const CovarianceMatrix w = nopo::nonlocal_W(alpha, beta);
  const PlantModel plant = nopo::build_plant(p);
  Recovery rec = [&] {
    try {
      return recover_unravelling(w, plant);
    } catch (const InputError& e) {
      throw RecoveryError(e.what());
    }
  }();
  const MeasurementModel meas = measurement_model(plant, rec.unravelling);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < meas.C.rows(); ++i) {
    const std::string l = quadrature_label(meas.C.row(i).transpose());
    if (!l.empty() && std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  if (f.format == "json") {
    json row{{"chi", round12(f.chi)}, {"alpha", round12(alpha)}, {"beta", round12(beta)},
             {"W", to_json(w.matrix())}, {"U", to_json(rec.U)}, {"residual", round12(rec.residual)},
             {"C", to_json(meas.C)}, {"measured", labels}};
    return {document("recover", json{{"chi", f.chi}}, json::array({row})).dump(2) + "\n"};
  }
  std::ostringstream os;
  os << "chi = " << fmt(f.chi) << "\nalpha = " << fmt(alpha) << "\nbeta = " << fmt(beta) << '\n';
  write_matrix(os, "W", w.matrix());
  write_matrix(os, "U", rec.U);
  os << "residual = " << fmt(rec.residual) << '\n';
  write_matrix(os, "C", meas.C);
  os << "measured =";
  for (const auto& l : labels) os << ' ' << l;
  os << '\n';
  return {os.str()};
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Steady-state measurement and feedback control of Gaussian systems: parametric oscillator tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", QFB_VERSION);
  Flags f;

  auto add_format = [&](CLI::App* sub, const std::string& def, std::vector<std::string> allowed) {
    f.format.clear();
    sub->add_option("--format", f.format, "output format")->check(CLI::IsMember(allowed))->default_str(def);
    sub->add_option("--out", f.out, "output path (default stdout)");
  };

  auto* model = app.add_subcommand("model", "plant matrices and open-loop diagnostics");
  model->add_option("--chi", f.chi, "nonlinearity strength, 0 <= chi < 1/2")->required();
  add_format(model, "text", {"text", "json"});

  auto* curves = app.add_subcommand("curves", "optimal log-negativity and entropy versus chi");
  curves->add_option("--chi-min", f.chi_min)->capture_default_str();
  curves->add_option("--chi-max", f.chi_max)->capture_default_str();
  curves->add_option("--steps", f.steps)->capture_default_str();
  curves->add_option("--schemes", f.schemes, "'all' or a comma-separated list")->capture_default_str();
  add_format(curves, "csv", {"csv", "json"});

  auto* optimize = app.add_subcommand("optimize", "optimal feedback parameter of one scheme");
  optimize->add_option("--chi", f.chi)->required();
  optimize->add_option("--scheme", f.scheme)->required();
  add_format(optimize, "text", {"text", "json"});

  auto* verify = app.add_subcommand("verify", "Monte-Carlo check against Riccati and Lyapunov oracles");
  verify->add_option("--chi", f.chi)->capture_default_str();
  verify->add_option("--scheme", f.scheme)->capture_default_str();
  verify->add_option("--ntraj", f.ntraj)->capture_default_str();
  verify->add_option("--dt", f.dt)->capture_default_str();
  verify->add_option("--horizon", f.horizon, "simulated time, linewidth units")->capture_default_str();
  verify->add_option("--seed", f.seed)->capture_default_str();
  verify->add_option("--burn-in", f.burn_in, "discarded fraction of the horizon")->capture_default_str();
  add_format(verify, "text", {"text", "json"});

  auto* recover = app.add_subcommand("recover", "unravelling that generates the optimal conditional state");
  recover->add_option("--chi", f.chi)->required();
  add_format(recover, "text", {"text", "json"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  Emitted result;
  try {
    if (model->parsed()) result = cmd_model(f);
    else if (curves->parsed()) result = cmd_curves(f);
    else if (optimize->parsed()) result = cmd_optimize(f);
    else if (verify->parsed()) result = cmd_verify(f);
    else result = cmd_recover(f);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (trajectory " << e.trajectory() << ")\n";
    return kDivergence;
  } catch (const RecoveryError& e) {
    err << "error: " << e.what() << '\n';
    return kRecovery;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }

  if (f.out.empty()) {
    out << result.body;
    out.flush();
    if (!out) return kIo;
  } else {
    std::ofstream file(f.out, std::ios::binary | std::ios::trunc);
    if (!file) {
      err << "error: cannot open '" << f.out << "' for writing\n";
      return kIo;
    }
    file << result.body;
    file.close();
    if (!file) {
      err << "error: failed writing '" << f.out << "'\n";
      return kIo;
    }
  }
  return result.code;
}

}  // namespace qfb::cli
