#include "geostab/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <thread>

#include <json.hpp>

#include "geostab/kcc.hpp"
#include "geostab/lagrangian.hpp"
#include "geostab/lyapunov.hpp"
#include "geostab/maupertuis.hpp"
#include "geostab/report.hpp"

namespace geostab::cli {

namespace {

using nlohmann::json;
using num::Vec;

// ---- field access with located error messages ----

const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(where + ": missing required field '" + key + "'");
  return j.at(key);
}

double num_field(const json& j, const std::string& key, const std::string& where,
                 std::optional<double> def = {}) {
  if (!j.is_object() || !j.contains(key)) {
    if (def) return *def;
    throw ConfigError(where + ": missing required number '" + key + "'");
  }
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

long int_field(const json& j, const std::string& key, const std::string& where,
               std::optional<long> def = {}) {
  if (!j.is_object() || !j.contains(key)) {
    if (def) return *def;
    throw ConfigError(where + ": missing required integer '" + key + "'");
  }
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<long>();
}

std::string str_field(const json& j, const std::string& key, const std::string& where,
                      std::optional<std::string> def = {}) {
  if (!j.is_object() || !j.contains(key)) {
    if (def) return *def;
    throw ConfigError(where + ": missing required string '" + key + "'");
  }
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

Vec vec_field(const json& j, const std::string& key, const std::string& where, int expect) {
  const json& v = require(j, key, where);
  if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array of numbers");
  Vec out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
    out.push_back(e.get<double>());
  }
  if (expect >= 0 && static_cast<int>(out.size()) != expect)
    throw ConfigError(where + "." + key + ": expected " + std::to_string(expect) + " entries");
  return out;
}

std::pair<double, double> span_field(const json& j, const std::string& key,
                                     const std::string& where, double def_end) {
  if (!j.contains(key)) return {0.0, def_end};
  Vec v = vec_field(j, key, where, 2);
  if (!(v[1] > v[0])) throw ConfigError(where + "." + key + ": end must exceed start");
  return {v[0], v[1]};
}

std::vector<double> linspace(double a, double b, long count) {
  if (count < 2) throw ConfigError("sample count must be at least 2");
  std::vector<double> out(count);
  for (long i = 0; i < count; ++i) out[i] = a + (b - a) * i / (count - 1);
  return out;
}

// ---- system construction ----

struct SystemSpec {
  enum class Kind { Flow, Lagrangian, Natural } kind = Kind::Flow;
  int config_dim = 0;  // n for second-order systems, 0 otherwise
  int state_dim = 0;
  flow::VectorFlowSystem system;
  std::optional<lag::LagrangianSystem> lagrangian;
  std::optional<lag::NaturalLagrangian> natural;
  std::optional<kcc::SprayData> spray;
  std::vector<std::pair<std::string, double>> params;
};

std::vector<std::pair<std::string, double>> parse_params(const json& sys) {
  std::vector<std::pair<std::string, double>> out;
  if (!sys.contains("parameters")) return out;
  const json& p = sys.at("parameters");
  if (!p.is_object()) throw ConfigError("system.parameters: expected an object");
  for (auto it = p.begin(); it != p.end(); ++it) {
    if (!it.value().is_number())
      throw ConfigError("system.parameters." + it.key() + ": expected a number");
    out.emplace_back(it.key(), it.value().get<double>());
  }
  return out;
}

std::vector<expr::Expression> parse_exprs(const json& arr, const expr::TablePtr& table,
                                          const std::string& where) {
  if (!arr.is_array()) throw ConfigError(where + ": expected an array of expression strings");
  std::vector<expr::Expression> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string())
      throw ConfigError(where + "[" + std::to_string(i) + "]: expected an expression string");
    try {
      out.push_back(expr::Expression::parse(arr[i].get<std::string>(), table));
    } catch (const Error& e) {
      throw ConfigError(where + "[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return out;
}

geom::MetricField parse_metric(const json& rows, int n,
                               const std::vector<std::pair<std::string, double>>& params,
                               const std::string& where, geom::Signature sig) {
  auto table = expr::make_table(n, false, params);
  if (rows.is_string() && rows.get<std::string>() == "euclidean") {
    std::vector<expr::Expression> es;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        es.push_back(expr::Expression::constant(a == b ? 1.0 : 0.0, table));
    return geom::MetricField(n, std::move(es), sig);
  }
  if (!rows.is_array() || static_cast<int>(rows.size()) != n)
    throw ConfigError(where + ": expected n rows of n expression strings or \"euclidean\"");
  std::vector<expr::Expression> es;
  for (int a = 0; a < n; ++a) {
    std::vector<expr::Expression> row = parse_exprs(rows[a], table, where);
    if (static_cast<int>(row.size()) != n)
      throw ConfigError(where + ": row " + std::to_string(a) + " must have n entries");
    for (auto& e : row) es.push_back(std::move(e));
  }
  return geom::MetricField(n, std::move(es), sig);
}

SystemSpec build_system(const json& sys) {
  SystemSpec S;
  std::string type = str_field(sys, "type", "system");
  S.params = parse_params(sys);
  int dim = static_cast<int>(int_field(sys, "dimension", "system"));
  if (dim < 1) throw ConfigError("system.dimension: must be positive");

  if (type == "flow") {
    S.kind = SystemSpec::Kind::Flow;
    bool second = sys.contains("second_order") && sys.at("second_order").get<bool>();
    if (second) {
      auto table = expr::make_table(dim, true, S.params);
      auto accel = parse_exprs(require(sys, "accelerations", "system"), table,
                               "system.accelerations");
      if (static_cast<int>(accel.size()) != dim)
        throw ConfigError("system.accelerations: expected n entries");
      S.system = flow::lift_second_order(dim, accel);
      S.spray = kcc::spray_from_accel(dim, accel);
      S.config_dim = dim;
      S.state_dim = 2 * dim;
    } else {
      auto table = expr::make_table(dim, false, S.params);
      auto comps = parse_exprs(require(sys, "components", "system"), table, "system.components");
      if (static_cast<int>(comps.size()) != dim)
        throw ConfigError("system.components: expected N entries");
      S.system = flow::VectorFlowSystem::from_expressions(std::move(comps));
      S.state_dim = dim;
    }
  } else if (type == "lagrangian") {
    S.kind = SystemSpec::Kind::Lagrangian;
    auto table = expr::make_table(dim, true, S.params);
    expr::Expression L;
    try {
      L = expr::Expression::parse(str_field(sys, "L", "system"), table);
    } catch (const Error& e) {
      throw ConfigError(std::string("system.L: ") + e.what());
    }
    S.lagrangian = lag::LagrangianSystem(dim, L);
    S.system = lag::semispray_from_lagrangian(*S.lagrangian);
    S.spray = lag::spray_of(*S.lagrangian);
    S.config_dim = dim;
    S.state_dim = 2 * dim;
  } else if (type == "natural") {
    S.kind = SystemSpec::Kind::Natural;
    geom::Signature sig = geom::Signature::PositiveDefinite;
    if (sys.contains("signature")) {
      std::string s = str_field(sys, "signature", "system");
      if (s == "indefinite") sig = geom::Signature::Indefinite;
      else if (s != "positive-definite")
        throw ConfigError("system.signature: expected 'positive-definite' or 'indefinite'");
    }
    json kin = sys.contains("kinetic") ? sys.at("kinetic") : json("euclidean");
    geom::MetricField k = parse_metric(kin, dim, S.params, "system.kinetic", sig);
    expr::Expression V;
    try {
      V = expr::Expression::parse(str_field(sys, "potential", "system"), k.table());
    } catch (const Error& e) {
      throw ConfigError(std::string("system.potential: ") + e.what());
    }
    S.natural = lag::NaturalLagrangian(std::move(k), std::move(V));
    S.system = lag::semispray(*S.natural);
    S.spray = lag::spray_of(*S.natural);
    S.config_dim = dim;
    S.state_dim = 2 * dim;
  } else {
    throw ConfigError("system.type: expected 'flow', 'lagrangian' or 'natural'");
  }
  return S;
}

// ---- seminorm families, frames ----

lyap::SeminormFamily build_family(const json& a, const SystemSpec& S, const std::string& where) {
  if (!a.contains("seminorm")) return lyap::SeminormFamily::euclidean();
  const json& sem = a.at("seminorm");
  std::string type = str_field(sem, "type", where + ".seminorm");
  if (type == "euclidean") return lyap::SeminormFamily::euclidean();
  if (type == "vertical-lift") {
    if (sem.contains("metric")) {
      if (S.config_dim == 0)
        throw ConfigError(where + ": vertical-lift needs a second-order system");
      return lyap::SeminormFamily::vertical_lift(parse_metric(
          sem.at("metric"), S.config_dim, S.params, where + ".seminorm.metric",
          geom::Signature::PositiveDefinite));
    }
    if (S.natural) return lyap::SeminormFamily::vertical_lift(S.natural->kinetic());
    throw ConfigError(where + ": vertical-lift without 'metric' needs a natural system");
  }
  if (type == "lagrange-metric") {
    if (S.lagrangian) return lyap::SeminormFamily::lagrange_metric(*S.lagrangian);
    if (S.natural) return lyap::SeminormFamily::vertical_lift(S.natural->kinetic());
    throw ConfigError(where + ": lagrange-metric needs a Lagrangian or natural system");
  }
  if (type == "custom") {
    const json& rows = require(sem, "metric", where + ".seminorm");
    if (!rows.is_array() || rows.empty())
      throw ConfigError(where + ".seminorm.metric: expected rows of expression strings");
    int m = static_cast<int>(rows.size());
    auto table = S.config_dim > 0 ? expr::make_table(S.config_dim, true, S.params)
                                  : expr::make_table(S.state_dim, false, S.params);
    std::vector<expr::Expression> es;
    for (int i = 0; i < m; ++i) {
      auto row = parse_exprs(rows[i], table, where + ".seminorm.metric");
      if (static_cast<int>(row.size()) != m)
        throw ConfigError(where + ".seminorm.metric: must be square");
      for (auto& e : row) es.push_back(std::move(e));
    }
    return lyap::SeminormFamily::custom(m, std::move(es));
  }
  throw ConfigError(where + ".seminorm.type: unknown kind '" + type + "'");
}

std::vector<Vec> build_frame(const json& a, int N, unsigned long seed, const std::string& where) {
  if (!a.contains("frame") || (a.at("frame").is_string() && a.at("frame") == "full")) {
    std::vector<Vec> frame(N, Vec(N, 0.0));
    for (int i = 0; i < N; ++i) frame[i][i] = 1.0;
    return frame;
  }
  const json& fr = a.at("frame");
  if (fr.is_string() && fr == "random") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Vec> frame(N, Vec(N));
    for (auto& v : frame)
      for (auto& c : v) c = dist(rng);
    return frame;
  }
  if (!fr.is_array()) throw ConfigError(where + ".frame: expected 'full', 'random' or arrays");
  std::vector<Vec> frame;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    if (!fr[i].is_array()) throw ConfigError(where + ".frame: expected arrays of numbers");
    Vec v = fr[i].get<std::vector<double>>();
    if (static_cast<int>(v.size()) != N)
      throw ConfigError(where + ".frame: vectors must have state dimension");
    frame.push_back(std::move(v));
  }
  return frame;
}

flow::IntegratorSettings integrator_settings(const json& a, const std::string& where) {
  flow::IntegratorSettings s;
  std::string method = str_field(a, "method", where, std::string("rk45"));
  if (method == "rk4") {
    s.method = flow::Method::RK4;
    s.fixed_step = num_field(a, "step", where, 1e-3);
  } else if (method != "rk45") {
    throw ConfigError(where + ".method: expected 'rk45' or 'rk4'");
  }
  s.abs_tol = num_field(a, "abs_tol", where, 1e-10);
  s.rel_tol = num_field(a, "rel_tol", where, 1e-9);
  if (!(s.abs_tol > 0.0) || !(s.rel_tol > 0.0))
    throw ConfigError(where + ": tolerances must be positive");
  return s;
}

// ---- output plumbing ----

struct OutputCtx {
  std::filesystem::path dir;
  std::string prefix;
  bool want_json = true;
  bool want_csv = true;

  std::string path(int idx, const std::string& name, const std::string& ext) const {
    char tag[16];
    std::snprintf(tag, sizeof(tag), "%02d", idx);
    return (dir / (prefix + "_" + tag + "_" + name + "." + ext)).string();
  }
};

Json state_json(std::span<const double> v) {
  return Json::number_array(v.begin(), v.end());
}

Json events_json(const std::vector<flow::EventRecord>& events) {
  Json arr = Json::array();
  for (const auto& ev : events) {
    Json e = Json::object();
    e.set("kind", Json::str(ev.kind));
    e.set("param", Json::number(ev.param));
    e.set("state", state_json(ev.state));
    arr.push(std::move(e));
  }
  return arr;
}

// ---- analysis handlers; out == nullptr means validate only ----

Json run_simulate(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                  std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  Vec x0 = vec_field(a, "initial", where, S.state_dim);
  auto [t0, t1] = span_field(a, "t_span", where, 10.0);
  long samples = int_field(a, "samples", where, 201L);
  flow::IntegratorSettings settings = integrator_settings(a, where);
  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("simulate"));
  if (!out) return rep;

  settings.sample_times = linspace(t0, t1, samples);
  flow::Trajectory traj = flow::integrate(S.system, x0, t0, t1, settings);

  if (out->want_csv) {
    std::vector<std::string> header{"t"};
    for (int i = 0; i < S.state_dim; ++i) header.push_back("x" + std::to_string(i + 1));
    CsvTable csv(header);
    for (std::size_t k = 0; k < traj.params.size(); ++k) {
      std::vector<double> row{traj.params[k]};
      row.insert(row.end(), traj.states[k].begin(), traj.states[k].end());
      csv.add_row(row);
    }
    std::string p = out->path(idx, "trajectory", "csv");
    write_file(p, csv.dump());
    files->push_back(p);
  }
  rep.set("samples", Json::integer(static_cast<long long>(traj.params.size())));
  rep.set("terminated_by_event", Json::boolean(traj.terminated_by_event));
  rep.set("events", events_json(traj.events));
  rep.set("final_param", Json::number(traj.final_param()));
  rep.set("final_state", state_json(traj.final_state()));
  return rep;
}

Json exponent_json(const lyap::ExponentEstimate& est) {
  Json e = Json::object();
  e.set("value", Json::number(est.value));
  e.set("renormalizations", Json::integer(est.renormalizations));
  Json flags = Json::array();
  for (const auto& f : est.degeneracy_flags) flags.push(Json::str(f));
  e.set("degeneracy_flags", std::move(flags));
  return e;
}

Json run_lyapunov(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                  std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  Vec x0 = vec_field(a, "initial", where, S.state_dim);
  Vec xi0;
  if (a.contains("perturbation")) xi0 = vec_field(a, "perturbation", where, S.state_dim);
  else {
    xi0.resize(S.state_dim);
    for (int i = 0; i < S.state_dim; ++i) xi0[i] = 1.0 / (1.0 + 0.3 * i);
  }
  double horizon = num_field(a, "horizon", where, 100.0);
  double renorm_dt = num_field(a, "renorm_dt", where, 0.5);
  double tol = num_field(a, "tol", where, 0.05);
  lyap::SeminormFamily family = build_family(a, S, where);
  flow::IntegratorSettings settings = integrator_settings(a, where);

  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("lyapunov"));
  rep.set("seminorm", Json::str(family.description()));
  if (!out) return rep;

  lyap::ExponentEstimate est =
      lyap::lyapunov_exponent(S.system, x0, xi0, family, horizon, renorm_dt, settings);

  if (out->want_csv) {
    CsvTable csv({"t", "running_average"});
    for (const auto& [t, v] : est.convergence) csv.add_row({t, v});
    std::string p = out->path(idx, "convergence", "csv");
    write_file(p, csv.dump());
    files->push_back(p);
  }
  rep.set("exponent", exponent_json(est));
  double v = est.value;
  rep.set("verdict", Json::str(lyap::to_string(lyap::classify_global_stability({&v, 1}, tol))));
  rep.set("tol", Json::number(tol));
  return rep;
}

Json run_spectrum(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                  unsigned long seed, std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  Vec x0 = vec_field(a, "initial", where, S.state_dim);
  std::vector<Vec> frame = build_frame(a, S.state_dim, seed, where);
  double horizon = num_field(a, "horizon", where, 100.0);
  double renorm_dt = num_field(a, "renorm_dt", where, 0.5);
  double tol = num_field(a, "tol", where, 0.05);
  lyap::SeminormFamily family = build_family(a, S, where);
  flow::IntegratorSettings settings = integrator_settings(a, where);

  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("spectrum"));
  rep.set("seminorm", Json::str(family.description()));
  if (!out) return rep;

  lyap::SpectrumEstimate est =
      lyap::lyapunov_spectrum(S.system, x0, frame, family, horizon, renorm_dt, settings);

  if (out->want_csv) {
    CsvTable csv({"index", "exponent"});
    for (std::size_t k = 0; k < est.exponents.size(); ++k)
      csv.add_row({static_cast<double>(k), est.exponents[k]});
    std::string p = out->path(idx, "spectrum", "csv");
    write_file(p, csv.dump());
    files->push_back(p);

    std::vector<std::string> header{"t"};
    for (std::size_t k = 0; k < est.exponents.size(); ++k)
      header.push_back("lambda" + std::to_string(k + 1));
    CsvTable conv(header);
    for (std::size_t r = 0; r < est.times.size(); ++r) {
      std::vector<double> row{est.times[r]};
      row.insert(row.end(), est.convergence[r].begin(), est.convergence[r].end());
      conv.add_row(row);
    }
    std::string pc = out->path(idx, "convergence", "csv");
    write_file(pc, conv.dump());
    files->push_back(pc);
  }
  rep.set("exponents", Json::number_array(est.exponents.begin(), est.exponents.end()));
  rep.set("renormalizations", Json::integer(est.renormalizations));
  rep.set("verdict",
          Json::str(lyap::to_string(lyap::classify_global_stability(est.exponents, tol))));
  rep.set("tol", Json::number(tol));
  return rep;
}

Json eigenset_json(const num::ComplexEigenSet& s) {
  Json arr = Json::array();
  for (const auto& v : s.values) {
    Json e = Json::object();
    e.set("re", Json::number(v.real()));
    e.set("im", Json::number(v.imag()));
    arr.push(std::move(e));
  }
  return arr;
}

Json run_local_stability(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                         std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  if (!S.spray)
    throw ConfigError(where + ": local-stability needs a second-order system "
                              "(natural, lagrangian, or a second_order flow)json");
  Vec z0 = vec_field(a, "initial", where, S.state_dim);
  auto [t0, t1] = span_field(a, "t_span", where, 10.0);
  long samples = int_field(a, "samples", where, 51L);
  double tol = num_field(a, "tol", where, 1e-8);
  flow::IntegratorSettings settings = integrator_settings(a, where);

  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("local-stability"));
  if (!out) return rep;

  int n = S.config_dim;
  settings.sample_times = linspace(t0, t1, samples);
  flow::Trajectory traj = flow::integrate(S.system, z0, t0, t1, settings);

  // eigenvalue tracks of both operators: the deviation tensor P on TM and
  // the connection operator R~ on TTM (their spectra coincide, doubled,
  // exactly when the epsilon defect vanishes)
  std::vector<num::ComplexEigenSet> track_p, track_rt;
  for (const auto& s : traj.states) {
    std::span<const double> xs(s.data(), n), us(s.data() + n, n);
    track_p.push_back(num::eigenvalues(kcc::deviation_tensor_P(*S.spray, xs, us)));
    track_rt.push_back(num::eigenvalues(kcc::rtilde_operator(*S.spray, xs, us)));
  }
  kcc::LocalStability verdict = kcc::classify_local_stability(track_p, tol);
  kcc::LocalStability verdict_rt = kcc::classify_local_stability(track_rt, tol);

  if (out->want_csv) {
    auto dump_track = [&](const std::vector<num::ComplexEigenSet>& track, int count,
                          const std::string& name) {
      std::vector<std::string> header{"t"};
      for (int i = 0; i < count; ++i) {
        header.push_back("re" + std::to_string(i + 1));
        header.push_back("im" + std::to_string(i + 1));
      }
      CsvTable csv(header);
      for (std::size_t k = 0; k < traj.params.size(); ++k) {
        std::vector<double> row{traj.params[k]};
        for (const auto& ev : track[k].values) {
          row.push_back(ev.real());
          row.push_back(ev.imag());
        }
        csv.add_row(row);
      }
      std::string p = out->path(idx, name, "csv");
      write_file(p, csv.dump());
      files->push_back(p);
    };
    dump_track(track_p, n, "eigentrack");
    dump_track(track_rt, 2 * n, "rtilde_track");
  }

  std::span<const double> xs(z0.data(), n), us(z0.data() + n, n);
  kcc::EpsilonDefect eps = kcc::epsilon_defect(*S.spray, xs, us);

  rep.set("verdict", Json::str(kcc::to_string(verdict.verdict)));
  rep.set("mixed_complex", Json::boolean(verdict.mixed_complex));
  rep.set("max_real_part", Json::number(verdict.max_real_part));
  rep.set("rtilde_verdict", Json::str(kcc::to_string(verdict_rt.verdict)));
  rep.set("rtilde_mixed_complex", Json::boolean(verdict_rt.mixed_complex));
  rep.set("rtilde_max_real_part", Json::number(verdict_rt.max_real_part));
  rep.set("tol", Json::number(tol));
  rep.set("epsilon_defect_max", Json::number(eps.max_abs_dbar));
  rep.set("rtilde_eigenvalues_initial", eigenset_json(track_rt.front()));
  return rep;
}

Json run_jacobi_translate(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                          std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  if (!S.natural) throw ConfigError(where + ": jacobi-translate needs a natural system");
  int n = S.config_dim;
  Vec z0 = vec_field(a, "initial", where, 2 * n);
  double E = num_field(a, "energy", where);
  double C = num_field(a, "C", where, 2.0);
  auto [tau0, tau1] = span_field(a, "tau_span", where, 10.0);
  if (tau0 != 0.0) throw ConfigError(where + ".tau_span: must start at 0");
  long samples = int_field(a, "samples", where, 201L);
  bool diagnostics = !a.contains("diagnostics") || a.at("diagnostics").get<bool>();

  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("jacobi-translate"));
  if (!out) return rep;

  Vec x0(z0.begin(), z0.begin() + n), u0(z0.begin() + n, z0.end());
  double e_actual = lag::energy(*S.natural, x0, u0);
  if (std::abs(e_actual - E) > 1e-8 * (1.0 + std::abs(E)))
    throw ConfigError(where + ": initial conditions have energy " + std::to_string(e_actual) +
                      ", scenario says " + std::to_string(E));

  mj::JacobiTranslation jt(*S.natural, E, C);
  Vec v0 = jt.affine_velocity(x0, u0);
  mj::GeodesicRun run =
      mj::integrate_jacobi_geodesic(jt, x0, v0, tau1, linspace(0.0, tau1, samples), false, {});

  if (out->want_csv) {
    std::vector<std::string> header{"tau"};
    for (int i = 0; i < n; ++i) header.push_back("x" + std::to_string(i + 1));
    for (int i = 0; i < n; ++i) header.push_back("v" + std::to_string(i + 1));
    header.push_back("t");
    CsvTable csv(header);
    for (std::size_t k = 0; k < run.taus.size(); ++k) {
      std::vector<double> row{run.taus[k]};
      row.insert(row.end(), run.states[k].begin(), run.states[k].end());
      row.push_back(run.t_of_tau[k]);
      csv.add_row(row);
    }
    std::string p = out->path(idx, "geodesic", "csv");
    write_file(p, csv.dump());
    files->push_back(p);
  }

  rep.set("energy", Json::number(E));
  rep.set("C", Json::number(C));
  rep.set("boundary_hit", Json::boolean(run.boundary_hit));
  if (run.boundary_hit) rep.set("boundary_tau", Json::number(run.boundary_tau));
  rep.set("events", events_json(run.events));

  if (diagnostics) {
    mj::BoundaryDiagnostics diag = mj::boundary_diagnostics(jt, x0, u0, tau1);
    Json d = Json::object();
    d.set("applicable", Json::boolean(diag.applicable));
    d.set("fixed_point", Json::boolean(diag.fixed_point));
    d.set("boundary_hit", Json::boolean(diag.boundary_hit));
    if (diag.boundary_hit) d.set("hit_tau", Json::number(diag.hit_tau));
    Json rs = Json::array();
    for (const auto& [b, ricci] : diag.ricci_samples) {
      Json s = Json::object();
      s.set("boundary_value", Json::number(b));
      s.set("ricci_scalar", Json::number(ricci));
      rs.push(std::move(s));
    }
    d.set("ricci_samples", std::move(rs));
    Json fl = Json::array();
    for (const auto& f : diag.flags) fl.push(Json::str(f));
    d.set("flags", std::move(fl));
    rep.set("diagnostics", std::move(d));
  }
  return rep;
}

Json picture_json(const mj::PictureReport& p) {
  Json j = Json::object();
  j.set("applicable", Json::boolean(p.applicable));
  if (p.applicable) {
    j.set("exponent", exponent_json(p.exponent));
    j.set("global_verdict", Json::str(lyap::to_string(p.global_verdict)));
    j.set("local_verdict", Json::str(kcc::to_string(p.local.verdict)));
    j.set("mixed_complex", Json::boolean(p.local.mixed_complex));
    j.set("max_real_part", Json::number(p.local.max_real_part));
  }
  Json notes = Json::array();
  for (const auto& s : p.notes) notes.push(Json::str(s));
  j.set("notes", std::move(notes));
  return j;
}

Json run_compare(const json& a, const SystemSpec& S, const OutputCtx* out, int idx,
                 std::vector<std::string>* files) {
  std::string where = "analysis[" + std::to_string(idx) + "]";
  if (!S.natural) throw ConfigError(where + ": compare needs a natural system");
  int n = S.config_dim;
  Vec z0 = vec_field(a, "initial", where, 2 * n);
  double E = num_field(a, "energy", where);
  mj::CompareSettings cs;
  cs.horizon = num_field(a, "horizon", where, 100.0);
  cs.renorm_dt = num_field(a, "renorm_dt", where, 0.5);
  cs.verdict_tol = num_field(a, "verdict_tol", where, 0.05);
  cs.local_tol = num_field(a, "local_tol", where, 1e-8);
  cs.C = num_field(a, "C", where, 2.0);
  cs.track_span = num_field(a, "track_span", where, 10.0);
  cs.track_samples = static_cast<int>(int_field(a, "track_samples", where, 51L));
  if (a.contains("perturbation")) cs.xi0 = vec_field(a, "perturbation", where, 2 * n);

  Json rep = Json::object();
  rep.set("schema_version", Json::integer(1));
  rep.set("analysis", Json::str("compare"));
  if (!out) return rep;

  Vec x0(z0.begin(), z0.begin() + n), u0(z0.begin() + n, z0.end());
  mj::ComparisonReport cmp = mj::compare_stability(*S.natural, E, x0, u0, cs);

  if (out->want_csv) {
    auto dump_track = [&](const mj::PictureReport& p, const std::string& name) {
      if (p.eigen_track.empty()) return;
      std::vector<std::string> header{"t"};
      for (int i = 0; i < n; ++i) {
        header.push_back("re" + std::to_string(i + 1));
        header.push_back("im" + std::to_string(i + 1));
      }
      CsvTable csv(header);
      for (std::size_t k = 0; k < p.track_times.size(); ++k) {
        std::vector<double> row{p.track_times[k]};
        for (const auto& ev : p.eigen_track[k].values) {
          row.push_back(ev.real());
          row.push_back(ev.imag());
        }
        csv.add_row(row);
      }
      std::string p2 = out->path(idx, name, "csv");
      write_file(p2, csv.dump());
      files->push_back(p2);
    };
    dump_track(cmp.intrinsic, "intrinsic_track");
    dump_track(cmp.geodesic, "geodesic_track");

    auto dump_conv = [&](const lyap::ExponentEstimate& est, const std::string& name) {
      if (est.convergence.empty()) return;
      CsvTable csv({"t", "running_average"});
      for (const auto& [t, v] : est.convergence) csv.add_row({t, v});
      std::string p2 = out->path(idx, name, "csv");
      write_file(p2, csv.dump());
      files->push_back(p2);
    };
    dump_conv(cmp.intrinsic.exponent, "intrinsic_convergence");
    dump_conv(cmp.geodesic.exponent, "geodesic_convergence");
  }

  rep.set("n", Json::integer(cmp.n));
  rep.set("energy", Json::number(cmp.energy));
  rep.set("intrinsic", picture_json(cmp.intrinsic));
  rep.set("geodesic", picture_json(cmp.geodesic));
  if (cmp.shift_modes_valid) {
    Json sm = Json::array();
    sm.push(Json::number(cmp.shift_modes.first));
    sm.push(Json::number(cmp.shift_modes.second));
    rep.set("shift_mode_exponents", std::move(sm));
  } else {
    rep.set("shift_mode_exponents", Json::null());
  }
  rep.set("round_trip_error", Json::number(cmp.round_trip_error));
  rep.set("energy_excluded_directions", Json::integer(cmp.energy_excluded_count));
  Json pf = Json::array();
  for (const auto& v : cmp.energy_projected_frame) pf.push(state_json(v));
  rep.set("energy_projected_frame", std::move(pf));
  Json fl = Json::array();
  for (const auto& f : cmp.flags) fl.push(Json::str(f));
  rep.set("flags", std::move(fl));
  return rep;
}

Json dispatch(const std::string& type, const json& a, const SystemSpec& S, const OutputCtx* out,
              int idx, unsigned long seed, std::vector<std::string>* files) {
  if (type == "simulate") return run_simulate(a, S, out, idx, files);
  if (type == "lyapunov") return run_lyapunov(a, S, out, idx, files);
  if (type == "spectrum") return run_spectrum(a, S, out, idx, seed, files);
  if (type == "local-stability") return run_local_stability(a, S, out, idx, files);
  if (type == "jacobi-translate") return run_jacobi_translate(a, S, out, idx, files);
  if (type == "compare") return run_compare(a, S, out, idx, files);
  throw ConfigError("analysis[" + std::to_string(idx) + "].type: unknown analysis '" + type +
                    "'");
}

// ---- scenario-level plumbing ----

json load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read scenario file '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario parse error: " + std::string(e.what()));
  }
  if (!cfg.is_object()) throw ConfigError("scenario: top level must be an object");
  return cfg;
}

std::vector<json> analysis_list(const json& cfg) {
  const json& a = require(cfg, "analysis", "scenario");
  std::vector<json> out;
  if (a.is_array())
    for (const auto& e : a) out.push_back(e);
  else out.push_back(a);
  if (out.empty()) throw ConfigError("scenario.analysis: empty analysis list");
  return out;
}

Json error_json(const Error& e) {
  Json err = Json::object();
  err.set("schema_version", Json::integer(1));
  Json body = Json::object();
  body.set("kind", Json::str(e.kind()));
  body.set("message", Json::str(e.what()));
  err.set("error", std::move(body));
  return err;
}

int thread_cap(std::size_t jobs) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("GEOSTAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) throw ConfigError("GEOSTAB_THREADS must be a positive integer");
    cap = static_cast<int>(v);
  }
  return std::min<int>(cap, static_cast<int>(jobs));
}

}  // namespace

int run_scenario(const std::string& path, const std::string& output_dir_override) {
  json cfg;
  SystemSpec S;
  std::vector<json> analyses;
  OutputCtx out;
  unsigned long seed = 0;
  try {
    cfg = load_scenario(path);
    seed = cfg.contains("seed") ? cfg.at("seed").get<unsigned long>() : 0;
    S = build_system(require(cfg, "system", "scenario"));
    analyses = analysis_list(cfg);

    const json& o = require(cfg, "output", "scenario");
    std::string dir = output_dir_override.empty() ? str_field(o, "directory", "output") :
                                                    output_dir_override;
    out.dir = dir;
    out.prefix = str_field(o, "prefix", "output", std::string("scenario"));
    if (o.contains("formats")) {
      out.want_json = out.want_csv = false;
      for (const auto& f : o.at("formats")) {
        if (f == "json") out.want_json = true;
        else if (f == "csv") out.want_csv = true;
        else throw ConfigError("output.formats: expected 'json' or 'csv'");
      }
    }
    std::filesystem::create_directories(out.dir);
  } catch (const Error& e) {
    std::cerr << error_json(e).dump();
    return 2;
  }

  struct Outcome {
    int status = 0;  // 0 ok, 2 config, 3 numerical
    Json summary;
    std::vector<std::string> files;
  };
  std::vector<Outcome> results(analyses.size());

  auto run_one = [&](int i) {
    Outcome& r = results[i];
    std::string type;
    try {
      type = str_field(analyses[i], "type", "analysis[" + std::to_string(i) + "]");
      Json rep = dispatch(type, analyses[i], S, &out, i, seed, &r.files);
      if (out.want_json) {
        std::string p = out.path(i, type, "json");
        write_file(p, rep.dump());
        r.files.push_back(p);
      }
      r.summary = std::move(rep);
    } catch (const Error& e) {
      r.status = dynamic_cast<const ConfigError*>(&e) ? 2 : 3;
      Json err = error_json(e);
      err.set("analysis_index", Json::integer(i));
      if (!type.empty()) err.set("analysis", Json::str(type));
      std::string p = out.path(i, type.empty() ? "analysis" : type + "_error", "json");
      try {
        write_file(p, err.dump());
        r.files.push_back(p);
      } catch (const Error&) {
        // directory vanished mid-run; the summary still records the failure
      }
      r.summary = std::move(err);
    }
  };

  int workers = 1;
  try {
    workers = thread_cap(analyses.size());
  } catch (const Error& e) {
    std::cerr << error_json(e).dump();
    return 2;
  }
  if (workers <= 1) {
    for (std::size_t i = 0; i < analyses.size(); ++i) run_one(static_cast<int>(i));
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < analyses.size(); i = next.fetch_add(1))
          run_one(static_cast<int>(i));
      });
    for (auto& th : pool) th.join();
  }

  int exit_code = 0;
  Json summary = Json::object();
  summary.set("schema_version", Json::integer(1));
  summary.set("scenario", Json::str(path));
  Json list = Json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    Json entry = Json::object();
    entry.set("index", Json::integer(static_cast<long long>(i)));
    entry.set("status", Json::str(results[i].status == 0   ? "ok"
                                  : results[i].status == 2 ? "config-error"
                                                           : "numerical-error"));
    Json fs = Json::array();
    for (const auto& f : results[i].files)
      fs.push(Json::str(std::filesystem::path(f).filename().string()));
    entry.set("files", std::move(fs));
    entry.set("report", std::move(results[i].summary));
    list.push(std::move(entry));
    if (results[i].status == 2) exit_code = 2;
    else if (results[i].status == 3 && exit_code == 0) exit_code = 3;
  }
  summary.set("analyses", std::move(list));
  try {
    write_file((out.dir / (out.prefix + "_summary.json")).string(), summary.dump());
  } catch (const Error& e) {
    std::cerr << error_json(e).dump();
    return exit_code == 0 ? 3 : exit_code;
  }
  return exit_code;
}

int validate_scenario(const std::string& path) {
  try {
    json cfg = load_scenario(path);
    SystemSpec S = build_system(require(cfg, "system", "scenario"));
    std::vector<json> analyses = analysis_list(cfg);
    const json& o = require(cfg, "output", "scenario");
    str_field(o, "directory", "output");
    std::vector<std::string> files;
    for (std::size_t i = 0; i < analyses.size(); ++i) {
      std::string type = str_field(analyses[i], "type", "analysis[" + std::to_string(i) + "]");
      dispatch(type, analyses[i], S, nullptr, static_cast<int>(i), 0, &files);
    }
  } catch (const Error& e) {
    std::cerr << error_json(e).dump();
    return 2;
  }
  return 0;
}

int write_example_scenarios(const std::string& dir) {
  try {
    std::filesystem::create_directories(dir);
    auto emit = [&](const char* name, const char* text) {
      write_file((std::filesystem::path(dir) / name).string(), text);
    };
    emit("inverted-oscillator.json", R"json({
  "seed": 1,
  "system": {
    "type": "natural",
    "dimension": 1,
    "parameters": {"mu": 1.0},
    "kinetic": [["1"]],
    "potential": "-0.5*mu^2*x1^2"
  },
  "analysis": [
    {"type": "spectrum", "initial": [1.0, 1.0], "frame": "full", "horizon": 50.0,
     "renorm_dt": 0.5, "seminorm": {"type": "euclidean"}, "tol": 0.05},
    {"type": "lyapunov", "initial": [1.0, 1.0], "perturbation": [1.0, 0.7], "horizon": 50.0,
     "renorm_dt": 0.5, "seminorm": {"type": "custom", "metric": [["1/(x1^2+1)"]]}, "tol": 0.05},
    {"type": "local-stability", "initial": [1.0, 1.0], "t_span": [0.0, 5.0], "samples": 26},
    {"type": "compare", "energy": -0.5,
     "initial": [1.1276259652063807, 0.52109530549374738],
     "horizon": 200.0, "track_span": 5.0, "track_samples": 26}
  ],
  "output": {"directory": "out/inverted-oscillator", "prefix": "invosc",
             "formats": ["json", "csv"]}
}
)json");
    emit("radial-r2.json", R"json({
  "seed": 1,
  "system": {
    "type": "natural",
    "dimension": 2,
    "kinetic": "euclidean",
    "potential": "x1^2+x2^2"
  },
  "analysis": [
    {"type": "simulate",
     "initial": [0.92387953251128674, 0.0, 0.0, 0.54119610014619701],
     "t_span": [0.0, 10.0], "samples": 201},
    {"type": "jacobi-translate", "energy": 1.0, "C": 2.0,
     "initial": [0.0, 0.0, 1.4142135623730951, 0.0],
     "tau_span": [0.0, 5.0], "samples": 201, "diagnostics": true},
    {"type": "compare", "energy": 1.0,
     "initial": [0.92387953251128674, 0.0, 0.0, 0.54119610014619701],
     "horizon": 50.0, "track_span": 5.0, "track_samples": 26}
  ],
  "output": {"directory": "out/radial-r2", "prefix": "radial", "formats": ["json", "csv"]}
}
)json");
    emit("vplus-vminus.json", R"json({
  "seed": 1,
  "description": "V_plus branch of the paired potentials; flip the sign of the step term for V_minus - both map to the same Jacobi manifold inside r < 1",
  "system": {
    "type": "natural",
    "dimension": 2,
    "kinetic": "euclidean",
    "potential": "2*(x1^2+x2^2) - (x1^2+x2^2)^2 + 2*step(x1^2+x2^2-1)*(x1^2+x2^2-1)^2"
  },
  "analysis": [
    {"type": "jacobi-translate", "energy": 1.0, "C": 2.0,
     "initial": [0.3, 0.0, 0.0, 1.2869343417595164],
     "tau_span": [0.0, 5.0], "samples": 201, "diagnostics": true},
    {"type": "local-stability", "initial": [1.2, 0.0, 0.1, 0.1],
     "t_span": [0.0, 1.0], "samples": 11}
  ],
  "output": {"directory": "out/vplus-vminus", "prefix": "vpm", "formats": ["json", "csv"]}
}
)json");
    emit("sphere-geodesic.json", R"json({
  "seed": 1,
  "system": {
    "type": "natural",
    "dimension": 2,
    "kinetic": [["1", "0"], ["0", "sin(x1)^2"]],
    "potential": "0"
  },
  "analysis": [
    {"type": "simulate", "initial": [1.5707963267948966, 0.0, 0.0, 1.0],
     "t_span": [0.0, 6.283185307179586], "samples": 201},
    {"type": "local-stability", "initial": [1.5707963267948966, 0.0, 0.0, 1.0],
     "t_span": [0.0, 3.141592653589793], "samples": 26},
    {"type": "spectrum", "initial": [1.5707963267948966, 0.0, 0.0, 1.0], "frame": "full",
     "horizon": 100.0, "renorm_dt": 0.5, "seminorm": {"type": "euclidean"}, "tol": 0.05}
  ],
  "output": {"directory": "out/sphere-geodesic", "prefix": "sphere", "formats": ["json", "csv"]}
}
)json");
  } catch (const Error& e) {
    std::cerr << error_json(e).dump();
    return 2;
  }
  return 0;
}

}  // namespace geostab::cli
