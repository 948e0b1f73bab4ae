#include "geostab/maupertuis.hpp"

#include <algorithm>
#include <cmath>

#include "geostab/derive.hpp"

namespace geostab::mj {

using expr::BinaryOp;
using expr::Expression;
using expr::UnaryOp;
using num::D1;

JacobiTranslation::JacobiTranslation(NaturalLagrangian nat, double E, double C)
    : nat_(std::move(nat)), E_(E), C_(C) {
  if (!(C_ > 0.0)) throw ConfigError("conformal constant C must be positive");
  auto table = nat_.kinetic().table();
  b_ = Expression::binary(BinaryOp::Sub, Expression::constant(E_, table), nat_.potential());
  Expression sigma2 = Expression::binary(
      BinaryOp::Mul, Expression::constant(C_, table), Expression::unary(UnaryOp::Abs, b_));
  gE_ = nat_.kinetic().conformally_scaled(sigma2);
}

double JacobiTranslation::boundary_value(std::span<const double> x) const {
  std::vector<double> buf;
  b_.table()->fill(x, buf);
  return b_.eval<double>(buf);
}

double JacobiTranslation::dt_dtau(std::span<const double> x) const {
  double b = boundary_value(x);
  if (std::abs(b) <= 1e-10)
    throw BoundaryPoint("|E - V| = " + std::to_string(std::abs(b)) + " at queried point");
  return 1.0 / (std::sqrt(2.0 * C_) * std::abs(b));
}

Vec JacobiTranslation::affine_velocity(std::span<const double> x,
                                       std::span<const double> u) const {
  double s = dt_dtau(x);
  Vec v(u.begin(), u.end());
  for (double& c : v) c *= s;
  return v;
}

Matrix jacobi_metric(const NaturalLagrangian& nat, double E, double C,
                     std::span<const double> x) {
  double b = E - nat.potential_at<double>(x);
  if (std::abs(b) <= 1e-10)
    throw BoundaryPoint("|E - V| = " + std::to_string(std::abs(b)) + " at queried point");
  Matrix k = nat.kinetic().eval_matrix(x);
  return (C * std::abs(b)) * k;
}

double time_reparametrization(const NaturalLagrangian& nat, double E, double C,
                              std::span<const double> x) {
  double b = E - nat.potential_at<double>(x);
  if (std::abs(b) <= 1e-10)
    throw BoundaryPoint("|E - V| = " + std::to_string(std::abs(b)) + " at queried point");
  return 1.0 / (std::sqrt(2.0 * C) * std::abs(b));
}

flow::VectorFlowSystem geodesic_flow(const geom::MetricField& g) {
  return kcc::semispray_flow(kcc::geodesic_spray(g));
}

GeodesicRun integrate_jacobi_geodesic(const JacobiTranslation& jt, Vec x0, Vec v0,
                                      double tau_end, const std::vector<double>& sample_taus,
                                      bool ricci_probes,
                                      std::optional<double> stop_at_lagrangian_time) {
  int n = jt.source().dim();
  const geom::MetricField& gE = jt.metric();
  double band = jt.boundary_band();

  flow::detail::Rhs rhs = [&, n](double, std::span<const double> z, std::span<double> dz) {
    std::span<const double> x = z.subspan(0, n);
    std::span<const double> v = z.subspan(n, n);
    std::vector<double> gamma = geom::christoffel(gE, x);
    for (int a = 0; a < n; ++a) {
      dz[a] = v[a];
      double s = 0.0;
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) s += gamma[(a * n + b) * n + c] * v[b] * v[c];
      dz[n + a] = -s;
    }
    dz[2 * n] = jt.dt_dtau(x);
  };

  flow::IntegratorSettings settings;
  settings.sample_times = sample_taus;
  std::vector<flow::EventSpec> events;
  events.push_back({"boundary",
                    [&jt, n, band](double, std::span<const double> z) {
                      return std::abs(jt.boundary_value(z.subspan(0, n))) - band;
                    },
                    -1, true});
  if (ricci_probes) {
    for (double thr : {1e-1, 1e-2, 1e-3}) {
      events.push_back({"ricci-probe-" + std::to_string(thr),
                        [&jt, n, thr](double, std::span<const double> z) {
                          return std::abs(jt.boundary_value(z.subspan(0, n))) - thr;
                        },
                        -1, false});
    }
  }
  if (stop_at_lagrangian_time) {
    double t_stop = *stop_at_lagrangian_time;
    events.push_back({"lagrangian-time-reached",
                      [t_stop, n](double, std::span<const double> z) { return z[2 * n] - t_stop; },
                      +1, true});
  }
  settings.events = events;

  Vec z0(2 * n + 1, 0.0);
  std::copy(x0.begin(), x0.end(), z0.begin());
  std::copy(v0.begin(), v0.end(), z0.begin() + n);

  GeodesicRun run;
  flow::detail::DriverHooks hooks;
  hooks.sample_times = sample_taus;
  hooks.record_steps = sample_taus.empty();
  hooks.record = [&](double tau, std::span<const double> z) {
    run.taus.push_back(tau);
    run.states.emplace_back(z.begin(), z.begin() + 2 * n);
    run.t_of_tau.push_back(z[2 * n]);
  };
  hooks.events = &settings.events;
  hooks.on_event = [&](const flow::EventRecord& rec) {
    run.events.push_back(rec);
    if (rec.kind == "boundary") {
      run.boundary_hit = true;
      run.boundary_tau = rec.param;
    }
  };
  bool terminated = false;
  hooks.terminated = &terminated;
  flow::detail::integrate_driver(rhs, 2 * n + 1, std::move(z0), 0.0, tau_end, settings, hooks);
  return run;
}

flow::Trajectory translate_to_geodesic(const JacobiTranslation& jt,
                                       const flow::Trajectory& lagrangian_traj) {
  int n = jt.source().dim();
  if (lagrangian_traj.dim != 2 * n || lagrangian_traj.states.empty())
    throw ConfigError("translation needs a sampled (x,u) trajectory");
  const NaturalLagrangian& nat = jt.source();
  double C = jt.conformal_constant();
  double band = jt.boundary_band();

  flow::VectorFlowSystem sys = lag::semispray(nat);
  const num::VectorMap& base = sys.rhs();
  flow::detail::Rhs rhs = [&, n](double, std::span<const double> z, std::span<double> dz) {
    base.eval(z.subspan(0, 2 * n), dz.subspan(0, 2 * n));
    double b = jt.boundary_value(z.subspan(0, n));
    dz[2 * n] = std::sqrt(2.0 * C) * std::abs(b);  // dtau/dt
  };

  flow::IntegratorSettings settings;
  settings.events.push_back({"boundary",
                             [&jt, n, band](double, std::span<const double> z) {
                               return std::abs(jt.boundary_value(z.subspan(0, n))) - band;
                             },
                             -1, true});

  Vec z0(2 * n + 1, 0.0);
  std::copy(lagrangian_traj.states.front().begin(), lagrangian_traj.states.front().end(),
            z0.begin());

  flow::Trajectory out;
  out.param_name = "tau";
  out.dim = 2 * n;
  flow::detail::DriverHooks hooks;
  hooks.sample_times = lagrangian_traj.params;
  hooks.record = [&](double, std::span<const double> z) {
    // samples inside the boundary band have no geodesic-side velocity; the
    // translated curve starts at the first sample clear of the band
    if (std::abs(jt.boundary_value(z.subspan(0, n))) <= jt.boundary_band()) return;
    out.params.push_back(z[2 * n]);
    Vec state(2 * n);
    double s = jt.dt_dtau(z.subspan(0, n));
    for (int i = 0; i < n; ++i) {
      state[i] = z[i];
      state[n + i] = z[n + i] * s;  // v = u * dt/dtau
    }
    out.states.push_back(std::move(state));
  };
  hooks.events = &settings.events;
  hooks.on_event = [&](const flow::EventRecord& rec) {
    out.events.push_back(rec);
  };
  hooks.terminated = &out.terminated_by_event;
  flow::detail::integrate_driver(rhs, 2 * n + 1, std::move(z0), lagrangian_traj.params.front(),
                                 lagrangian_traj.params.back(), settings, hooks);
  if (out.states.empty())
    throw BoundaryPoint("trajectory never leaves the Jacobi boundary band");
  return out;
}

flow::Trajectory translate_trajectory(const JacobiTranslation& jt,
                                      const flow::Trajectory& geodesic) {
  int n = jt.source().dim();
  if (geodesic.dim != 2 * n || geodesic.states.empty())
    throw ConfigError("translation needs a sampled (x,v) geodesic");
  Vec x0(geodesic.states.front().begin(), geodesic.states.front().begin() + n);
  Vec v0(geodesic.states.front().begin() + n, geodesic.states.front().end());
  double tau_span = geodesic.params.back() - geodesic.params.front();
  std::vector<double> taus;
  for (double tau : geodesic.params) taus.push_back(tau - geodesic.params.front());
  GeodesicRun run = integrate_jacobi_geodesic(jt, x0, v0, tau_span, taus, false, {});

  flow::Trajectory out;
  out.param_name = "t";
  out.dim = 2 * n;
  for (std::size_t k = 0; k < run.taus.size(); ++k) {
    const Vec& s = run.states[k];
    double dt_dtau = jt.dt_dtau(std::span<const double>(s).subspan(0, n));
    Vec state(2 * n);
    for (int i = 0; i < n; ++i) {
      state[i] = s[i];
      state[n + i] = s[n + i] / dt_dtau;  // u = v / (dt/dtau)
    }
    out.params.push_back(run.t_of_tau[k]);
    out.states.push_back(std::move(state));
  }
  for (const auto& ev : run.events) {
    if (ev.kind != "boundary") continue;
    // express the abort point in Lagrangian time (last quadrature component)
    flow::EventRecord rec;
    rec.kind = ev.kind;
    rec.param = ev.state.back();
    rec.state.assign(ev.state.begin(), ev.state.begin() + 2 * n);
    out.events.push_back(std::move(rec));
    out.terminated_by_event = true;
  }
  return out;
}

flow::Trajectory jacobi_deviation(const geom::MetricField& g, const flow::Trajectory& geodesic,
                                  Vec xi0, Vec xi_prime0) {
  int n = g.dim();
  if (geodesic.dim != 2 * n || geodesic.states.empty())
    throw ConfigError("deviation integration needs a sampled (x,v) geodesic");
  Vec x0(geodesic.states.front().begin(), geodesic.states.front().begin() + n);
  Vec v0(geodesic.states.front().begin() + n, geodesic.states.front().end());
  flow::IntegratorSettings settings;
  return lag::detail::covariant_deviation(g, nullptr, x0, v0, std::move(xi0),
                                          std::move(xi_prime0), geodesic.params.front(),
                                          geodesic.params.back(), geodesic.params, settings);
}

// ---- parallel frame split ----

namespace {

// orthonormal frame with e_0 along v0
std::vector<Vec> initial_frame(const Matrix& g0, const Vec& v0) {
  int n = static_cast<int>(v0.size());
  std::vector<Vec> frame;
  frame.push_back(v0);
  for (int axis = 0; axis < n && static_cast<int>(frame.size()) < n; ++axis) {
    Vec e(n, 0.0);
    e[axis] = 1.0;
    std::vector<Vec> trial = frame;
    trial.push_back(e);
    try {
      auto gs = num::weighted_gram_schmidt(trial, g0);
      frame = std::move(gs.frame);
    } catch (const RankDeficient&) {
      // axis lies in the current span; try the next one
    }
  }
  if (static_cast<int>(frame.size()) != n)
    throw RankDeficient("could not complete an orthonormal frame along the geodesic");
  auto gs = num::weighted_gram_schmidt(frame, g0);
  return gs.frame;
}

// frame components of the deviation operator P = -R(., v)v
Matrix reduced_matrix(const geom::MetricField& g, std::span<const double> x,
                      std::span<const double> v, const std::vector<Vec>& frame) {
  int n = g.dim();
  std::vector<double> R = geom::riemann(g, x);
  Matrix P(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) s -= R[((a * n + p) * n + b) * n + q] * v[p] * v[q];
      P(a, b) = s;
    }
  Matrix gx = g.eval_matrix(x);
  Matrix K(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        double Pe = 0.0;
        for (int j = 0; j < n; ++j) Pe += P(i, j) * frame[b][j];
        for (int k = 0; k < n; ++k) s += frame[a][k] * gx(k, i) * Pe;
      }
      K(a, b) = s;
    }
  return K;
}

}  // namespace

FrameSplit parallel_frame_split(const geom::MetricField& g, const flow::Trajectory& geodesic) {
  int n = g.dim();
  if (geodesic.dim != 2 * n || geodesic.states.size() < 2)
    throw ConfigError("frame split needs a sampled (x,v) geodesic");
  Vec x0(geodesic.states.front().begin(), geodesic.states.front().begin() + n);
  Vec v0(geodesic.states.front().begin() + n, geodesic.states.front().end());

  FrameSplit split;
  split.metric_ = g;
  split.x0_ = x0;
  split.v0_ = v0;
  split.tau_end_ = geodesic.params.back();

  Matrix g0 = g.eval_matrix(x0);
  std::vector<Vec> frame0 = initial_frame(g0, v0);

  // joint integration: (x, v, e_0..e_{n-1})
  int dim = 2 * n + n * n;
  flow::detail::Rhs rhs = [&g, n](double, std::span<const double> z, std::span<double> dz) {
    std::span<const double> x = z.subspan(0, n);
    std::span<const double> v = z.subspan(n, n);
    std::vector<double> gamma = geom::christoffel(g, x);
    auto cov = [&](std::span<const double> w, std::span<double> dw) {
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) s += gamma[(a * n + b) * n + c] * v[b] * w[c];
        dw[a] = -s;
      }
    };
    for (int a = 0; a < n; ++a) dz[a] = v[a];
    cov(v, dz.subspan(n, n));
    for (int k = 0; k < n; ++k) cov(z.subspan(2 * n + k * n, n), dz.subspan(2 * n + k * n, n));
  };

  Vec z0(dim, 0.0);
  std::copy(x0.begin(), x0.end(), z0.begin());
  std::copy(v0.begin(), v0.end(), z0.begin() + n);
  for (int k = 0; k < n; ++k)
    std::copy(frame0[k].begin(), frame0[k].end(), z0.begin() + 2 * n + k * n);

  flow::IntegratorSettings settings;
  flow::detail::DriverHooks hooks;
  hooks.sample_times = geodesic.params;
  hooks.record = [&](double tau, std::span<const double> z) {
    split.taus.push_back(tau);
    std::vector<Vec> fr(n);
    for (int k = 0; k < n; ++k)
      fr[k].assign(z.begin() + 2 * n + k * n, z.begin() + 2 * n + (k + 1) * n);
    split.reduced_operator.push_back(
        reduced_matrix(g, z.subspan(0, n), z.subspan(n, n), fr));
    split.frames.push_back(std::move(fr));
  };
  flow::detail::integrate_driver(rhs, dim, std::move(z0), geodesic.params.front(),
                                 geodesic.params.back(), settings, hooks);
  return split;
}

std::vector<std::pair<double, Vec>> FrameSplit::integrate_reduced(Vec xi_frame0,
                                                                  Vec xidot_frame0) const {
  int n = metric_.dim();
  const geom::MetricField& g = metric_;
  Matrix g0 = g.eval_matrix(x0_);
  std::vector<Vec> frame0 = initial_frame(g0, v0_);

  int dim = 2 * n + n * n + 2 * n;  // x, v, frame, xi, xidot
  flow::detail::Rhs rhs = [&g, n](double, std::span<const double> z, std::span<double> dz) {
    std::span<const double> x = z.subspan(0, n);
    std::span<const double> v = z.subspan(n, n);
    std::vector<double> gamma = geom::christoffel(g, x);
    auto cov = [&](std::span<const double> w, std::span<double> dw) {
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) s += gamma[(a * n + b) * n + c] * v[b] * w[c];
        dw[a] = -s;
      }
    };
    for (int a = 0; a < n; ++a) dz[a] = v[a];
    cov(v, dz.subspan(n, n));
    std::vector<Vec> fr(n);
    for (int k = 0; k < n; ++k) {
      cov(z.subspan(2 * n + k * n, n), dz.subspan(2 * n + k * n, n));
      fr[k].assign(z.begin() + 2 * n + k * n, z.begin() + 2 * n + (k + 1) * n);
    }
    Matrix K = reduced_matrix(g, x, v, fr);
    int off = 2 * n + n * n;
    for (int a = 0; a < n; ++a) {
      dz[off + a] = z[off + n + a];
      double s = 0.0;
      for (int b = 0; b < n; ++b) s += K(a, b) * z[off + b];
      dz[off + n + a] = s;
    }
  };

  Vec z0(dim, 0.0);
  std::copy(x0_.begin(), x0_.end(), z0.begin());
  std::copy(v0_.begin(), v0_.end(), z0.begin() + n);
  for (int k = 0; k < n; ++k)
    std::copy(frame0[k].begin(), frame0[k].end(), z0.begin() + 2 * n + k * n);
  std::copy(xi_frame0.begin(), xi_frame0.end(), z0.begin() + 2 * n + n * n);
  std::copy(xidot_frame0.begin(), xidot_frame0.end(), z0.begin() + 2 * n + n * n + n);

  std::vector<std::pair<double, Vec>> out;
  flow::IntegratorSettings settings;
  flow::detail::DriverHooks hooks;
  hooks.sample_times = taus;
  hooks.record = [&](double tau, std::span<const double> z) {
    out.emplace_back(tau, Vec(z.begin() + 2 * n + n * n, z.begin() + 2 * n + n * n + n));
  };
  flow::detail::integrate_driver(rhs, dim, std::move(z0), taus.front(), taus.back(), settings,
                                 hooks);
  return out;
}

std::pair<double, double> shift_mode_exponents(const geom::MetricField& g, Vec x0, Vec v0,
                                               double horizon, double renorm_dt) {
  int n = g.dim();
  flow::VectorFlowSystem sys = geodesic_flow(g);
  Vec z0(2 * n);
  std::copy(x0.begin(), x0.end(), z0.begin());
  std::copy(v0.begin(), v0.end(), z0.begin() + n);
  Vec flow_dir = sys.eval(z0);
  Vec vel_shift(2 * n, 0.0);
  std::copy(v0.begin(), v0.end(), vel_shift.begin() + n);
  auto spec = lyap::lyapunov_spectrum(sys, z0, {flow_dir, vel_shift},
                                      lyap::SeminormFamily::euclidean(), horizon, renorm_dt);
  return {spec.exponents[0], spec.exponents[1]};
}

BoundaryDiagnostics boundary_diagnostics(const JacobiTranslation& jt, Vec x0, Vec u0,
                                         double tau_horizon) {
  BoundaryDiagnostics diag;
  const NaturalLagrangian& nat = jt.source();
  int n = nat.dim();

  Matrix k0 = nat.kinetic().eval_matrix(x0);
  double speed2 = std::abs(num::metric_dot(k0, u0, u0));
  double gradV = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = num::derive(nat.potential(), x0, i);
    gradV = std::max(gradV, std::abs(d));
  }
  if (speed2 < 1e-20 && gradV < 1e-10) {
    diag.applicable = false;
    diag.fixed_point = true;
    diag.flags.push_back("FixedPointUntranslatable");
    return diag;
  }
  if (std::abs(jt.boundary_value(x0)) <= jt.boundary_band()) {
    diag.applicable = false;
    diag.flags.push_back("starts-on-boundary");
    return diag;
  }

  Vec v0 = jt.affine_velocity(x0, u0);
  GeodesicRun run = integrate_jacobi_geodesic(jt, x0, v0, tau_horizon, {}, true, {});
  diag.boundary_hit = run.boundary_hit;
  diag.hit_tau = run.boundary_tau;
  if (run.boundary_hit) diag.flags.push_back("boundary-hit");

  for (double thr : {1e-1, 1e-2, 1e-3}) {
    for (const auto& ev : run.events) {
      if (ev.kind != "ricci-probe-" + std::to_string(thr)) continue;
      std::span<const double> x(ev.state.data(), n);
      double b = std::abs(jt.boundary_value(x));
      diag.ricci_samples.emplace_back(b, geom::ricci_scalar(jt.metric(), x));
      break;  // first approach only
    }
  }
  return diag;
}

// ---- full comparison ----

namespace {

Vec generic_perturbation(int dim) {
  Vec xi(dim);
  for (int i = 0; i < dim; ++i) xi[i] = 1.0 / (1.0 + 0.3 * i);
  return xi;
}

std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = a + (b - a) * i / (count - 1);
  return out;
}

}  // namespace

ComparisonReport compare_stability(const NaturalLagrangian& nat, double E, Vec x0, Vec u0,
                                   const CompareSettings& cs) {
  int n = nat.dim();
  ComparisonReport rep;
  rep.n = n;
  rep.energy = E;

  double e_actual = lag::energy(nat, x0, u0);
  if (std::abs(e_actual - E) > 1e-8 * (1.0 + std::abs(E)))
    throw ConfigError("initial conditions have energy " + std::to_string(e_actual) +
                      ", expected " + std::to_string(E));

  if (n == 1) rep.flags.push_back("one-dimensional");
  bool indefinite = nat.kinetic().signature() == geom::Signature::Indefinite;
  if (indefinite) rep.flags.push_back("indefinite-kinetic-metric");

  Vec z0(2 * n);
  std::copy(x0.begin(), x0.end(), z0.begin());
  std::copy(u0.begin(), u0.end(), z0.begin() + n);
  Vec xi0 = cs.xi0 ? *cs.xi0 : generic_perturbation(2 * n);

  // ---- intrinsic picture ----
  flow::VectorFlowSystem el = lag::semispray(nat);
  {
    lyap::SeminormFamily family = indefinite
                                      ? lyap::SeminormFamily::euclidean()
                                      : lyap::SeminormFamily::vertical_lift(nat.kinetic());
    rep.intrinsic.exponent =
        lyap::lyapunov_exponent(el, z0, xi0, family, cs.horizon, cs.renorm_dt);
    double v = rep.intrinsic.exponent.value;
    rep.intrinsic.global_verdict = lyap::classify_global_stability({&v, 1}, cs.verdict_tol);

    flow::IntegratorSettings is;
    is.sample_times = linspace(0.0, cs.track_span, cs.track_samples);
    flow::Trajectory track = flow::integrate(el, z0, 0.0, cs.track_span, is);
    rep.intrinsic.track_times = track.params;
    for (const auto& s : track.states) {
      std::span<const double> xs(s.data(), n), us(s.data() + n, n);
      rep.intrinsic.eigen_track.push_back(
          num::eigenvalues(lag::perturbation_operator_natural(nat, xs, us)));
    }
    rep.intrinsic.local = kcc::classify_local_stability(rep.intrinsic.eigen_track, cs.local_tol);
  }

  // ---- energy-changing perturbation directions ----
  {
    const geom::MetricField& k = nat.kinetic();
    const expr::Expression& V = nat.potential();
    auto efun = [&]<class T>(std::span<const T> z) -> T {
      std::span<const T> x = z.subspan(0, n);
      std::span<const T> u = z.subspan(n, n);
      std::vector<T> kx = k.eval(x);
      T e(0.0);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) e = e + 0.5 * kx[a * n + b] * u[a] * u[b];
      std::vector<T> buf;
      V.table()->fill(x, buf);
      return e + V.eval<T>(buf);
    };
    Vec dE(2 * n);
    for (int i = 0; i < 2 * n; ++i)
      dE[i] = num::partial1([&](std::span<const D1> z) { return efun(z); }, z0, i);
    double dE2 = num::dot(dE, dE);
    double scale = std::sqrt(dE2);
    for (int i = 0; i < 2 * n; ++i) {
      Vec e(2 * n, 0.0);
      e[i] = 1.0;
      if (std::abs(dE[i]) > 1e-9 * std::max(1.0, scale)) ++rep.energy_excluded_count;
      if (dE2 > 0.0)
        for (int j = 0; j < 2 * n; ++j) e[j] -= dE[i] * dE[j] / dE2;
      rep.energy_projected_frame.push_back(std::move(e));
    }
  }

  // ---- geodesic picture ----
  JacobiTranslation jt(nat, E, cs.C);
  BoundaryDiagnostics diag = boundary_diagnostics(jt, x0, u0, cs.horizon);
  for (const auto& f : diag.flags)
    if (std::find(rep.flags.begin(), rep.flags.end(), f) == rep.flags.end())
      rep.flags.push_back(f);

  if (!diag.applicable) {
    rep.geodesic.applicable = false;
    rep.geodesic.notes.push_back(diag.fixed_point ? "fixed point is not translatable"
                                                  : "initial data on the Jacobi boundary");
    return rep;
  }
  if (indefinite) rep.geodesic.notes.push_back("indefinite kinetic metric: diagnostics only");

  Vec v0 = jt.affine_velocity(x0, u0);
  Vec zg0(2 * n);
  std::copy(x0.begin(), x0.end(), zg0.begin());
  std::copy(v0.begin(), v0.end(), zg0.begin() + n);

  double geo_horizon = cs.horizon;
  if (diag.boundary_hit) {
    geo_horizon = 0.95 * diag.hit_tau;
    rep.geodesic.notes.push_back("horizon truncated by boundary hit");
  }

  flow::VectorFlowSystem geo = geodesic_flow(jt.metric());
  if (!indefinite && geo_horizon > cs.renorm_dt) {
    Vec xig0(2 * n);
    double s = jt.dt_dtau(x0);
    for (int i = 0; i < n; ++i) {
      xig0[i] = xi0[i];
      xig0[n + i] = xi0[n + i] * s;
    }
    rep.geodesic.exponent = lyap::lyapunov_exponent(
        geo, zg0, xig0, lyap::SeminormFamily::vertical_lift(jt.metric()), geo_horizon,
        cs.renorm_dt);
    double v = rep.geodesic.exponent.value;
    rep.geodesic.global_verdict = lyap::classify_global_stability({&v, 1}, cs.verdict_tol);

    rep.shift_modes = shift_mode_exponents(jt.metric(), x0, v0,
                                           std::min(geo_horizon, 50.0), cs.renorm_dt);
    rep.shift_modes_valid = true;
  } else if (!indefinite) {
    rep.geodesic.notes.push_back("horizon too short for exponent estimation");
  }

  {
    double span = std::min(geo_horizon, cs.track_span);
    GeodesicRun run = integrate_jacobi_geodesic(jt, x0, v0, span,
                                                linspace(0.0, span, cs.track_samples), false, {});
    rep.geodesic.track_times = run.taus;
    for (const auto& s : run.states) {
      std::span<const double> xs(s.data(), n), vs(s.data() + n, n);
      std::vector<double> R = geom::riemann(jt.metric(), xs);
      Matrix P(n, n);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double acc = 0.0;
          for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
              acc -= R[((a * n + p) * n + b) * n + q] * vs[p] * vs[q];
          P(a, b) = acc;
        }
      rep.geodesic.eigen_track.push_back(num::eigenvalues(P));
    }
    rep.geodesic.local = kcc::classify_local_stability(rep.geodesic.eigen_track, cs.local_tol);
  }

  // ---- round trip ----
  if (!diag.boundary_hit) {
    flow::IntegratorSettings is;
    is.sample_times = linspace(0.0, cs.track_span, cs.track_samples);
    flow::Trajectory el_traj = flow::integrate(el, z0, 0.0, cs.track_span, is);
    flow::Trajectory geo_traj = translate_to_geodesic(jt, el_traj);
    flow::Trajectory back = translate_trajectory(jt, geo_traj);
    flow::IntegratorSettings is2;
    is2.sample_times = back.params;
    flow::Trajectory el_at = flow::integrate(el, z0, 0.0, back.params.back() + 1e-9, is2);
    double err = 0.0;
    for (std::size_t kk = 0; kk < back.params.size(); ++kk)
      for (int i = 0; i < n; ++i)
        err = std::max(err, std::abs(back.states[kk][i] - el_at.states[kk][i]));
    rep.round_trip_error = err;
  }

  return rep;
}

}  // namespace geostab::mj
