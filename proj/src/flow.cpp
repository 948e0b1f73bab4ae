#include "geostab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geostab::flow {

VectorFlowSystem::VectorFlowSystem(num::MapPtr rhs, int second_order_config_dim)
    : rhs_(std::move(rhs)), config_dim_(second_order_config_dim) {
  if (rhs_ && rhs_->in_dim() != rhs_->out_dim())
    throw ConfigError("flow right-hand side must map R^N to R^N");
  if (config_dim_ > 0 && rhs_->out_dim() != 2 * config_dim_)
    throw ConfigError("second-order flow must have state dimension 2n");
}

VectorFlowSystem VectorFlowSystem::from_expressions(std::vector<expr::Expression> components,
                                                    int second_order_config_dim) {
  if (components.empty()) throw ConfigError("flow needs at least one component");
  auto comps = std::make_shared<std::vector<expr::Expression>>(std::move(components));
  auto table = (*comps)[0].table();
  int N = static_cast<int>(comps->size());
  for (const auto& c : *comps)
    if (c.table() != table)
      throw ConfigError("flow components must share one symbol table");
  if (table->free_count() != N)
    throw ConfigError("flow components must be defined over exactly N state symbols");
  auto f = [comps, table]<class T>(std::span<const T> in, std::span<T> out) {
    std::vector<T> buf;
    table->fill(in, buf);
    for (std::size_t i = 0; i < comps->size(); ++i)
      out[i] = (*comps)[i].template eval<T>(buf);
  };
  return VectorFlowSystem(num::make_map(N, N, std::move(f)), second_order_config_dim);
}

VectorFlowSystem lift_second_order(int n, std::vector<expr::Expression> accel) {
  if (static_cast<int>(accel.size()) != n)
    throw ConfigError("lift_second_order: need n acceleration components");
  auto table = accel[0].table();
  if (table->free_count() != 2 * n)
    throw ConfigError("lift_second_order: accelerations must be over (x,u) symbols");
  std::vector<expr::Expression> comps;
  comps.reserve(2 * n);
  int u0 = -1;  // index of u1 among free slots; free symbols are declared x-first
  int seen_free = 0;
  for (int i = 0; i < table->size() && u0 < 0; ++i) {
    if (!table->is_parameter(i)) {
      if (seen_free == n) u0 = i;
      ++seen_free;
    }
  }
  for (int a = 0; a < n; ++a)
    comps.push_back(expr::Expression::symbol(u0 + a, table));
  for (auto& e : accel) comps.push_back(std::move(e));
  return VectorFlowSystem::from_expressions(std::move(comps), n);
}

// ---- Dormand-Prince 5(4) with FSAL ----

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Stepper {
  const detail::Rhs& rhs;
  int n;
  Vec k2, k3, k4, k5, k6, ytmp;

  explicit Stepper(const detail::Rhs& r, int dim)
      : rhs(r), n(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), ytmp(dim) {}

  // One trial step. Returns false when a stage evaluation threw (caller
  // halves h). On success fills y_new, f_new (= k7, FSAL) and err.
  bool try_step(double t, const Vec& y, const Vec& f, double h, Vec& y_new, Vec& f_new,
                double& err, double atol, double rtol) {
    try {
      for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * f[i];
      rhs(t + c2 * h, ytmp, k2);
      for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * f[i] + a32 * k2[i]);
      rhs(t + c3 * h, ytmp, k3);
      for (int i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (a41 * f[i] + a42 * k2[i] + a43 * k3[i]);
      rhs(t + c4 * h, ytmp, k4);
      for (int i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (a51 * f[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      rhs(t + c5 * h, ytmp, k5);
      for (int i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (a61 * f[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      rhs(t + h, ytmp, k6);
      for (int i = 0; i < n; ++i)
        y_new[i] = y[i] + h * (b1 * f[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      rhs(t + h, y_new, f_new);
    } catch (const Error&) {
      return false;
    }
    err = 0.0;
    for (int i = 0; i < n; ++i) {
      double e = h * (e1 * f[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                      e7 * f_new[i]);
      double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / n);
    if (!std::isfinite(err)) err = 1e10;  // overflowing trial step: force rejection
    return true;
  }

  bool rk4_step(double t, const Vec& y, const Vec& f, double h, Vec& y_new, Vec& f_new) {
    try {
      for (int i = 0; i < n; ++i) ytmp[i] = y[i] + 0.5 * h * f[i];
      rhs(t + 0.5 * h, ytmp, k2);
      for (int i = 0; i < n; ++i) ytmp[i] = y[i] + 0.5 * h * k2[i];
      rhs(t + 0.5 * h, ytmp, k3);
      for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * k3[i];
      rhs(t + h, ytmp, k4);
      for (int i = 0; i < n; ++i)
        y_new[i] = y[i] + h / 6.0 * (f[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      rhs(t + h, y_new, f_new);
    } catch (const Error&) {
      return false;
    }
    return true;
  }
};

// Cubic Hermite interpolation inside an accepted step.
Vec hermite(const Vec& y0, const Vec& f0, const Vec& y1, const Vec& f1, double h, double theta) {
  Vec y(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) {
    double d = y1[i] - y0[i];
    y[i] = (1.0 - theta) * y0[i] + theta * y1[i] +
           theta * (theta - 1.0) *
               ((1.0 - 2.0 * theta) * d + (theta - 1.0) * h * f0[i] + theta * h * f1[i]);
  }
  return y;
}

double initial_step(const detail::Rhs& rhs, int n, double t0, const Vec& y0, const Vec& f0,
                    double span, double atol, double rtol) {
  (void)rhs;
  (void)t0;
  double d0 = 0.0, d1 = 0.0;
  for (int i = 0; i < n; ++i) {
    double sc = atol + rtol * std::abs(y0[i]);
    d0 += (y0[i] / sc) * (y0[i] / sc);
    d1 += (f0[i] / sc) * (f0[i] / sc);
  }
  d0 = std::sqrt(d0 / n);
  d1 = std::sqrt(d1 / n);
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  return std::min(h, span);
}

bool crossing(double a, double b, int direction) {
  if (direction >= 0 && a < 0.0 && b >= 0.0) return true;
  if (direction <= 0 && a > 0.0 && b <= 0.0) return true;
  return false;
}

}  // namespace

namespace detail {

void integrate_driver(const Rhs& rhs, int dim, Vec y0, double t0, double t1,
                      const IntegratorSettings& settings, const DriverHooks& hooks) {
  if (!(t1 > t0)) throw ConfigError("integration span must have t1 > t0");
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw ConfigError("integration span must be finite");

  // merged stop schedule: (time, is_sample, is_mutate)
  struct Stop { double t; bool sample = false; bool mutate = false; };
  std::vector<Stop> stops;
  for (double ts : hooks.sample_times) {
    if (ts < t0 - 1e-14 || ts > t1 + 1e-14)
      throw ConfigError("sample time outside integration span");
    stops.push_back({std::min(std::max(ts, t0), t1), true, false});
  }
  for (double tm : hooks.mutate_times)
    if (tm > t0 && tm <= t1) stops.push_back({tm, false, true});
  stops.push_back({t1, false, false});
  std::sort(stops.begin(), stops.end(), [](const Stop& a, const Stop& b) { return a.t < b.t; });
  std::vector<Stop> merged;
  for (const Stop& s : stops) {
    if (!merged.empty() && s.t == merged.back().t) {
      merged.back().sample |= s.sample;
      merged.back().mutate |= s.mutate;
    } else {
      merged.push_back(s);
    }
  }

  Stepper st(rhs, dim);
  Vec y = std::move(y0);
  Vec f(dim), y_new(dim), f_new(dim);
  double t = t0;
  rhs(t, y, f);  // first evaluation failures propagate

  const bool adaptive = settings.method == Method::RK45;
  double h = adaptive
                 ? initial_step(rhs, dim, t0, y, f, t1 - t0, settings.abs_tol, settings.rel_tol)
                 : settings.fixed_step;
  if (!(h > 0.0)) throw ConfigError("step size must be positive");

  const std::vector<EventSpec>* events = hooks.events;
  std::vector<double> phi_old, phi_new;
  if (events) {
    phi_old.resize(events->size());
    phi_new.resize(events->size());
    for (std::size_t e = 0; e < events->size(); ++e) phi_old[e] = (*events)[e].fn(t, y);
  }

  long accepted = 0;
  long attempts = 0;

  // handle a sample stop exactly at t0
  std::size_t stop_idx = 0;
  if (!merged.empty() && merged[0].t == t0) {
    if (merged[0].sample) hooks.record(t, y);
    if (merged[0].mutate && hooks.mutate) {
      hooks.mutate(t, y);
      rhs(t, y, f);
      if (events)
        for (std::size_t e = 0; e < events->size(); ++e) phi_old[e] = (*events)[e].fn(t, y);
    }
    ++stop_idx;
    if (t0 == t1) return;
  }
  if (hooks.record_steps) hooks.record(t, y);

  auto refine_to = [&](double ta, const Vec& ya, double tb) {
    // re-integrate the truncated step [ta, tb] for an accurate event state
    Vec yy = ya, ff(dim), yn(dim), fn(dim);
    rhs(ta, yy, ff);
    double tt = ta;
    double hh = std::min(h, tb - ta);
    int guard = 0;
    while (tt < tb && ++guard < 10000) {
      hh = std::min(hh, tb - tt);
      if (hh <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(tt), 1.0)) break;
      double err = 0.0;
      bool ok = adaptive
                    ? st.try_step(tt, yy, ff, hh, yn, fn, err, settings.abs_tol, settings.rel_tol)
                    : st.rk4_step(tt, yy, ff, hh, yn, fn);
      if (!ok) { hh *= 0.5; continue; }
      if (adaptive && err > 1.0) {
        hh *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        continue;
      }
      tt = (tb - tt <= hh * 1e-12) ? tb : tt + hh;
      yy = yn;
      ff = fn;
      if (adaptive && err > 0.0) hh *= std::min(5.0, 0.9 * std::pow(err, -0.2));
    }
    return yy;
  };

  while (stop_idx < merged.size()) {
    const Stop stop = merged[stop_idx];
    bool arrived = false;
    while (!arrived) {
      if (accepted >= settings.max_steps || ++attempts > 10 * settings.max_steps)
        throw MaxStepsExceeded("integration exceeded " + std::to_string(settings.max_steps) +
                               " steps at t=" + std::to_string(t));
      double h_try = std::min(h, stop.t - t);
      bool clamped = h_try >= stop.t - t - 1e-300;
      double hmin = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
      if (h_try <= hmin) {
        if (clamped) {  // rounding remainder: snap to the stop
          t = stop.t;
          arrived = true;
          break;
        }
        throw StepUnderflow("step size underflow at t=" + std::to_string(t));
      }

      double err = 0.0;
      bool ok = adaptive ? st.try_step(t, y, f, h_try, y_new, f_new, err, settings.abs_tol,
                                       settings.rel_tol)
                         : st.rk4_step(t, y, f, h_try, y_new, f_new);
      if (!ok) {
        h = 0.5 * h_try;
        continue;
      }
      if (adaptive && err > 1.0) {
        h = h_try * std::max(0.2, 0.9 * std::pow(err, -0.2));
        continue;
      }

      double t_next = clamped ? stop.t : t + h_try;

      // event detection over [t, t_next]
      if (events && !events->empty()) {
        std::vector<std::pair<EventRecord, bool>> found;  // record + terminal flag
        for (std::size_t e = 0; e < events->size(); ++e) {
          phi_new[e] = (*events)[e].fn(t_next, y_new);
          if (!crossing(phi_old[e], phi_new[e], (*events)[e].direction)) continue;
          // bisect on re-integrated states; the base point advances with the
          // bracket so each probe integrates a shrinking interval
          double lo = t, hi = t_next;
          double plo = phi_old[e];
          double base_t = t;
          Vec base_y = y;
          Vec state_hi = y_new;
          for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
            double mid = 0.5 * (lo + hi);
            Vec ym = refine_to(base_t, base_y, mid);
            double pm = (*events)[e].fn(mid, ym);
            if (crossing(plo, pm, (*events)[e].direction)) {
              hi = mid;
              state_hi = ym;
            } else {
              lo = mid;
              plo = pm;
              base_t = mid;
              base_y = std::move(ym);
            }
          }
          EventRecord rec;
          rec.kind = (*events)[e].kind;
          rec.param = hi;
          rec.state = std::move(state_hi);
          found.emplace_back(std::move(rec), (*events)[e].terminal);
        }
        std::sort(found.begin(), found.end(),
                  [](const auto& a, const auto& b) { return a.first.param < b.first.param; });
        for (auto& [rec, terminal] : found) {
          if (hooks.on_event) hooks.on_event(rec);
          if (terminal) {  // integration stops at the first terminal crossing
            hooks.record(rec.param, rec.state);
            if (hooks.terminated) *hooks.terminated = true;
            return;
          }
        }
        std::swap(phi_old, phi_new);
      }

      t = t_next;
      std::swap(y, y_new);
      std::swap(f, f_new);
      ++accepted;
      if (adaptive) {
        double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h = h_try * std::min(5.0, std::max(0.2, grow));
      }
      arrived = t >= stop.t;
      if (hooks.record_steps && !arrived) hooks.record(t, y);
    }

    if (stop.sample || (hooks.record_steps && stop.t != t0)) hooks.record(stop.t, y);
    if (stop.mutate && hooks.mutate) {
      hooks.mutate(stop.t, y);
      rhs(stop.t, y, f);
      if (events)
        for (std::size_t e = 0; e < events->size(); ++e) phi_old[e] = (*events)[e].fn(stop.t, y);
    }
    ++stop_idx;
  }
}

}  // namespace detail

Trajectory integrate(const VectorFlowSystem& system, Vec x0, double t0, double t1,
                     const IntegratorSettings& settings) {
  if (static_cast<int>(x0.size()) != system.dim())
    throw ConfigError("initial state dimension mismatch");
  Trajectory traj;
  traj.dim = system.dim();
  const auto& rhs_map = system.rhs();
  detail::Rhs rhs = [&rhs_map](double, std::span<const double> y, std::span<double> dy) {
    rhs_map.eval(y, dy);
  };
  detail::DriverHooks hooks;
  hooks.sample_times = settings.sample_times;
  hooks.record_steps = settings.sample_times.empty();
  hooks.record = [&](double t, std::span<const double> y) {
    traj.params.push_back(t);
    traj.states.emplace_back(y.begin(), y.end());
  };
  hooks.events = &settings.events;
  hooks.on_event = [&](const EventRecord& rec) { traj.events.push_back(rec); };
  hooks.terminated = &traj.terminated_by_event;
  detail::integrate_driver(rhs, system.dim(), std::move(x0), t0, t1, settings, hooks);
  return traj;
}

Trajectory variational_integrate(const VectorFlowSystem& system, Vec x0,
                                 std::vector<Vec> frame0, double t0, double t1,
                                 const IntegratorSettings& settings, double renorm_interval,
                                 const RenormCallback& renorm) {
  int n = system.dim();
  if (static_cast<int>(x0.size()) != n) throw ConfigError("initial state dimension mismatch");
  for (const auto& v : frame0)
    if (static_cast<int>(v.size()) != n)
      throw ConfigError("perturbation vector dimension mismatch");
  int m = static_cast<int>(frame0.size());
  int dim = n * (1 + m);

  Vec z0(dim);
  std::copy(x0.begin(), x0.end(), z0.begin());
  for (int k = 0; k < m; ++k)
    std::copy(frame0[k].begin(), frame0[k].end(), z0.begin() + n * (1 + k));

  const auto& rhs_map = system.rhs();
  std::vector<num::D1> xd(n), yd(n);
  Matrix J(n, n);
  detail::Rhs rhs = [&](double, std::span<const double> z, std::span<double> dz) {
    rhs_map.eval(z.subspan(0, n), dz.subspan(0, n));
    for (int j = 0; j < n; ++j) xd[j] = num::D1(z[j], 0.0);
    for (int j = 0; j < n; ++j) {
      xd[j].d = 1.0;
      rhs_map.eval(std::span<const num::D1>(xd), std::span<num::D1>(yd));
      for (int i = 0; i < n; ++i) J(i, j) = yd[i].d;
      xd[j].d = 0.0;
    }
    for (int k = 0; k < m; ++k) {
      const double* xi = z.data() + n * (1 + k);
      double* dxi = dz.data() + n * (1 + k);
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += J(i, j) * xi[j];
        dxi[i] = s;
      }
    }
  };

  Trajectory traj;
  traj.dim = n;
  detail::DriverHooks hooks;
  hooks.sample_times = settings.sample_times;
  hooks.record_steps = settings.sample_times.empty();
  hooks.record = [&](double t, std::span<const double> z) {
    traj.params.push_back(t);
    traj.states.emplace_back(z.begin(), z.begin() + n);
    std::vector<Vec> fr(m);
    for (int k = 0; k < m; ++k)
      fr[k].assign(z.begin() + n * (1 + k), z.begin() + n * (2 + k));
    traj.frames.push_back(std::move(fr));
  };
  if (renorm_interval > 0.0 && renorm) {
    double tol_t = 1e-9 * std::max(1.0, std::abs(t1));
    for (double tr = t0 + renorm_interval; tr < t1 - tol_t; tr += renorm_interval)
      hooks.mutate_times.push_back(tr);
    hooks.mutate_times.push_back(t1);  // final (possibly partial) accumulation point
    hooks.mutate = [&](double t, std::span<double> z) {
      std::vector<Vec> fr(m);
      for (int k = 0; k < m; ++k)
        fr[k].assign(z.begin() + n * (1 + k), z.begin() + n * (2 + k));
      renorm(t, z.subspan(0, n), fr);
      for (int k = 0; k < m; ++k)
        std::copy(fr[k].begin(), fr[k].end(), z.begin() + n * (1 + k));
      traj.events.push_back({"renormalization", t, Vec(z.begin(), z.begin() + n)});
    };
  }
  hooks.events = &settings.events;
  hooks.on_event = [&](const EventRecord& rec) { traj.events.push_back(rec); };
  hooks.terminated = &traj.terminated_by_event;
  detail::integrate_driver(rhs, dim, std::move(z0), t0, t1, settings, hooks);
  return traj;
}

}  // namespace geostab::flow
