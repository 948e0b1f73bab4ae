#include "geostab/lagrangian.hpp"

#include <algorithm>
#include <cmath>

namespace geostab::lag {

using num::D1;
using num::Dual;

LagrangianSystem::LagrangianSystem(int n, expr::Expression L) : n_(n), L_(std::move(L)) {
  if (!L_.valid()) throw ConfigError("Lagrangian expression required");
  if (L_.table()->free_count() != 2 * n)
    throw ConfigError("Lagrangian must be defined over (x^a, u^a) symbols");
}

NaturalLagrangian::NaturalLagrangian(geom::MetricField k, expr::Expression V)
    : k_(std::move(k)), V_(std::move(V)) {
  if (V_.table() != k_.table())
    throw ConfigError("kinetic metric and potential must share one symbol table");
}

namespace {

// Velocity Hessian g_ab(x,u), the x-derivative row d^2L/dx^a du^b, and
// dL/dx_b at a generic point; one nested-dual sweep per slot pair.
template <class T>
struct LagrangianJets {
  std::vector<T> g;      // n*n
  std::vector<T> dxdu;   // n*n: [a*n + b] = d2L/dx_a du_b
  std::vector<T> dLdx;   // n
};

template <class T>
LagrangianJets<T> lagrangian_jets(const LagrangianSystem& L, std::span<const T> z) {
  int n = L.dim();
  LagrangianJets<T> J;
  J.g.assign(n * n, T(0.0));
  J.dxdu.assign(n * n, T(0.0));
  J.dLdx.assign(n, T(0.0));
  std::vector<Dual<T>> zd(2 * n);
  for (int i = 0; i < 2 * n; ++i) zd[i] = Dual<T>(z[i], T(0.0));
  for (int b = 0; b < n; ++b) {
    zd[b].d = T(1.0);
    J.dLdx[b] = L.lagrangian(std::span<const Dual<T>>(zd)).d;
    zd[b].d = T(0.0);
  }
  std::vector<Dual<Dual<T>>> zdd(2 * n);
  for (int i = 0; i < 2 * n; ++i)
    zdd[i] = Dual<Dual<T>>(Dual<T>(z[i], T(0.0)), Dual<T>(T(0.0), T(0.0)));
  for (int b = 0; b < n; ++b) {
    zdd[n + b].v.d = T(1.0);  // inner seed on u_b
    for (int s = 0; s < 2 * n; ++s) {
      zdd[s].d.v = T(1.0);
      Dual<Dual<T>> r = L.lagrangian(std::span<const Dual<Dual<T>>>(zdd));
      if (s >= n) J.g[(s - n) * n + b] = r.d.d;
      else J.dxdu[s * n + b] = r.d.d;
      zdd[s].d.v = T(0.0);
    }
    zdd[n + b].v.d = T(0.0);
  }
  return J;
}

template <class T>
void lagrangian_accel(const LagrangianSystem& L, std::span<const T> z, std::span<T> out) {
  int n = L.dim();
  LagrangianJets<T> J = lagrangian_jets(L, z);
  {
    std::vector<double> gp(n * n);
    for (int i = 0; i < n * n; ++i) gp[i] = num::scalar_value(J.g[i]);
    if (std::abs(num::scaled_determinant(gp, n)) < 1e-12)
      throw DegenerateLagrangian("velocity Hessian rank-deficient at evaluation point");
  }
  std::vector<T> rhs(n);
  for (int b = 0; b < n; ++b) {
    T s = J.dLdx[b];
    for (int a = 0; a < n; ++a) s = s - J.dxdu[a * n + b] * z[n + a];
    rhs[b] = s;
  }
  std::vector<T> g = J.g;
  num::solve_linear_inplace(g, rhs, n);
  for (int a = 0; a < n; ++a) out[a] = rhs[a];
}

template <class T>
void natural_accel(const geom::MetricField& k, const expr::Expression& V, std::span<const T> z,
                   std::span<T> out) {
  int n = k.dim();
  std::span<const T> x = z.subspan(0, n);
  std::vector<T> gamma = geom::christoffel_t<T>(k, x);
  std::vector<T> dV(n);
  {
    std::vector<Dual<T>> xd(n);
    for (int i = 0; i < n; ++i) xd[i] = Dual<T>(x[i], T(0.0));
    std::vector<Dual<T>> buf;
    for (int b = 0; b < n; ++b) {
      xd[b].d = T(1.0);
      V.table()->fill(std::span<const Dual<T>>(xd), buf);
      dV[b] = V.eval<Dual<T>>(buf).d;
      xd[b].d = T(0.0);
    }
  }
  std::vector<T> kx = k.eval(x);
  std::vector<T> kinv = num::invert_scaled(kx, n, "kinetic metric");
  for (int a = 0; a < n; ++a) {
    T s(0.0);
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) s = s + gamma[(a * n + b) * n + c] * z[n + b] * z[n + c];
      s = s + kinv[a * n + b] * dV[b];
    }
    out[a] = -s;
  }
}

}  // namespace

Matrix lagrange_metric(const LagrangianSystem& sys, std::span<const double> x,
                       std::span<const double> u) {
  int n = sys.dim();
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  LagrangianJets<double> J = lagrangian_jets<double>(sys, z);
  if (std::abs(num::scaled_determinant(J.g, n)) < 1e-12)
    throw DegenerateLagrangian("velocity Hessian rank-deficient at evaluation point");
  Matrix g(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) g(a, b) = J.g[a * n + b];
  return g;
}

double energy(const LagrangianSystem& sys, std::span<const double> x, std::span<const double> u) {
  int n = sys.dim();
  std::vector<D1> z(2 * n);
  for (int i = 0; i < n; ++i) z[i] = D1(x[i], 0.0);
  for (int i = 0; i < n; ++i) z[n + i] = D1(u[i], 0.0);
  double e = 0.0;
  for (int a = 0; a < n; ++a) {
    z[n + a].d = 1.0;
    e += u[a] * sys.lagrangian(std::span<const D1>(z)).d;
    z[n + a].d = 0.0;
  }
  Vec zz(2 * n);
  std::copy(x.begin(), x.end(), zz.begin());
  std::copy(u.begin(), u.end(), zz.begin() + n);
  return e - sys.lagrangian<double>(zz);
}

double energy(const NaturalLagrangian& nat, std::span<const double> x, std::span<const double> u) {
  Matrix k = nat.kinetic().eval_matrix(x);
  return 0.5 * num::metric_dot(k, u, u) + nat.potential_at<double>(x);
}

flow::VectorFlowSystem semispray_from_lagrangian(const LagrangianSystem& sys) {
  int n = sys.dim();
  auto f = [sys, n]<class T>(std::span<const T> z, std::span<T> out) {
    for (int a = 0; a < n; ++a) out[a] = z[n + a];
    lagrangian_accel<T>(sys, z, out.subspan(n, n));
  };
  return flow::VectorFlowSystem(num::make_map(2 * n, 2 * n, std::move(f)), n);
}

flow::VectorFlowSystem semispray(const NaturalLagrangian& nat) {
  int n = nat.dim();
  geom::MetricField k = nat.kinetic();
  expr::Expression V = nat.potential();
  auto f = [k, V, n]<class T>(std::span<const T> z, std::span<T> out) {
    for (int a = 0; a < n; ++a) out[a] = z[n + a];
    natural_accel<T>(k, V, z, out.subspan(n, n));
  };
  return flow::VectorFlowSystem(num::make_map(2 * n, 2 * n, std::move(f)), n);
}

kcc::SprayData spray_of(const LagrangianSystem& sys) {
  int n = sys.dim();
  auto f = [sys, n]<class T>(std::span<const T> z, std::span<T> out) {
    lagrangian_accel<T>(sys, z, out);
    for (int a = 0; a < n; ++a) out[a] = -0.5 * out[a];
  };
  return {n, num::make_map(2 * n, n, std::move(f))};
}

kcc::SprayData spray_of(const NaturalLagrangian& nat) {
  int n = nat.dim();
  geom::MetricField k = nat.kinetic();
  expr::Expression V = nat.potential();
  auto f = [k, V, n]<class T>(std::span<const T> z, std::span<T> out) {
    natural_accel<T>(k, V, z, out);
    for (int a = 0; a < n; ++a) out[a] = -0.5 * out[a];
  };
  return {n, num::make_map(2 * n, n, std::move(f))};
}

Vec spray_G(const LagrangianSystem& sys, std::span<const double> x, std::span<const double> u) {
  int n = sys.dim();
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  Vec out(n);
  lagrangian_accel<double>(sys, z, out);
  for (double& v : out) v *= -0.5;
  return out;
}

Matrix perturbation_operator_natural(const NaturalLagrangian& nat, std::span<const double> x,
                                     std::span<const double> u) {
  int n = nat.dim();
  const geom::MetricField& k = nat.kinetic();
  std::vector<double> R = geom::riemann(k, x);
  std::vector<double> gamma = geom::christoffel(k, x);
  std::vector<double> kx = k.eval(x);
  std::vector<double> kinv = num::invert_scaled(kx, n, "kinetic metric");

  // covariant Hessian of V: HessV_cb = d2V - Gamma^d_{cb} dV_d
  Vec dV(n);
  Matrix ddV(n, n);
  {
    const expr::Expression& V = nat.potential();
    std::vector<num::D2> xd(n);
    for (int i = 0; i < n; ++i) xd[i] = num::D2(D1(x[i], 0.0), D1(0.0, 0.0));
    std::vector<num::D2> buf;
    for (int i = 0; i < n; ++i) {
      xd[i].v.d = 1.0;
      for (int j = i; j < n; ++j) {
        xd[j].d.v = 1.0;
        V.table()->fill(std::span<const num::D2>(xd), buf);
        num::D2 r = V.eval<num::D2>(buf);
        if (j == i) dV[i] = r.v.d;
        ddV(i, j) = ddV(j, i) = r.d.d;
        xd[j].d.v = 0.0;
      }
      xd[i].v.d = 0.0;
    }
  }

  Matrix P(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double v = 0.0;
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) v -= R[((a * n + p) * n + b) * n + q] * u[p] * u[q];
      for (int c = 0; c < n; ++c) {
        double hess = ddV(c, b);
        for (int d = 0; d < n; ++d) hess -= gamma[(d * n + c) * n + b] * dV[d];
        v -= kinv[a * n + c] * hess;
      }
      P(a, b) = v;
    }
  return P;
}

namespace detail {

flow::Trajectory covariant_deviation(const geom::MetricField& k, const expr::Expression* V,
                                     Vec x0, Vec u0, Vec xi0, Vec eta0, double t0, double t1,
                                     const std::vector<double>& sample_times,
                                     const flow::IntegratorSettings& settings) {
  int n = k.dim();
  NaturalLagrangian nat(k, V ? *V : expr::Expression::constant(0.0, k.table()));

  flow::detail::Rhs rhs = [&, n](double, std::span<const double> z, std::span<double> dz) {
    std::span<const double> x = z.subspan(0, n);
    std::span<const double> u = z.subspan(n, n);
    std::span<const double> xi = z.subspan(2 * n, n);
    std::span<const double> eta = z.subspan(3 * n, n);
    Vec zu(z.begin(), z.begin() + 2 * n);
    Vec accel(n);
    natural_accel<double>(k, nat.potential(), zu, accel);
    std::vector<double> gamma = geom::christoffel(k, x);
    Matrix P = perturbation_operator_natural(nat, x, u);
    for (int a = 0; a < n; ++a) {
      dz[a] = u[a];
      dz[n + a] = accel[a];
      double gxi = 0.0, geta = 0.0, pxi = 0.0;
      for (int b = 0; b < n; ++b) {
        for (int c = 0; c < n; ++c) {
          gxi += gamma[(a * n + b) * n + c] * u[b] * xi[c];
          geta += gamma[(a * n + b) * n + c] * u[b] * eta[c];
        }
        pxi += P(a, b) * xi[b];
      }
      dz[2 * n + a] = eta[a] - gxi;
      dz[3 * n + a] = pxi - geta;
    }
  };

  Vec z0(4 * n);
  std::copy(x0.begin(), x0.end(), z0.begin());
  std::copy(u0.begin(), u0.end(), z0.begin() + n);
  std::copy(xi0.begin(), xi0.end(), z0.begin() + 2 * n);
  std::copy(eta0.begin(), eta0.end(), z0.begin() + 3 * n);

  flow::Trajectory traj;
  traj.dim = n;
  flow::detail::DriverHooks hooks;
  hooks.sample_times = sample_times;
  hooks.record_steps = sample_times.empty();
  hooks.record = [&](double t, std::span<const double> z) {
    traj.params.push_back(t);
    traj.states.emplace_back(z.begin() + 2 * n, z.begin() + 3 * n);
  };
  flow::detail::integrate_driver(rhs, 4 * n, std::move(z0), t0, t1, settings, hooks);
  return traj;
}

}  // namespace detail

flow::Trajectory evolve_perturbation_natural(const NaturalLagrangian& nat,
                                             const flow::Trajectory& along, Vec xi0,
                                             Vec xidot0) {
  int n = nat.dim();
  if (along.dim != 2 * n || along.states.empty())
    throw ConfigError("perturbation evolution needs a sampled (x,u) trajectory");
  Vec x0(along.states.front().begin(), along.states.front().begin() + n);
  Vec u0(along.states.front().begin() + n, along.states.front().end());
  // eta = covariant derivative: xidot + Gamma(u) xi
  std::vector<double> gamma = geom::christoffel(nat.kinetic(), x0);
  Vec eta0 = xidot0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) eta0[a] += gamma[(a * n + b) * n + c] * u0[b] * xi0[c];
  flow::IntegratorSettings settings;
  return detail::covariant_deviation(nat.kinetic(), &nat.potential(), x0, u0, xi0, eta0,
                                     along.params.front(), along.params.back(), along.params,
                                     settings);
}

}  // namespace geostab::lag
