#include "geostab/kcc.hpp"

#include <algorithm>
#include <cmath>

namespace geostab::kcc {

using num::D1;
using num::Dual;

Vec SprayData::eval_G(std::span<const double> x, std::span<const double> u) const {
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  return num::eval(*G, z);
}

SprayData spray_from_expressions(int n, std::vector<expr::Expression> comps) {
  if (static_cast<int>(comps.size()) != n)
    throw ConfigError("spray needs n coefficient expressions");
  auto table = comps[0].table();
  if (table->free_count() != 2 * n)
    throw ConfigError("spray coefficients must be defined over (x, u) symbols");
  auto cp = std::make_shared<std::vector<expr::Expression>>(std::move(comps));
  auto f = [cp, table]<class T>(std::span<const T> z, std::span<T> out) {
    std::vector<T> buf;
    table->fill(z, buf);
    for (std::size_t i = 0; i < cp->size(); ++i) out[i] = (*cp)[i].template eval<T>(buf);
  };
  return {n, num::make_map(2 * n, n, std::move(f))};
}

SprayData spray_from_accel(int n, std::vector<expr::Expression> accel) {
  SprayData base = spray_from_expressions(n, std::move(accel));
  auto inner = base.G;
  auto f = [inner, n]<class T>(std::span<const T> z, std::span<T> out) {
    inner->eval(z, out);
    for (int i = 0; i < n; ++i) out[i] = -0.5 * out[i];
  };
  return {n, num::make_map(2 * n, n, std::move(f))};
}

SprayData geodesic_spray(const geom::MetricField& g) {
  int n = g.dim();
  auto f = [g, n]<class T>(std::span<const T> z, std::span<T> out) {
    std::vector<T> gamma = geom::christoffel_t<T>(g, z.subspan(0, n));
    for (int a = 0; a < n; ++a) {
      T s(0.0);
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) s = s + gamma[(a * n + b) * n + c] * z[n + b] * z[n + c];
      out[a] = 0.5 * s;
    }
  };
  return {n, num::make_map(2 * n, n, std::move(f))};
}

flow::VectorFlowSystem semispray_flow(const SprayData& spray) {
  int n = spray.n;
  auto G = spray.G;
  auto f = [G, n]<class T>(std::span<const T> z, std::span<T> out) {
    for (int a = 0; a < n; ++a) out[a] = z[n + a];
    std::vector<T> g(n);
    G->eval(z, std::span<T>(g));
    for (int a = 0; a < n; ++a) out[n + a] = -2.0 * g[a];
  };
  return flow::VectorFlowSystem(num::make_map(2 * n, 2 * n, std::move(f)), n);
}

// ---- derivative jets of the spray coefficients ----

namespace {

template <class T>
struct Jets {
  int n = 0;
  std::vector<T> G;     // n
  std::vector<T> dG;    // n x 2n           [a * 2n + S]
  std::vector<T> B;     // d2G/du du        [(c*n + b)*n + a]
  std::vector<T> dNdx;  // d2G/du dx        [(c*n + b)*n + d]

  T N(int a, int b) const { return dG[a * 2 * n + n + b]; }
};

template <class T>
Jets<T> make_jets(const num::VectorMap& G, int n, std::span<const T> z) {
  Jets<T> J;
  J.n = n;
  int N2 = 2 * n;
  J.G.resize(n);
  G.eval(z, std::span<T>(J.G));

  J.dG.assign(n * N2, T(0.0));
  {
    std::vector<Dual<T>> zd(N2), out(n);
    for (int i = 0; i < N2; ++i) zd[i] = Dual<T>(z[i], T(0.0));
    for (int s = 0; s < N2; ++s) {
      zd[s].d = T(1.0);
      G.eval(std::span<const Dual<T>>(zd), std::span<Dual<T>>(out));
      for (int a = 0; a < n; ++a) J.dG[a * N2 + s] = out[a].d;
      zd[s].d = T(0.0);
    }
  }

  J.B.assign(n * n * n, T(0.0));
  J.dNdx.assign(n * n * n, T(0.0));
  {
    std::vector<Dual<Dual<T>>> zdd(N2), out(n);
    for (int i = 0; i < N2; ++i)
      zdd[i] = Dual<Dual<T>>(Dual<T>(z[i], T(0.0)), Dual<T>(T(0.0), T(0.0)));
    for (int b = 0; b < n; ++b) {
      zdd[n + b].v.d = T(1.0);
      for (int s = 0; s < N2; ++s) {
        zdd[s].d.v = T(1.0);
        G.eval(std::span<const Dual<Dual<T>>>(zdd), std::span<Dual<Dual<T>>>(out));
        for (int c = 0; c < n; ++c) {
          T val = out[c].d.d;  // d2 G^c / du_b dz_s
          if (s >= n) J.B[(c * n + b) * n + (s - n)] = val;
          else J.dNdx[(c * n + b) * n + s] = val;
        }
        zdd[s].d.v = T(0.0);
      }
      zdd[n + b].v.d = T(0.0);
    }
  }
  return J;
}

// Berwald connection transformed to the coordinate-induced basis of TTM.
// With E_a = d/dx^a - N^b_a d/du^b, E_abar = d/du^a and the adapted-basis
// coefficients Gamma^c_{ba} = B^c_{ba}, the nonzero coordinate coefficients
// Gamma'^C_{BD} (B = vector slot, D = direction slot) are
//   Gamma'^c_{bd}          = B^c_{bd}
//   Gamma'^cbar_{bd}       = dN^c_b/dx^d + B^c_{ed} N^e_b - N^c_g B^g_{bd}
//   Gamma'^cbar_{b dbar}   = B^c_{bd}
//   Gamma'^cbar_{bbar d}   = B^c_{bd}
template <class T>
std::vector<T> gamma_prime(const Jets<T>& J) {
  int n = J.n, N2 = 2 * n;
  std::vector<T> gp(N2 * N2 * N2, T(0.0));
  auto at = [&](int C, int B, int D) -> T& { return gp[(C * N2 + B) * N2 + D]; };
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int d = 0; d < n; ++d) {
        T Bcbd = J.B[(c * n + b) * n + d];
        at(c, b, d) = Bcbd;
        T v = J.dNdx[(c * n + b) * n + d];
        for (int e = 0; e < n; ++e)
          v = v + J.B[(c * n + e) * n + d] * J.N(e, b) - J.N(c, e) * J.B[(e * n + b) * n + d];
        at(n + c, b, d) = v;
        at(n + c, b, n + d) = Bcbd;
        at(n + c, n + b, d) = Bcbd;
      }
  return gp;
}

// A = T(X, .) + nabla_. X as a matrix on TTM at the point z = (x, u):
//   A^C_B = d_B X^C + Gamma'^C_{EB} X^E + X^D (Gamma'^C_{BD} - Gamma'^C_{DB}).
template <class T>
std::vector<T> a_operator(const Jets<T>& J, const std::vector<T>& gp, std::span<const T> z) {
  int n = J.n, N2 = 2 * n;
  auto at = [&](int C, int B, int D) -> const T& { return gp[(C * N2 + B) * N2 + D]; };
  std::vector<T> X(N2);
  for (int c = 0; c < n; ++c) {
    X[c] = z[n + c];
    X[n + c] = -2.0 * J.G[c];
  }
  std::vector<T> A(N2 * N2, T(0.0));
  for (int C = 0; C < N2; ++C)
    for (int B = 0; B < N2; ++B) {
      T v(0.0);
      if (C < n) {
        if (B == n + C) v = v + 1.0;  // d(u^C)/du^C
      } else {
        v = v - 2.0 * J.dG[(C - n) * N2 + B];
      }
      for (int E = 0; E < N2; ++E) v = v + at(C, E, B) * X[E];
      for (int D = 0; D < N2; ++D) v = v + X[D] * (at(C, B, D) - at(C, D, B));
      A[C * N2 + B] = v;
    }
  return A;
}

}  // namespace

Matrix nonlinear_connection(const SprayData& spray, std::span<const double> x,
                            std::span<const double> u) {
  int n = spray.n;
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  std::vector<D1> zd(z.begin(), z.end()), out(n);
  Matrix N(n, n);
  for (int b = 0; b < n; ++b) {
    zd[n + b].d = 1.0;
    spray.G->eval(std::span<const D1>(zd), std::span<D1>(out));
    for (int a = 0; a < n; ++a) N(a, b) = out[a].d;
    zd[n + b].d = 0.0;
  }
  return N;
}

BerwaldData berwald_coefficients(const SprayData& spray, std::span<const double> x,
                                 std::span<const double> u) {
  int n = spray.n;
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  Jets<double> J = make_jets<double>(*spray.G, n, z);
  BerwaldData out;
  out.n = n;
  out.x.assign(x.begin(), x.end());
  out.u.assign(u.begin(), u.end());
  out.N = Matrix(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out.N(a, b) = J.N(a, b);
  out.gamma = J.B;  // (c*n + b)*n + a
  return out;
}

Matrix deviation_tensor_P(const SprayData& spray, std::span<const double> x,
                          std::span<const double> u) {
  int n = spray.n;
  int N2 = 2 * n;
  Vec z(N2);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  Jets<double> J = make_jets<double>(*spray.G, n, z);
  Matrix P(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double v = -2.0 * J.dG[a * N2 + b];
      for (int c = 0; c < n; ++c) {
        v -= 2.0 * J.G[c] * J.B[(a * n + b) * n + c];
        v += u[c] * J.dNdx[(a * n + b) * n + c];
        v += J.N(a, c) * J.N(c, b);
      }
      P(a, b) = v;
    }
  return P;
}

EpsilonDefect epsilon_defect(const SprayData& spray, std::span<const double> x,
                             std::span<const double> u) {
  int n = spray.n;
  Vec z(2 * n);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);
  Jets<double> J = make_jets<double>(*spray.G, n, z);
  EpsilonDefect out;
  out.epsilon.resize(n);
  out.dbar = Matrix(n, n);
  for (int a = 0; a < n; ++a) {
    double e = 2.0 * J.G[a];
    for (int b = 0; b < n; ++b) e -= J.N(a, b) * u[b];
    out.epsilon[a] = e;
    for (int b = 0; b < n; ++b) {
      double d = J.N(a, b);
      for (int c = 0; c < n; ++c) d -= J.B[(a * n + c) * n + b] * u[c];
      out.dbar(a, b) = d;
      out.max_abs_dbar = std::max(out.max_abs_dbar, std::abs(d));
    }
  }
  return out;
}

Matrix rtilde_operator(const SprayData& spray, std::span<const double> x,
                       std::span<const double> u) {
  int n = spray.n;
  int N2 = 2 * n;
  Vec z(N2);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + n);

  Jets<double> J0 = make_jets<double>(*spray.G, n, z);
  std::vector<double> gp0 = gamma_prime(J0);
  std::vector<double> A0 = a_operator<double>(J0, gp0, z);

  std::vector<double> X(N2);
  for (int c = 0; c < n; ++c) {
    X[c] = z[n + c];
    X[n + c] = -2.0 * J0.G[c];
  }

  // dA[D][C*N2+B] = d A^C_B / d z^D, one dual sweep per direction
  std::vector<std::vector<double>> dA(N2);
  {
    std::vector<D1> zd(z.begin(), z.end());
    for (int D = 0; D < N2; ++D) {
      zd[D].d = 1.0;
      Jets<D1> J1 = make_jets<D1>(*spray.G, n, zd);
      std::vector<D1> gp1 = gamma_prime(J1);
      std::vector<D1> A1 = a_operator<D1>(J1, gp1, zd);
      dA[D].resize(N2 * N2);
      for (int i = 0; i < N2 * N2; ++i) dA[D][i] = A1[i].d;
      zd[D].d = 0.0;
    }
  }

  auto gp = [&](int C, int B, int D) { return gp0[(C * N2 + B) * N2 + D]; };
  Matrix R(N2, N2);
  for (int C = 0; C < N2; ++C)
    for (int B = 0; B < N2; ++B) {
      double v = 0.0;
      for (int D = 0; D < N2; ++D) {
        v += X[D] * dA[D][C * N2 + B];
        for (int E = 0; E < N2; ++E)
          v += X[D] * (gp(C, E, D) * A0[E * N2 + B] - gp(E, B, D) * A0[C * N2 + E]);
      }
      for (int E = 0; E < N2; ++E) v += A0[C * N2 + E] * A0[E * N2 + B];
      R(C, B) = v;
    }
  return R;
}

LocalStability classify_local_stability(const std::vector<num::ComplexEigenSet>& track,
                                        double tol) {
  LocalStability out;
  if (track.empty()) throw ConfigError("empty eigenvalue track");
  double max_re = -std::numeric_limits<double>::infinity();
  bool all_near_zero = true;
  for (const auto& set : track)
    for (const auto& ev : set.values) {
      max_re = std::max(max_re, ev.real());
      if (std::abs(ev.real()) > tol) all_near_zero = false;
      if (std::abs(ev.imag()) > tol) out.mixed_complex = true;
    }
  out.max_real_part = max_re;
  if (max_re > tol) out.verdict = LocalVerdict::Unstable;
  else if (all_near_zero) out.verdict = LocalVerdict::Marginal;
  else out.verdict = LocalVerdict::Stable;
  return out;
}

const char* to_string(LocalVerdict v) {
  switch (v) {
    case LocalVerdict::Stable: return "stable";
    case LocalVerdict::Unstable: return "unstable";
    case LocalVerdict::Marginal: return "marginal";
  }
  return "?";
}

}  // namespace geostab::kcc
