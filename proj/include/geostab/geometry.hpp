#ifndef GEOSTAB_GEOMETRY_HPP
#define GEOSTAB_GEOMETRY_HPP

#include <span>
#include <vector>

#include "geostab/expr.hpp"
#include "geostab/flow.hpp"
#include "geostab/linalg.hpp"

namespace geostab::geom {

enum class Signature { PositiveDefinite, Indefinite };

// Riemannian (or indefinite) metric on configuration space with
// expression-valued components. Curvature quantities are evaluated pointwise
// through forward-mode duals; nothing is precomputed on grids.
class MetricField {
 public:
  MetricField() = default;
  MetricField(int n, std::vector<expr::Expression> entries,  // n*n row-major, symmetric
              Signature sig = Signature::PositiveDefinite);

  static MetricField euclidean(int n);

  int dim() const { return n_; }
  Signature signature() const { return sig_; }
  const expr::TablePtr& table() const { return table_; }
  const expr::Expression& entry(int a, int b) const { return entries_[a * n_ + b]; }

  template <class T>
  std::vector<T> eval(std::span<const T> x) const {
    std::vector<T> buf;
    table_->fill(x, buf);
    std::vector<T> g(n_ * n_);
    for (int i = 0; i < n_ * n_; ++i) g[i] = entries_[i].eval<T>(buf);
    return g;
  }

  // Double-precision evaluation with the symmetry invariant enforced.
  num::Matrix eval_matrix(std::span<const double> x) const;

  // Componentwise conformal rescaling sigma2 * g over the same symbol table.
  MetricField conformally_scaled(const expr::Expression& sigma2) const;

 private:
  int n_ = 0;
  std::vector<expr::Expression> entries_;
  Signature sig_ = Signature::PositiveDefinite;
  expr::TablePtr table_;
};

// Levi-Civita connection coefficients Gamma^a_{bc}, flattened a*n*n + b*n + c.
// Generic over the scalar type so sprays built on metrics stay differentiable.
template <class T>
std::vector<T> christoffel_t(const MetricField& g, std::span<const T> x) {
  using num::Dual;
  int n = g.dim();
  std::vector<T> gx = g.eval(x);
  std::vector<T> ginv = num::invert_scaled(gx, n, "metric");
  // dg[c][a][b] = d g_ab / d x_c
  std::vector<T> dg(n * n * n);
  std::vector<Dual<T>> xd(n);
  for (int i = 0; i < n; ++i) xd[i] = Dual<T>(x[i], T(0.0));
  for (int c = 0; c < n; ++c) {
    xd[c].d = T(1.0);
    std::vector<Dual<T>> gd = g.eval(std::span<const Dual<T>>(xd));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) dg[(c * n + a) * n + b] = gd[a * n + b].d;
    xd[c].d = T(0.0);
  }
  std::vector<T> gamma(n * n * n, T(0.0));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        T s(0.0);
        for (int d = 0; d < n; ++d) {
          T term = dg[(b * n + d) * n + c] + dg[(c * n + d) * n + b] - dg[(d * n + b) * n + c];
          s = s + ginv[a * n + d] * term;
        }
        gamma[(a * n + b) * n + c] = 0.5 * s;
      }
  return gamma;
}

std::vector<double> christoffel(const MetricField& g, std::span<const double> x);

// Curvature tensor R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
//                            + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb},
// flattened ((a*n + b)*n + c)*n + d.
std::vector<double> riemann(const MetricField& g, std::span<const double> x);

double ricci_scalar(const MetricField& g, std::span<const double> x);

// Ricci scalar of sigma2 * k through the conformal rescaling identity
//   R = sigma^-2 (R_k - 2(n-1) box_k ln sigma - (n-2)(n-1) |grad_k ln sigma|^2).
// Throws BoundaryPoint when sigma2 falls below 1e-6.
double conformal_ricci(const MetricField& k, const expr::Expression& sigma2,
                       std::span<const double> x);

// Parallel transport of a frame along a curve on the metric manifold. The
// trajectory must carry (x, u = dx/dt) states of a second-order flow; the
// curve between samples is cubic Hermite. Returns one frame per sample.
std::vector<std::vector<num::Vec>> parallel_transport_frame(
    const MetricField& g, const flow::Trajectory& curve, const std::vector<num::Vec>& frame0);

// Hermite interpolation of (x, xdot) along a second-order trajectory.
class CurveInterpolant {
 public:
  explicit CurveInterpolant(const flow::Trajectory& curve);
  void eval(double t, std::span<double> x, std::span<double> xdot) const;
  int config_dim() const { return n_; }

 private:
  const flow::Trajectory& curve_;
  int n_;
};

}  // namespace geostab::geom

#endif
