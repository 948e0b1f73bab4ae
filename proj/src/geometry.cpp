#include "geostab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace geostab::geom {

using num::D1;
using num::Matrix;
using num::Vec;

MetricField::MetricField(int n, std::vector<expr::Expression> entries, Signature sig)
    : n_(n), entries_(std::move(entries)), sig_(sig) {
  if (static_cast<int>(entries_.size()) != n * n)
    throw ConfigError("metric needs n*n component expressions");
  table_ = entries_[0].table();
  for (const auto& e : entries_)
    if (e.table() != table_) throw ConfigError("metric components must share one symbol table");
  if (table_->free_count() < n)
    throw ConfigError("metric components must be defined over n position symbols");
}

MetricField MetricField::euclidean(int n) {
  auto table = expr::make_table(n, false);
  std::vector<expr::Expression> es;
  es.reserve(n * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      es.push_back(expr::Expression::constant(a == b ? 1.0 : 0.0, table));
  return MetricField(n, std::move(es));
}

Matrix MetricField::eval_matrix(std::span<const double> x) const {
  std::vector<double> g = eval(x);
  Matrix m(n_, n_);
  double scale = 0.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b) {
      if (std::abs(g[a * n_ + b] - g[b * n_ + a]) > 1e-12 * std::max(1.0, scale))
        throw ConfigError("metric evaluates asymmetric at queried point");
      m(a, b) = g[a * n_ + b];
    }
  return m;
}

MetricField MetricField::conformally_scaled(const expr::Expression& sigma2) const {
  if (sigma2.table() != table_)
    throw ConfigError("conformal factor must share the metric's symbol table");
  std::vector<expr::Expression> es;
  es.reserve(n_ * n_);
  for (int i = 0; i < n_ * n_; ++i)
    es.push_back(expr::Expression::binary(expr::BinaryOp::Mul, sigma2, entries_[i]));
  return MetricField(n_, std::move(es), sig_);
}

std::vector<double> christoffel(const MetricField& g, std::span<const double> x) {
  return christoffel_t<double>(g, x);
}

std::vector<double> riemann(const MetricField& g, std::span<const double> x) {
  int n = g.dim();
  std::vector<double> gamma = christoffel_t<double>(g, x);
  // dgamma[e][a][b][c] = d Gamma^a_{bc} / d x^e
  std::vector<double> dgamma(n * n * n * n);
  std::vector<D1> xd(x.begin(), x.end());
  for (int e = 0; e < n; ++e) {
    xd[e].d = 1.0;
    std::vector<D1> gd = christoffel_t<D1>(g, xd);
    for (int i = 0; i < n * n * n; ++i) dgamma[e * n * n * n + i] = gd[i].d;
    xd[e].d = 0.0;
  }
  auto G = [&](int a, int b, int c) { return gamma[(a * n + b) * n + c]; };
  auto dG = [&](int e, int a, int b, int c) { return dgamma[((e * n + a) * n + b) * n + c]; };
  std::vector<double> R(n * n * n * n, 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double v = dG(c, a, d, b) - dG(d, a, c, b);
          for (int e = 0; e < n; ++e) v += G(a, c, e) * G(e, d, b) - G(a, d, e) * G(e, c, b);
          R[((a * n + b) * n + c) * n + d] = v;
        }
  return R;
}

double ricci_scalar(const MetricField& g, std::span<const double> x) {
  int n = g.dim();
  std::vector<double> R = riemann(g, x);
  std::vector<double> gx = g.eval(x);
  std::vector<double> ginv = num::invert_scaled(gx, n, "metric");
  double s = 0.0;
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      double ric = 0.0;
      for (int a = 0; a < n; ++a) ric += R[((a * n + b) * n + a) * n + d];
      s += ginv[b * n + d] * ric;
    }
  return s;
}

double conformal_ricci(const MetricField& k, const expr::Expression& sigma2,
                       std::span<const double> x) {
  if (sigma2.table() != k.table())
    throw ConfigError("conformal factor must share the metric's symbol table");
  int n = k.dim();
  std::vector<double> buf;
  k.table()->fill(x, buf);
  double s2 = sigma2.eval<double>(buf);
  if (s2 < 1e-6)
    throw BoundaryPoint("conformal factor sigma^2 = " + std::to_string(s2) +
                        " below 1e-6 threshold");

  // first and second partials of sigma2
  Vec ds(n);
  Matrix dds(n, n);
  {
    std::vector<num::D2> xd(n);
    for (int i = 0; i < n; ++i) xd[i] = num::D2(D1(x[i], 0.0), D1(0.0, 0.0));
    std::vector<num::D2> b2;
    for (int i = 0; i < n; ++i) {
      xd[i].v.d = 1.0;
      for (int j = i; j < n; ++j) {
        xd[j].d.v = 1.0;
        k.table()->fill(std::span<const num::D2>(xd), b2);
        num::D2 r = sigma2.eval<num::D2>(b2);
        if (j == i) ds[i] = r.v.d;
        dds(i, j) = dds(j, i) = r.d.d;
        xd[j].d.v = 0.0;
      }
      xd[i].v.d = 0.0;
    }
  }

  // f = ln sigma = 0.5 ln sigma2
  Vec df(n);
  Matrix ddf(n, n);
  for (int i = 0; i < n; ++i) df[i] = 0.5 * ds[i] / s2;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) ddf(i, j) = 0.5 * (dds(i, j) / s2 - ds[i] * ds[j] / (s2 * s2));

  std::vector<double> kx = k.eval(x);
  std::vector<double> kinv = num::invert_scaled(kx, n, "metric");
  std::vector<double> gamma = christoffel_t<double>(k, x);

  double box = 0.0, grad2 = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double hess = ddf(a, b);
      for (int c = 0; c < n; ++c) hess -= gamma[(c * n + a) * n + b] * df[c];
      box += kinv[a * n + b] * hess;
      grad2 += kinv[a * n + b] * df[a] * df[b];
    }
  double rk = ricci_scalar(k, x);
  return (rk - 2.0 * (n - 1) * box - double(n - 2) * double(n - 1) * grad2) / s2;
}

// ---- parallel transport ----

CurveInterpolant::CurveInterpolant(const flow::Trajectory& curve) : curve_(curve) {
  if (curve.dim % 2 != 0 || curve.params.size() < 2)
    throw ConfigError("parallel transport needs a sampled (x,u) trajectory");
  n_ = curve.dim / 2;
}

void CurveInterpolant::eval(double t, std::span<double> x, std::span<double> xdot) const {
  const auto& ps = curve_.params;
  auto it = std::upper_bound(ps.begin(), ps.end(), t);
  std::size_t k = it == ps.begin() ? 0 : static_cast<std::size_t>(it - ps.begin() - 1);
  if (k >= ps.size() - 1) k = ps.size() - 2;
  double h = ps[k + 1] - ps[k];
  double th = (t - ps[k]) / h;
  const Vec& s0 = curve_.states[k];
  const Vec& s1 = curve_.states[k + 1];
  for (int i = 0; i < n_; ++i) {
    double y0 = s0[i], y1 = s1[i];
    double f0 = s0[n_ + i], f1 = s1[n_ + i];
    double d = y1 - y0;
    x[i] = (1.0 - th) * y0 + th * y1 +
           th * (th - 1.0) * ((1.0 - 2.0 * th) * d + (th - 1.0) * h * f0 + th * h * f1);
    double dp = d + (2.0 * th - 1.0) * ((1.0 - 2.0 * th) * d + (th - 1.0) * h * f0 + th * h * f1) +
                th * (th - 1.0) * (-2.0 * d + h * f0 + h * f1);
    xdot[i] = dp / h;
  }
}

std::vector<std::vector<Vec>> parallel_transport_frame(const MetricField& g,
                                                       const flow::Trajectory& curve,
                                                       const std::vector<Vec>& frame0) {
  CurveInterpolant interp(curve);
  int n = g.dim();
  if (interp.config_dim() != n) throw ConfigError("trajectory dimension does not match metric");
  int m = static_cast<int>(frame0.size());
  for (const auto& e : frame0)
    if (static_cast<int>(e.size()) != n)
      throw ConfigError("frame vectors must have configuration dimension");

  Vec x(n), xdot(n);
  flow::detail::Rhs rhs = [&](double t, std::span<const double> E, std::span<double> dE) {
    interp.eval(t, x, xdot);
    std::vector<double> gamma = christoffel_t<double>(g, x);
    for (int k = 0; k < m; ++k)
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c)
            s += gamma[(a * n + b) * n + c] * xdot[b] * E[k * n + c];
        dE[k * n + a] = -s;
      }
  };

  Vec E0(m * n);
  for (int k = 0; k < m; ++k) std::copy(frame0[k].begin(), frame0[k].end(), E0.begin() + k * n);

  std::vector<std::vector<Vec>> out;
  flow::IntegratorSettings settings;  // default tight RK45
  flow::detail::DriverHooks hooks;
  hooks.sample_times = curve.params;
  hooks.record = [&](double, std::span<const double> E) {
    std::vector<Vec> fr(m);
    for (int k = 0; k < m; ++k) fr[k].assign(E.begin() + k * n, E.begin() + (k + 1) * n);
    out.push_back(std::move(fr));
  };
  flow::detail::integrate_driver(rhs, m * n, std::move(E0), curve.params.front(),
                                 curve.params.back(), settings, hooks);
  return out;
}

}  // namespace geostab::geom
