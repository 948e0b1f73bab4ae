#include "geostab/lyapunov.hpp"

#include <algorithm>
#include <cmath>

namespace geostab::lyap {

SeminormFamily SeminormFamily::euclidean() { return SeminormFamily(); }

SeminormFamily SeminormFamily::vertical_lift(geom::MetricField g) {
  SeminormFamily f;
  f.kind_ = Kind::VerticalLift;
  f.metric_ = std::move(g);
  return f;
}

SeminormFamily SeminormFamily::lagrange_metric(lag::LagrangianSystem sys) {
  SeminormFamily f;
  f.kind_ = Kind::LagrangeMetric;
  f.system_ = std::move(sys);
  return f;
}

SeminormFamily SeminormFamily::custom(int m, std::vector<expr::Expression> q) {
  if (static_cast<int>(q.size()) != m * m)
    throw ConfigError("custom seminorm needs an m x m expression matrix");
  SeminormFamily f;
  f.kind_ = Kind::Custom;
  f.custom_m_ = m;
  f.custom_q_ = std::move(q);
  return f;
}

std::string SeminormFamily::description() const {
  switch (kind_) {
    case Kind::Euclidean: return "euclidean";
    case Kind::VerticalLift: return "vertical-lift";
    case Kind::LagrangeMetric: return "lagrange-metric";
    case Kind::Custom: return "custom";
  }
  return "?";
}

int SeminormFamily::block_dim(int state_dim) const {
  switch (kind_) {
    case Kind::Euclidean: return state_dim;
    case Kind::VerticalLift:
      if (state_dim != 2 * metric_.dim())
        throw ConfigError("vertical-lift seminorm needs state dimension 2n");
      return metric_.dim();
    case Kind::LagrangeMetric:
      if (state_dim != 2 * system_.dim())
        throw ConfigError("lagrange-metric seminorm needs state dimension 2n");
      return system_.dim();
    case Kind::Custom:
      if (custom_m_ == state_dim) return state_dim;
      if (2 * custom_m_ == state_dim) return custom_m_;
      throw ConfigError("custom seminorm dimension matches neither state nor configuration block");
  }
  return state_dim;
}

Matrix SeminormFamily::gram(std::span<const double> state, int state_dim) const {
  int m = block_dim(state_dim);
  Matrix Q;
  switch (kind_) {
    case Kind::Euclidean:
      return Matrix::identity(state_dim);
    case Kind::VerticalLift:
      Q = metric_.eval_matrix(state.subspan(0, metric_.dim()));
      break;
    case Kind::LagrangeMetric: {
      int n = system_.dim();
      Q = lag::lagrange_metric(system_, state.subspan(0, n), state.subspan(n, n));
      break;
    }
    case Kind::Custom: {
      std::vector<double> buf;
      custom_q_[0].table()->fill(state, buf);
      Q = Matrix(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) Q(i, j) = custom_q_[i * m + j].eval<double>(buf);
      break;
    }
  }
  // PSD check by eigenvalue sampling
  num::ComplexEigenSet ev = num::eigenvalues(0.5 * (Q + Q.transposed()));
  double scale = std::max(Q.max_abs(), 1e-30);
  for (const auto& v : ev.values)
    if (v.real() < -1e-10 * scale)
      throw NegativeForm("seminorm form has negative eigenvalue " + std::to_string(v.real()));
  return Q;
}

double SeminormFamily::seminorm(std::span<const double> state,
                                std::span<const double> xi) const {
  int state_dim = static_cast<int>(xi.size());
  if (kind_ == Kind::Euclidean) {
    double s = num::dot(xi, xi);
    return std::sqrt(s);
  }
  int m = block_dim(state_dim);
  Matrix Q = gram(state, state_dim);
  double q = num::metric_dot(Q, xi.subspan(0, m), xi.subspan(0, m));
  if (q < -1e-12) throw NegativeForm("seminorm evaluated negative: " + std::to_string(q));
  return std::sqrt(std::max(q, 0.0));
}

ExponentEstimate lyapunov_exponent(const flow::VectorFlowSystem& system, Vec p0, Vec xi0,
                                   const SeminormFamily& family, double horizon,
                                   double renorm_dt, const flow::IntegratorSettings& settings) {
  int N = system.dim();
  double s0 = family.seminorm(p0, xi0);
  if (!(s0 > 0.0))
    throw DegenerateStart("initial perturbation has zero seminorm");
  for (double& v : xi0) v /= s0;

  ExponentEstimate est;
  if (family.degenerate_on(N)) est.degeneracy_flags.push_back("seminorm-degenerate-on-state");
  double accum = 0.0;
  double t0 = 0.0;
  double min_seen = std::numeric_limits<double>::infinity();

  flow::IntegratorSettings s = settings;
  s.sample_times = {horizon};
  flow::RenormCallback cb = [&](double t, std::span<const double> state,
                                std::vector<Vec>& frame) {
    double sn = family.seminorm(state, frame[0]);
    if (sn < 1e-300)
      throw SeminormCollapse("perturbation seminorm collapsed below 1e-300 at t=" +
                             std::to_string(t));
    min_seen = std::min(min_seen, sn);
    accum += std::log(sn);
    for (double& v : frame[0]) v /= sn;
    est.convergence.emplace_back(t, accum / (t - t0));
    ++est.renormalizations;
  };
  flow::variational_integrate(system, std::move(p0), {xi0}, t0, horizon, s, renorm_dt, cb);
  est.value = accum / (horizon - t0);
  if (min_seen < 1e-12) est.degeneracy_flags.push_back("seminorm-near-collapse");
  return est;
}

SpectrumEstimate lyapunov_spectrum(const flow::VectorFlowSystem& system, Vec p0,
                                   std::vector<Vec> frame0, const SeminormFamily& family,
                                   double horizon, double renorm_dt,
                                   const flow::IntegratorSettings& settings) {
  int N = system.dim();
  int m = static_cast<int>(frame0.size());
  if (m == 0 || m > N) throw ConfigError("spectrum frame must have 1..N vectors");
  if (family.degenerate_on(N))
    throw RankDeficient(
        "spectrum estimation needs a seminorm family nondegenerate on the frame span");

  SpectrumEstimate est;
  Vec accum(m, 0.0);
  double t0 = 0.0;

  // start from a metric-orthonormal frame
  {
    Matrix Q = family.gram(p0, N);
    auto gs = num::weighted_gram_schmidt(frame0, Q);
    frame0 = std::move(gs.frame);
  }

  flow::IntegratorSettings s = settings;
  s.sample_times = {horizon};
  flow::RenormCallback cb = [&](double t, std::span<const double> state,
                                std::vector<Vec>& frame) {
    Matrix Q = family.gram(state, N);
    auto gs = num::weighted_gram_schmidt(frame, Q);
    frame = std::move(gs.frame);
    for (int k = 0; k < m; ++k) accum[k] += gs.log_norms[k];
    est.times.push_back(t);
    std::vector<double> run(m);
    for (int k = 0; k < m; ++k) run[k] = accum[k] / (t - t0);
    est.convergence.push_back(std::move(run));
    ++est.renormalizations;
  };
  flow::variational_integrate(system, std::move(p0), frame0, t0, horizon, s, renorm_dt, cb);
  est.exponents.resize(m);
  for (int k = 0; k < m; ++k) est.exponents[k] = accum[k] / (horizon - t0);
  std::sort(est.exponents.rbegin(), est.exponents.rend());
  return est;
}

GlobalVerdict classify_global_stability(std::span<const double> exponents, double tol) {
  for (double e : exponents)
    if (e > tol) return GlobalVerdict::Unstable;
  return GlobalVerdict::Stable;
}

const char* to_string(GlobalVerdict v) {
  return v == GlobalVerdict::Stable ? "stable" : "unstable";
}

}  // namespace geostab::lyap
