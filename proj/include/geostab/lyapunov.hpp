#ifndef GEOSTAB_LYAPUNOV_HPP
#define GEOSTAB_LYAPUNOV_HPP

#include <string>
#include <utility>
#include <vector>

#include "geostab/flow.hpp"
#include "geostab/geometry.hpp"
#include "geostab/lagrangian.hpp"

namespace geostab::lyap {

using num::Matrix;
using num::Vec;

// A state-dependent quadratic size measure on perturbation space. Vertical
// lift and Lagrange-metric variants act on the configuration block only and
// are therefore degenerate as forms on the full state space.
class SeminormFamily {
 public:
  enum class Kind { Euclidean, VerticalLift, LagrangeMetric, Custom };

  static SeminormFamily euclidean();
  static SeminormFamily vertical_lift(geom::MetricField g);
  static SeminormFamily lagrange_metric(lag::LagrangianSystem sys);
  // m x m expression matrix over the state symbols; applies to the full
  // state when m equals the state dimension, to the configuration block of a
  // second-order state when m is half of it.
  static SeminormFamily custom(int m, std::vector<expr::Expression> q);

  Kind kind() const { return kind_; }
  std::string description() const;

  // dimension of the block the form acts on, and whether that is a proper
  // sub-block (degenerate on the full state space)
  int block_dim(int state_dim) const;
  bool degenerate_on(int state_dim) const { return block_dim(state_dim) < state_dim; }

  // quadratic form matrix on the governed block, PSD-checked by eigenvalue
  // sampling; throws NegativeForm
  Matrix gram(std::span<const double> state, int state_dim) const;

  double seminorm(std::span<const double> state, std::span<const double> xi) const;

 private:
  Kind kind_ = Kind::Euclidean;
  geom::MetricField metric_;       // VerticalLift
  lag::LagrangianSystem system_;   // LagrangeMetric
  int custom_m_ = 0;               // Custom
  std::vector<expr::Expression> custom_q_;
};

struct ExponentEstimate {
  double value = 0.0;
  std::vector<std::pair<double, double>> convergence;  // (t, running average)
  int renormalizations = 0;
  std::vector<std::string> degeneracy_flags;
};

struct SpectrumEstimate {
  std::vector<double> exponents;  // descending
  std::vector<double> times;
  std::vector<std::vector<double>> convergence;  // per time: running averages (QR order)
  int renormalizations = 0;
};

// Single-vector Lyapunov exponent via variational integration with
// seminorm renormalization every renorm_dt: value = (sum of log stretches)/T.
ExponentEstimate lyapunov_exponent(const flow::VectorFlowSystem& system, Vec p0, Vec xi0,
                                   const SeminormFamily& family, double horizon = 100.0,
                                   double renorm_dt = 0.5,
                                   const flow::IntegratorSettings& settings = {});

// Benettin-style spectrum: frame propagation with metric-weighted
// Gram-Schmidt each renorm_dt. The family must be nondegenerate on the
// frame's span, so block forms are rejected here.
SpectrumEstimate lyapunov_spectrum(const flow::VectorFlowSystem& system, Vec p0,
                                   std::vector<Vec> frame0, const SeminormFamily& family,
                                   double horizon = 100.0, double renorm_dt = 0.5,
                                   const flow::IntegratorSettings& settings = {});

enum class GlobalVerdict { Stable, Unstable };

GlobalVerdict classify_global_stability(std::span<const double> exponents, double tol);

const char* to_string(GlobalVerdict v);

}  // namespace geostab::lyap

#endif
