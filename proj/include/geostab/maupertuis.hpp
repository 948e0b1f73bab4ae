#ifndef GEOSTAB_MAUPERTUIS_HPP
#define GEOSTAB_MAUPERTUIS_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geostab/kcc.hpp"
#include "geostab/lagrangian.hpp"
#include "geostab/lyapunov.hpp"

namespace geostab::mj {

using lag::NaturalLagrangian;
using num::Matrix;
using num::Vec;

// Fixed-energy translation of a natural Lagrangian system into geodesics of
// g_E = C |E - V| k, with the boundary function b(x) = E - V(x).
class JacobiTranslation {
 public:
  JacobiTranslation(NaturalLagrangian nat, double E, double C = 2.0);

  const NaturalLagrangian& source() const { return nat_; }
  double energy() const { return E_; }
  double conformal_constant() const { return C_; }
  const geom::MetricField& metric() const { return gE_; }
  const expr::Expression& boundary_expr() const { return b_; }

  double boundary_value(std::span<const double> x) const;     // E - V(x)
  double boundary_band() const { return 1e-8 * (1.0 + std::abs(E_)); }

  // |dt/dtau| = 1 / (sqrt(2C) |E - V|); throws BoundaryPoint within 1e-10.
  double dt_dtau(std::span<const double> x) const;

  // affine initial velocity from Lagrangian-side (x, u)
  Vec affine_velocity(std::span<const double> x, std::span<const double> u) const;

 private:
  NaturalLagrangian nat_;
  double E_ = 0.0, C_ = 2.0;
  expr::Expression b_;
  geom::MetricField gE_;
};

Matrix jacobi_metric(const NaturalLagrangian& nat, double E, double C,
                     std::span<const double> x);
double time_reparametrization(const NaturalLagrangian& nat, double E, double C,
                              std::span<const double> x);

// Affinely parametrized geodesic flow of a metric: accel = -Gamma(x) u u.
flow::VectorFlowSystem geodesic_flow(const geom::MetricField& g);

// Geodesic of g_E with the Lagrangian-time quadrature dt/dtau carried along,
// terminated at the boundary band. Samples are (x, v, t) triples.
struct GeodesicRun {
  std::vector<double> taus;
  std::vector<Vec> states;  // (x, v = dx/dtau)
  std::vector<double> t_of_tau;
  bool boundary_hit = false;
  double boundary_tau = 0.0;
  std::vector<flow::EventRecord> events;
};
GeodesicRun integrate_jacobi_geodesic(const JacobiTranslation& jt, Vec x0, Vec v0,
                                      double tau_end,
                                      const std::vector<double>& sample_taus = {},
                                      bool ricci_probes = false,
                                      std::optional<double> stop_at_lagrangian_time = {});

// Lagrangian trajectory -> affine geodesic (tau-parametrized).
flow::Trajectory translate_to_geodesic(const JacobiTranslation& jt,
                                       const flow::Trajectory& lagrangian_traj);
// Affine geodesic -> Lagrangian time parametrization. Boundary hits abort
// with the partial result and the event recorded on the trajectory.
flow::Trajectory translate_trajectory(const JacobiTranslation& jt,
                                      const flow::Trajectory& geodesic);

// Jacobi field along a geodesic of g: nabla nabla xi = -R(xi, xdot) terms;
// xi_prime0 is the initial covariant derivative. States are xi components.
flow::Trajectory jacobi_deviation(const geom::MetricField& g, const flow::Trajectory& geodesic,
                                  Vec xi0, Vec xi_prime0);

// Parallel orthonormal frame (e_0 = xdot) along a geodesic and the deviation
// operator expressed in that frame; the e_0 row/column vanish, leaving the
// reduced system xi''^alpha = K^alpha_beta xi^beta.
struct FrameSplit {
  std::vector<double> taus;
  std::vector<std::vector<Vec>> frames;  // per sample, n vectors
  std::vector<Matrix> reduced_operator;  // per sample, frame components of -R(.,v)v

  // integrate the reduced equations (components in the transported frame)
  std::vector<std::pair<double, Vec>> integrate_reduced(Vec xi_frame0, Vec xidot_frame0) const;

  // implementation detail for integrate_reduced
  geom::MetricField metric_;
  Vec x0_, v0_;
  double tau_end_ = 0.0;
};
FrameSplit parallel_frame_split(const geom::MetricField& g, const flow::Trajectory& geodesic);

// The two structurally-zero exponents of the translated picture, measured as
// the 2-frame Lyapunov spectrum spanned by the flow direction and the
// velocity-shift mode (QR separates the linear-in-tau contamination).
std::pair<double, double> shift_mode_exponents(const geom::MetricField& g, Vec x0, Vec v0,
                                               double horizon = 50.0, double renorm_dt = 0.5);

struct BoundaryDiagnostics {
  bool applicable = true;       // false for fixed points
  bool fixed_point = false;
  bool boundary_hit = false;
  double hit_tau = 0.0;
  std::vector<std::pair<double, double>> ricci_samples;  // (|b| threshold, Ricci of g_E)
  std::vector<std::string> flags;
};
BoundaryDiagnostics boundary_diagnostics(const JacobiTranslation& jt, Vec x0, Vec u0,
                                         double tau_horizon = 100.0);

struct CompareSettings {
  // Lyapunov horizon for both pictures. Marginal (shift-type) modes converge
  // like log(t)/t, so verdicts at tol 0.05 need a few hundred time units.
  double horizon = 200.0;
  double renorm_dt = 0.5;
  double verdict_tol = 0.05;     // global verdict tolerance on exponents
  double local_tol = 1e-8;       // local verdict tolerance on eigenvalues
  double C = 2.0;
  double track_span = 10.0;      // eigenvalue-track / round-trip time window
  int track_samples = 50;
  std::optional<Vec> xi0;        // initial perturbation (dimension 2n)
};

struct PictureReport {
  bool applicable = true;
  lyap::ExponentEstimate exponent;
  lyap::GlobalVerdict global_verdict = lyap::GlobalVerdict::Stable;
  std::vector<double> track_times;
  std::vector<num::ComplexEigenSet> eigen_track;
  kcc::LocalStability local;
  std::vector<std::string> notes;
};

struct ComparisonReport {
  int n = 0;
  double energy = 0.0;
  PictureReport intrinsic;
  PictureReport geodesic;
  std::pair<double, double> shift_modes{0.0, 0.0};
  bool shift_modes_valid = false;
  double round_trip_error = std::numeric_limits<double>::quiet_NaN();
  int energy_excluded_count = 0;
  std::vector<Vec> energy_projected_frame;
  std::vector<std::string> flags;
};

ComparisonReport compare_stability(const NaturalLagrangian& nat, double E, Vec x0, Vec u0,
                                   const CompareSettings& settings = {});

}  // namespace geostab::mj

#endif
