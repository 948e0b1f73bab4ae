#ifndef GEOSTAB_LAGRANGIAN_HPP
#define GEOSTAB_LAGRANGIAN_HPP

#include <optional>
#include <span>

#include "geostab/expr.hpp"
#include "geostab/flow.hpp"
#include "geostab/geometry.hpp"
#include "geostab/kcc.hpp"

namespace geostab::lag {

using num::Matrix;
using num::Vec;

// General Lagrangian system (M, L) with L an expression over (x^a, u^a).
class LagrangianSystem {
 public:
  LagrangianSystem() = default;
  LagrangianSystem(int n, expr::Expression L);

  int dim() const { return n_; }
  const expr::Expression& L() const { return L_; }

  template <class T>
  T lagrangian(std::span<const T> xu) const {
    std::vector<T> buf;
    L_.table()->fill(xu, buf);
    return L_.eval<T>(buf);
  }

 private:
  int n_ = 0;
  expr::Expression L_;
};

// Natural Lagrangian L = 1/2 k_ab(x) u^a u^b - V(x); k and V share one
// position-symbol table.
class NaturalLagrangian {
 public:
  NaturalLagrangian() = default;
  NaturalLagrangian(geom::MetricField k, expr::Expression V);

  int dim() const { return k_.dim(); }
  const geom::MetricField& kinetic() const { return k_; }
  const expr::Expression& potential() const { return V_; }

  template <class T>
  T potential_at(std::span<const T> x) const {
    std::vector<T> buf;
    V_.table()->fill(x, buf);
    return V_.eval<T>(buf);
  }

 private:
  geom::MetricField k_;
  expr::Expression V_;
};

// Generalized Lagrange metric g_ab = d^2 L / du^a du^b.
Matrix lagrange_metric(const LagrangianSystem& sys, std::span<const double> x,
                       std::span<const double> u);

// Energy E = u^a dL/du^a - L.
double energy(const LagrangianSystem& sys, std::span<const double> x, std::span<const double> u);
double energy(const NaturalLagrangian& nat, std::span<const double> x, std::span<const double> u);

// Semispray of the Lagrangian flow: X_2 solved pointwise from
//   g_ab X_2^a = dL/dx^b - (d^2 L / dx^a du^b) u^a.
flow::VectorFlowSystem semispray_from_lagrangian(const LagrangianSystem& sys);
flow::VectorFlowSystem semispray(const NaturalLagrangian& nat);

// Spray coefficients G = -X_2 / 2 feeding the KCC machinery.
kcc::SprayData spray_of(const LagrangianSystem& sys);
kcc::SprayData spray_of(const NaturalLagrangian& nat);
Vec spray_G(const LagrangianSystem& sys, std::span<const double> x, std::span<const double> u);

// P^a_b = -R_(k)^a_{pbq} u^p u^q - grad_k^a grad_b V for natural systems.
Matrix perturbation_operator_natural(const NaturalLagrangian& nat, std::span<const double> x,
                                     std::span<const double> u);

// Integrates the k-covariant second-order perturbation equation
//   nabla nabla xi = -(R(u,.)u + HessV) xi
// jointly with the base trajectory (same initial state and sample times as
// `along`). xidot0 is the plain time derivative, matching the xi_2 block of
// the variational equation. Returned states are the xi components.
flow::Trajectory evolve_perturbation_natural(const NaturalLagrangian& nat,
                                             const flow::Trajectory& along, Vec xi0, Vec xidot0);

namespace detail {
// Shared covariant-deviation integrator: eta0 is the covariant derivative of
// xi at the start; V may be null (pure geodesic deviation).
flow::Trajectory covariant_deviation(const geom::MetricField& k, const expr::Expression* V,
                                     Vec x0, Vec u0, Vec xi0, Vec eta0, double t0, double t1,
                                     const std::vector<double>& sample_times,
                                     const flow::IntegratorSettings& settings);
}  // namespace detail

}  // namespace geostab::lag

#endif
