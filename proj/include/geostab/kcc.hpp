#ifndef GEOSTAB_KCC_HPP
#define GEOSTAB_KCC_HPP

#include <span>
#include <vector>

#include "geostab/flow.hpp"
#include "geostab/geometry.hpp"
#include "geostab/linalg.hpp"
#include "geostab/map.hpp"

namespace geostab::kcc {

using num::Matrix;
using num::Vec;

// Second-order dynamics in semispray form X = u^a d/dx^a - 2 G^a(x,u) d/du^a.
// G is a generic-scalar map of the combined state (x, u), so every connection
// quantity below comes out of forward-mode duals.
struct SprayData {
  int n = 0;
  num::MapPtr G;  // R^{2n} -> R^n

  Vec eval_G(std::span<const double> x, std::span<const double> u) const;
};

SprayData spray_from_expressions(int n, std::vector<expr::Expression> G_components);
// From accelerations xddot^a = accel^a(x,u):  G = -accel/2.
SprayData spray_from_accel(int n, std::vector<expr::Expression> accel);
// Geodesic spray of a metric: G^a = 1/2 Gamma^a_{bc}(x) u^b u^c.
SprayData geodesic_spray(const geom::MetricField& g);
// The associated flow X = (u, -2G) on TM, tagged second-order.
flow::VectorFlowSystem semispray_flow(const SprayData& spray);

// N^a_b = dG^a/du^b.
Matrix nonlinear_connection(const SprayData& spray, std::span<const double> x,
                            std::span<const double> u);

// Berwald-type connection data in the adapted basis: the only non-vanishing
// coefficients are Gamma^c_{ba} = d^2 G^c / du^b du^a (horizontal and
// vertical copies alike).
struct BerwaldData {
  int n = 0;
  Matrix N;
  std::vector<double> gamma;  // flattened (c*n + b)*n + a
  Vec x, u;
};
BerwaldData berwald_coefficients(const SprayData& spray, std::span<const double> x,
                                 std::span<const double> u);

// Deviation tensor of KCC theory:
//   P^a_b = -2 dG^a/dx^b - 2 G^c dN^a_b/du^c + u^c dN^a_b/dx^c + N^a_c N^c_b.
Matrix deviation_tensor_P(const SprayData& spray, std::span<const double> x,
                          std::span<const double> u);

// epsilon^a = 2 G^a - N^a_b u^b and its vertical derivative; dbar == 0
// characterizes sprays whose quadratic part carries all u-dependence.
struct EpsilonDefect {
  Vec epsilon;
  Matrix dbar;
  double max_abs_dbar = 0.0;
};
EpsilonDefect epsilon_defect(const SprayData& spray, std::span<const double> x,
                             std::span<const double> u);

// The local-stability operator on TTM: R~ = nabla_X A + A.A with
// A = T(X,.) + nabla_. X, assembled entirely in the coordinate-induced basis
// (the adapted basis is anholonomic; transforming the Berwald coefficients
// once avoids tracking its bracket terms). Returns a 2n x 2n matrix whose
// spectrum matches P's with doubled multiplicity whenever dbar(epsilon) = 0.
Matrix rtilde_operator(const SprayData& spray, std::span<const double> x,
                       std::span<const double> u);

enum class LocalVerdict { Stable, Unstable, Marginal };

struct LocalStability {
  LocalVerdict verdict = LocalVerdict::Marginal;
  bool mixed_complex = false;  // some |Im| > tol; criterion applied to real parts
  double max_real_part = 0.0;
};

LocalStability classify_local_stability(const std::vector<num::ComplexEigenSet>& track,
                                        double tol = 1e-8);

const char* to_string(LocalVerdict v);

}  // namespace geostab::kcc

#endif
