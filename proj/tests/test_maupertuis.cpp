#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "geostab/maupertuis.hpp"

using namespace geostab;
using lag::NaturalLagrangian;
using mj::JacobiTranslation;
using num::Matrix;
using num::Vec;

namespace {

NaturalLagrangian flat_natural(const char* potential) {
  auto t = expr::make_table(2, false);
  std::vector<expr::Expression> es;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) es.push_back(expr::Expression::constant(a == b ? 1.0 : 0.0, t));
  return NaturalLagrangian(geom::MetricField(2, std::move(es)),
                           expr::Expression::parse(potential, t));
}

NaturalLagrangian oscillator_1d(double mu) {
  auto t = expr::make_table(1, false, {{"mu", mu}});
  return NaturalLagrangian(geom::MetricField(1, {expr::Expression::constant(1.0, t)}),
                           expr::Expression::parse("-0.5*mu^2*x1^2", t));
}

geom::MetricField sphere_metric() {
  auto t = expr::make_table(2, false);
  return geom::MetricField(2, {expr::Expression::parse("1", t), expr::Expression::parse("0", t),
                               expr::Expression::parse("0", t),
                               expr::Expression::parse("sin(x1)^2", t)});
}

}  // namespace

TEST_CASE("jacobi metric values") {
  auto freesys = flat_natural("0");
  Matrix m = mj::jacobi_metric(freesys, 0.5, 2.0, Vec{0.3, 0.1});
  CHECK(m(0, 0) == doctest::Approx(1.0));
  CHECK(m(1, 1) == doctest::Approx(1.0));
  CHECK(m(0, 1) == doctest::Approx(0.0));

  auto well = flat_natural("x1^2+x2^2");
  Matrix m2 = mj::jacobi_metric(well, 1.0, 2.0, Vec{0.5, 0.0});
  CHECK(m2(0, 0) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(m2(1, 1) == doctest::Approx(1.5).epsilon(1e-14));

  CHECK_THROWS_AS(mj::jacobi_metric(well, 1.0, 2.0, Vec{1.0, 0.0}), BoundaryPoint);
}

TEST_CASE("time reparametrization") {
  auto freesys = flat_natural("0");
  CHECK(mj::time_reparametrization(freesys, 0.5, 2.0, Vec{0.2, 0.2}) == doctest::Approx(1.0));
  auto well = flat_natural("x1^2+x2^2");
  CHECK(mj::time_reparametrization(well, 1.0, 2.0, Vec{0.0, 0.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(mj::time_reparametrization(well, 1.0, 2.0, Vec{1.0, 0.0}), BoundaryPoint);
}

TEST_CASE("affine normalization holds along jacobi geodesics") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);
  Vec x0{0.92387953251128674, 0.0};
  Vec u0{0.0, 0.54119610014619701};
  Vec v0 = jt.affine_velocity(x0, u0);
  auto run = mj::integrate_jacobi_geodesic(jt, x0, v0, 3.0,
                                           {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0}, false, {});
  REQUIRE(!run.boundary_hit);
  for (const auto& st : run.states) {
    Vec x{st[0], st[1]}, v{st[2], st[3]};
    Matrix g = jt.metric().eval_matrix(x);
    CHECK(std::abs(num::metric_dot(g, v, v)) == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("geodesic flow of the sphere closes a great circle") {
  auto sys = mj::geodesic_flow(sphere_metric());
  flow::IntegratorSettings s;
  s.sample_times = {2.0 * M_PI};
  flow::Trajectory tr = flow::integrate(sys, {M_PI / 2.0, 0.0, 0.0, 1.0}, 0.0, 2.0 * M_PI, s);
  CHECK(tr.final_state()[0] == doctest::Approx(M_PI / 2.0).epsilon(1e-5));
  CHECK(std::abs(tr.final_state()[1] - 2.0 * M_PI) < 1e-5);
}

TEST_CASE("radial geodesics reach the boundary in finite proper time") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);
  Vec x0{0.0, 0.0}, u0{std::sqrt(2.0), 0.0};
  Vec v0 = jt.affine_velocity(x0, u0);
  auto run = mj::integrate_jacobi_geodesic(jt, x0, v0, 10.0, {}, false, {});
  REQUIRE(run.boundary_hit);
  // tau* = int_0^1 sqrt(2(1-r^2)) dr = pi sqrt(2) / 4
  CHECK(run.boundary_tau == doctest::Approx(M_PI * std::sqrt(2.0) / 4.0).epsilon(1e-3));
}

TEST_CASE("translation round trip: free particle keeps t = tau") {
  auto freesys = flat_natural("0");
  JacobiTranslation jt(freesys, 0.5, 2.0);
  auto sys = lag::semispray(freesys);
  flow::IntegratorSettings s;
  for (int k = 0; k <= 20; ++k) s.sample_times.push_back(0.25 * k);
  flow::Trajectory el = flow::integrate(sys, {0.0, 0.0, 1.0, 0.0}, 0.0, 5.0, s);
  flow::Trajectory geo = mj::translate_to_geodesic(jt, el);
  for (std::size_t k = 0; k < geo.params.size(); ++k)
    CHECK(geo.params[k] == doctest::Approx(el.params[k]).epsilon(1e-10));
}

TEST_CASE("translation round trip on a bounded orbit") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);
  auto sys = lag::semispray(well);
  Vec z0{0.92387953251128674, 0.0, 0.0, 0.54119610014619701};
  flow::IntegratorSettings s;
  for (int k = 0; k <= 50; ++k) s.sample_times.push_back(0.1 * k);
  flow::Trajectory el = flow::integrate(sys, z0, 0.0, 5.0, s);
  flow::Trajectory geo = mj::translate_to_geodesic(jt, el);
  flow::Trajectory back = mj::translate_trajectory(jt, geo);
  REQUIRE(back.params.size() == geo.params.size());
  // resample the direct solution at the round-tripped times and compare
  flow::IntegratorSettings s2;
  s2.sample_times = back.params;
  flow::Trajectory direct = flow::integrate(sys, z0, 0.0, back.params.back() + 1e-9, s2);
  double worst = 0.0;
  for (std::size_t k = 0; k < back.params.size(); ++k)
    for (int i = 0; i < 2; ++i)
      worst = std::max(worst, std::abs(back.states[k][i] - direct.states[k][i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("translation equivalence holds across non-radial orbits") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);
  auto sys = lag::semispray(well);
  for (double l : {0.3, 0.5, 0.65}) {
    CAPTURE(l);
    double r0 = std::sqrt((1.0 + std::sqrt(1.0 - 2.0 * l * l)) / 2.0);
    Vec z0{r0, 0.0, 0.0, l / r0};
    flow::IntegratorSettings s;
    for (int k = 0; k <= 40; ++k) s.sample_times.push_back(0.1 * k);
    flow::Trajectory el = flow::integrate(sys, z0, 0.0, 4.0, s);
    flow::Trajectory back = mj::translate_trajectory(jt, mj::translate_to_geodesic(jt, el));
    flow::IntegratorSettings s2;
    s2.sample_times = back.params;
    flow::Trajectory direct = flow::integrate(sys, z0, 0.0, back.params.back() + 1e-9, s2);
    double worst = 0.0;
    for (std::size_t k = 0; k < back.params.size(); ++k)
      for (int i = 0; i < 2; ++i)
        worst = std::max(worst, std::abs(back.states[k][i] - direct.states[k][i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("one-dimensional translation matches direct integration until the band") {
  auto osc = oscillator_1d(1.0);
  JacobiTranslation jt(osc, -0.5, 2.0);
  auto sys = lag::semispray(osc);
  Vec z0{std::cosh(0.5), std::sinh(0.5)};
  flow::IntegratorSettings s;
  for (int k = 0; k <= 30; ++k) s.sample_times.push_back(0.1 * k);
  flow::Trajectory el = flow::integrate(sys, z0, 0.0, 3.0, s);
  flow::Trajectory geo = mj::translate_to_geodesic(jt, el);
  flow::Trajectory back = mj::translate_trajectory(jt, geo);
  flow::IntegratorSettings s2;
  s2.sample_times = back.params;
  flow::Trajectory direct = flow::integrate(sys, z0, 0.0, back.params.back() + 1e-9, s2);
  for (std::size_t k = 0; k < back.params.size(); ++k)
    CHECK(std::abs(back.states[k][0] - direct.states[k][0]) < 1e-6);
}

TEST_CASE("translation from a boundary start skips the band and then matches") {
  // E = -1/2 with x(0) = 1, u(0) = 0 starts exactly on the boundary; the
  // translated geodesic begins at the first off-band sample
  auto osc = oscillator_1d(1.0);
  JacobiTranslation jt(osc, -0.5, 2.0);
  auto sys = lag::semispray(osc);
  flow::IntegratorSettings s;
  for (int k = 0; k <= 30; ++k) s.sample_times.push_back(0.1 * k);
  flow::Trajectory el = flow::integrate(sys, {1.0, 0.0}, 0.0, 3.0, s);
  flow::Trajectory geo = mj::translate_to_geodesic(jt, el);
  REQUIRE(!geo.params.empty());
  CHECK(geo.params.size() < el.params.size());  // the on-band start is dropped

  flow::Trajectory back = mj::translate_trajectory(jt, geo);
  // re-base: direct integration from the geodesic's own starting state
  double b0 = jt.boundary_value(std::span<const double>(geo.states.front()).subspan(0, 1));
  double u0 = geo.states.front()[1] * std::sqrt(4.0) * std::abs(b0);
  Vec z0{geo.states.front()[0], u0};
  flow::IntegratorSettings s2;
  s2.sample_times = back.params;
  flow::Trajectory direct = flow::integrate(sys, z0, 0.0, back.params.back() + 1e-9, s2);
  for (std::size_t k = 0; k < back.params.size(); ++k)
    CHECK(std::abs(back.states[k][0] - direct.states[k][0]) < 1e-6);
}

TEST_CASE("jacobi deviation fields") {
  // flat metric: deviation is affine in tau
  auto flat = geom::MetricField::euclidean(2);
  auto sys = mj::geodesic_flow(flat);
  flow::IntegratorSettings s;
  for (int k = 0; k <= 10; ++k) s.sample_times.push_back(0.3 * k);
  flow::Trajectory line = flow::integrate(sys, {0.0, 0.0, 1.0, 0.0}, 0.0, 3.0, s);
  flow::Trajectory dev = mj::jacobi_deviation(flat, line, Vec{0.2, -0.1}, Vec{0.5, 0.4});
  for (std::size_t k = 0; k < dev.params.size(); ++k) {
    double tau = dev.params[k];
    CHECK(dev.states[k][0] == doctest::Approx(0.2 + 0.5 * tau).epsilon(1e-9));
    CHECK(dev.states[k][1] == doctest::Approx(-0.1 + 0.4 * tau).epsilon(1e-9));
  }

  // unit sphere: orthogonal deviation goes like sin(tau)
  auto sph = sphere_metric();
  auto gsys = mj::geodesic_flow(sph);
  flow::IntegratorSettings s2;
  for (int k = 0; k <= 16; ++k) s2.sample_times.push_back(M_PI * k / 16.0);
  flow::Trajectory eq = flow::integrate(gsys, {M_PI / 2.0, 0.0, 0.0, 1.0}, 0.0, M_PI, s2);
  flow::Trajectory dev2 = mj::jacobi_deviation(sph, eq, Vec{0.0, 0.0}, Vec{1.0, 0.0});
  for (std::size_t k = 0; k < dev2.params.size(); ++k)
    CHECK(dev2.states[k][0] == doctest::Approx(std::sin(dev2.params[k])).epsilon(1e-6));

  // tangent mode: xi = xdot has constant (unit) norm
  flow::Trajectory dev3 = mj::jacobi_deviation(sph, eq, Vec{0.0, 1.0}, Vec{0.0, 0.0});
  for (std::size_t k = 0; k < dev3.params.size(); ++k) {
    Vec x{eq.states[k][0], eq.states[k][1]};
    Matrix g = sph.eval_matrix(x);
    Vec xi{dev3.states[k][0], dev3.states[k][1]};
    CHECK(num::metric_dot(g, xi, xi) == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("parallel frame split") {
  // flat: reduced system is exactly xi'' = 0
  auto flat = geom::MetricField::euclidean(2);
  auto sys = mj::geodesic_flow(flat);
  flow::IntegratorSettings s;
  for (int k = 0; k <= 10; ++k) s.sample_times.push_back(0.2 * k);
  flow::Trajectory line = flow::integrate(sys, {0.0, 0.0, 0.6, 0.8}, 0.0, 2.0, s);
  mj::FrameSplit split = mj::parallel_frame_split(flat, line);
  for (const auto& K : split.reduced_operator) CHECK(K.max_abs() < 1e-12);
  auto red = split.integrate_reduced(Vec{0.3, 0.0}, Vec{0.1, 0.5});
  for (const auto& [tau, xi] : red) {
    CHECK(xi[0] == doctest::Approx(0.3 + 0.1 * tau).epsilon(1e-9));
    CHECK(xi[1] == doctest::Approx(0.5 * tau).epsilon(1e-9));
  }

  // sphere: the orthogonal-orthogonal block of the reduced operator is -1
  auto sph = sphere_metric();
  auto gsys = mj::geodesic_flow(sph);
  flow::IntegratorSettings s2;
  for (int k = 0; k <= 8; ++k) s2.sample_times.push_back(M_PI * k / 8.0);
  flow::Trajectory eq = flow::integrate(gsys, {M_PI / 2.0, 0.0, 0.0, 1.0}, 0.0, M_PI, s2);
  mj::FrameSplit split2 = mj::parallel_frame_split(sph, eq);
  for (const auto& K : split2.reduced_operator) {
    CHECK(std::abs(K(0, 0)) < 1e-8);  // tangent row vanishes
    CHECK(std::abs(K(0, 1)) < 1e-8);
    CHECK(std::abs(K(1, 0)) < 1e-8);
    CHECK(K(1, 1) == doctest::Approx(-1.0).epsilon(1e-8));  // -R^alpha_{0 beta 0}
  }

  // reduced solution agrees with the full Jacobi field projected on the frame
  flow::Trajectory full = mj::jacobi_deviation(sph, eq, Vec{0.0, 0.0}, Vec{1.0, 0.0});
  // initial covariant derivative in frame components: e_1 = theta direction
  auto red2 = split2.integrate_reduced(Vec{0.0, 0.0}, Vec{0.0, 1.0});
  for (std::size_t k = 0; k < red2.size(); ++k) {
    Vec x{eq.states[k][0], eq.states[k][1]};
    Matrix g = sph.eval_matrix(x);
    Vec xi{full.states[k][0], full.states[k][1]};
    double proj = num::metric_dot(g, xi, split2.frames[k][1]);
    CHECK(std::abs(red2[k].second[1] - proj) < 1e-6);
  }
}

TEST_CASE("shift modes stay near zero under the QR measurement") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);
  // moderate-eccentricity orbit: the finite-horizon telescoping term stays
  // well under the tolerance wherever T lands on the orbit
  double l = 0.65;
  double r0 = std::sqrt((1.0 + std::sqrt(1.0 - 2.0 * l * l)) / 2.0);
  Vec x0{r0, 0.0};
  Vec u0{0.0, l / r0};
  Vec v0 = jt.affine_velocity(x0, u0);
  auto [l1, l2] = mj::shift_mode_exponents(jt.metric(), x0, v0, 50.0, 0.5);
  CHECK(std::abs(l1) < 0.05);
  CHECK(std::abs(l2) < 0.05);
}

TEST_CASE("boundary diagnostics") {
  auto well = flat_natural("x1^2+x2^2");
  JacobiTranslation jt(well, 1.0, 2.0);

  // angular momentum keeps the orbit interior
  {
    double r0 = std::sqrt((1.0 + std::sqrt(1.0 - 2.0 * 0.01)) / 2.0);
    Vec x0{r0, 0.0}, u0{0.0, 0.1 / r0};
    auto d = mj::boundary_diagnostics(jt, x0, u0, 30.0);
    CHECK(!d.boundary_hit);
    CHECK(d.applicable);
  }

  // radial data hits the boundary; Ricci grows like 2/b^3 on approach
  {
    Vec x0{0.0, 0.0}, u0{std::sqrt(2.0), 0.0};
    auto d = mj::boundary_diagnostics(jt, x0, u0, 10.0);
    REQUIRE(d.boundary_hit);
    REQUIRE(d.ricci_samples.size() == 3);
    for (const auto& [b, ricci] : d.ricci_samples)
      CHECK(ricci * b * b * b / 2.0 == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(d.ricci_samples[2].second > d.ricci_samples[0].second);
  }

  // the fixed point is untranslatable
  {
    auto wellE0 = flat_natural("x1^2+x2^2");
    JacobiTranslation jt0(wellE0, 0.0, 2.0);
    auto d = mj::boundary_diagnostics(jt0, Vec{0.0, 0.0}, Vec{0.0, 0.0}, 10.0);
    CHECK(d.fixed_point);
    CHECK(!d.applicable);
    REQUIRE(!d.flags.empty());
    CHECK(d.flags[0] == "FixedPointUntranslatable");
  }
}

TEST_CASE("comparison report: one-dimensional breakdown") {
  auto osc = oscillator_1d(1.0);
  mj::CompareSettings cs;
  cs.track_span = 5.0;
  cs.track_samples = 21;
  Vec x0{std::cosh(0.5)}, u0{std::sinh(0.5)};
  auto rep = mj::compare_stability(osc, -0.5, x0, u0, cs);

  bool has_1d = false;
  for (const auto& f : rep.flags) has_1d |= (f == "one-dimensional");
  CHECK(has_1d);

  // intrinsic picture: unstable with lambda ~ mu and P = mu^2
  CHECK(rep.intrinsic.global_verdict == lyap::GlobalVerdict::Unstable);
  CHECK(std::abs(rep.intrinsic.exponent.value - 1.0) < 0.05);
  CHECK(rep.intrinsic.local.verdict == kcc::LocalVerdict::Unstable);
  CHECK(rep.intrinsic.local.max_real_part == doctest::Approx(1.0).epsilon(1e-8));

  // geodesic picture: structurally flat, all exponents ~ 0
  REQUIRE(rep.geodesic.applicable);
  CHECK(rep.geodesic.local.verdict == kcc::LocalVerdict::Marginal);
  CHECK(std::abs(rep.geodesic.local.max_real_part) < 1e-10);
  CHECK(std::abs(rep.geodesic.exponent.value) < 0.05);
  CHECK(rep.geodesic.global_verdict == lyap::GlobalVerdict::Stable);
  CHECK(rep.intrinsic.global_verdict != rep.geodesic.global_verdict);
  CHECK(rep.intrinsic.local.verdict != rep.geodesic.local.verdict);
}

TEST_CASE("comparison report: free particle agrees in both pictures") {
  auto freesys = flat_natural("0");
  mj::CompareSettings cs;
  cs.track_span = 4.0;
  cs.track_samples = 11;
  Vec x0{0.0, 0.0}, u0{1.0, 0.0};
  auto rep = mj::compare_stability(freesys, 0.5, x0, u0, cs);
  CHECK(rep.intrinsic.global_verdict == lyap::GlobalVerdict::Stable);
  CHECK(rep.geodesic.global_verdict == lyap::GlobalVerdict::Stable);
  CHECK(std::abs(rep.intrinsic.local.max_real_part) < 1e-10);
  CHECK(std::abs(rep.geodesic.local.max_real_part) < 1e-10);
  CHECK(rep.round_trip_error < 1e-6);
}

TEST_CASE("indefinite kinetic metrics are translated but marked diagnostics-only") {
  auto t = expr::make_table(2, false);
  auto f = [&](const char* s) { return expr::Expression::parse(s, t); };
  geom::MetricField k(2, {f("1"), f("0"), f("0"), f("-1")}, geom::Signature::Indefinite);
  NaturalLagrangian nat(std::move(k), f("0"));
  Vec x0{0.0, 0.0}, u0{1.0, 0.5};
  double E = lag::energy(nat, x0, u0);  // (u1^2 - u2^2)/2 = 0.375
  CHECK(E == doctest::Approx(0.375));

  // translation formulas still apply: g_E = 2|E - V| k
  Matrix m = mj::jacobi_metric(nat, E, 2.0, x0);
  CHECK(m(0, 0) == doctest::Approx(0.75));
  CHECK(m(1, 1) == doctest::Approx(-0.75));

  mj::CompareSettings cs;
  cs.horizon = 40.0;
  cs.track_span = 3.0;
  cs.track_samples = 7;
  auto rep = mj::compare_stability(nat, E, x0, u0, cs);
  bool flagged = false;
  for (const auto& fl : rep.flags) flagged |= (fl == "indefinite-kinetic-metric");
  CHECK(flagged);
  bool noted = false;
  for (const auto& nt : rep.geodesic.notes) noted |= (nt.find("diagnostics") != std::string::npos);
  CHECK(noted);
  // the indefinite metric is constant here, so the geodesic picture is flat
  CHECK(std::abs(rep.geodesic.local.max_real_part) < 1e-10);
}

TEST_CASE("paired potentials: same geometry, different dynamics") {
  const char* vp = "2*(x1^2+x2^2) - (x1^2+x2^2)^2 + 2*step(x1^2+x2^2-1)*(x1^2+x2^2-1)^2";
  const char* vm = "2*(x1^2+x2^2) - (x1^2+x2^2)^2 - 2*step(x1^2+x2^2-1)*(x1^2+x2^2-1)^2";
  auto plus = flat_natural(vp);
  auto minus = flat_natural(vm);

  // identical Jacobi metrics on the interior grid
  for (double x = -0.95; x <= 0.95; x += 0.19)
    for (double y = -0.95; y <= 0.95; y += 0.19) {
      if (x * x + y * y > 0.95 * 0.95) continue;
      Matrix a = mj::jacobi_metric(plus, 1.0, 2.0, Vec{x, y});
      Matrix b = mj::jacobi_metric(minus, 1.0, 2.0, Vec{x, y});
      CHECK((a - b).max_abs() < 1e-12);
    }

  // visibly different deviation operators outside
  Vec xo{1.2, 0.0}, uo{0.1, 0.1};
  Matrix Pp = lag::perturbation_operator_natural(plus, xo, uo);
  Matrix Pm = lag::perturbation_operator_natural(minus, xo, uo);
  CHECK((Pp - Pm).max_abs() > 0.1);
}
