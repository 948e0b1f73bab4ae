#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "geostab/flow.hpp"

using namespace geostab;
using flow::IntegratorSettings;
using flow::Trajectory;
using flow::VectorFlowSystem;
using num::Vec;

namespace {

VectorFlowSystem exponential_flow() {
  auto t = expr::make_table(1, false);
  return VectorFlowSystem::from_expressions({expr::Expression::parse("x1", t)});
}

VectorFlowSystem oscillator_lift(double mu) {
  auto t = expr::make_table(1, true, {{"mu", mu}});
  return flow::lift_second_order(1, {expr::Expression::parse("mu^2*x1", t)});
}

VectorFlowSystem pendulum() {
  auto t = expr::make_table(1, true);
  return flow::lift_second_order(1, {expr::Expression::parse("-sin(x1)", t)});
}

}  // namespace

TEST_CASE("exponential growth to t=1") {
  IntegratorSettings s;
  s.sample_times = {1.0};
  Trajectory tr = flow::integrate(exponential_flow(), {1.0}, 0.0, 1.0, s);
  CHECK(tr.final_state()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
}

TEST_CASE("zero field is constant") {
  auto t = expr::make_table(2, false);
  auto sys = VectorFlowSystem::from_expressions(
      {expr::Expression::constant(0.0, t), expr::Expression::constant(0.0, t)});
  IntegratorSettings s;
  Trajectory tr = flow::integrate(sys, {0.3, -0.7}, 0.0, 5.0, s);
  CHECK(tr.final_state()[0] == doctest::Approx(0.3));
  CHECK(tr.final_state()[1] == doctest::Approx(-0.7));
}

TEST_CASE("inverted oscillator hits e^2") {
  IntegratorSettings s;
  s.sample_times = {2.0};
  Trajectory tr = flow::integrate(oscillator_lift(1.0), {1.0, 1.0}, 0.0, 2.0, s);
  CHECK(tr.final_state()[0] == doctest::Approx(std::exp(2.0)).epsilon(1e-6));
}

TEST_CASE("rk4 path reproduces the same flow") {
  IntegratorSettings s;
  s.method = flow::Method::RK4;
  s.fixed_step = 1e-3;
  s.sample_times = {1.0};
  Trajectory tr = flow::integrate(exponential_flow(), {1.0}, 0.0, 1.0, s);
  CHECK(tr.final_state()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
}

TEST_CASE("adaptive results converge when tolerances halve") {
  IntegratorSettings coarse;
  coarse.abs_tol = 2e-8;
  coarse.rel_tol = 2e-8;
  coarse.sample_times = {3.0};
  IntegratorSettings fine = coarse;
  fine.abs_tol = 1e-8;
  fine.rel_tol = 1e-8;
  Trajectory a = flow::integrate(pendulum(), {2.5, 0.0}, 0.0, 3.0, coarse);
  Trajectory b = flow::integrate(pendulum(), {2.5, 0.0}, 0.0, 3.0, fine);
  CHECK(std::abs(a.final_state()[0] - b.final_state()[0]) < 2e-8);
}

TEST_CASE("free motion is straight") {
  auto t = expr::make_table(2, true);
  auto sys = flow::lift_second_order(
      2, {expr::Expression::constant(0.0, t), expr::Expression::constant(0.0, t)});
  IntegratorSettings s;
  s.sample_times = {2.0};
  Trajectory tr = flow::integrate(sys, {0.0, 1.0, 0.5, -0.25}, 0.0, 2.0, s);
  CHECK(tr.final_state()[0] == doctest::Approx(1.0));
  CHECK(tr.final_state()[1] == doctest::Approx(0.5));
}

TEST_CASE("circular orbit of the radial quadratic potential stays circular") {
  // V = r^2: accel = -2x; balance at |u|^2 = 2 r^2
  auto t = expr::make_table(2, true);
  auto sys = flow::lift_second_order(2, {expr::Expression::parse("-2*x1", t),
                                         expr::Expression::parse("-2*x2", t)});
  double r0 = 1.0;
  double speed = std::sqrt(2.0) * r0;
  double period = 2.0 * M_PI * r0 / speed;
  IntegratorSettings s;
  for (int k = 1; k <= 8; ++k) s.sample_times.push_back(period * k / 8.0);
  Trajectory tr = flow::integrate(sys, {r0, 0.0, 0.0, speed}, 0.0, period, s);
  for (const auto& st : tr.states) {
    double r = std::hypot(st[0], st[1]);
    CHECK(r == doctest::Approx(r0).epsilon(1e-6));
  }
}

TEST_CASE("variational equation: zero stays zero, linear flows exponentiate") {
  auto sys = oscillator_lift(1.0);
  IntegratorSettings s;
  s.sample_times = {1.0};
  Trajectory z = flow::variational_integrate(sys, {1.0, 1.0}, {Vec{0.0, 0.0}}, 0.0, 1.0, s);
  CHECK(std::abs(z.frames.back()[0][0]) < 1e-12);
  CHECK(std::abs(z.frames.back()[0][1]) < 1e-12);

  // (1,1) is the eigenvector of [[0,1],[1,0]] with eigenvalue 1
  Trajectory e = flow::variational_integrate(sys, {1.0, 1.0}, {Vec{1.0, 1.0}}, 0.0, 1.0, s);
  CHECK(e.frames.back()[0][0] == doctest::Approx(std::exp(1.0)).epsilon(1e-7));
  CHECK(e.frames.back()[0][1] == doctest::Approx(std::exp(1.0)).epsilon(1e-7));
}

TEST_CASE("variational linearity") {
  auto sys = pendulum();
  IntegratorSettings s;
  s.sample_times = {4.0};
  Vec xi{1.0, 0.0}, eta{0.0, 1.0};
  double a = 0.7, b = -1.3;
  Vec combo{a * xi[0] + b * eta[0], a * xi[1] + b * eta[1]};
  Trajectory t1 = flow::variational_integrate(sys, {2.0, 0.1}, {xi}, 0.0, 4.0, s);
  Trajectory t2 = flow::variational_integrate(sys, {2.0, 0.1}, {eta}, 0.0, 4.0, s);
  Trajectory t3 = flow::variational_integrate(sys, {2.0, 0.1}, {combo}, 0.0, 4.0, s);
  for (int i = 0; i < 2; ++i) {
    double expect = a * t1.frames.back()[0][i] + b * t2.frames.back()[0][i];
    CHECK(t3.frames.back()[0][i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("variational equation matches trajectory differencing") {
  auto sys = pendulum();
  const double eps = 1e-6, T = 5.0;
  Vec x0{2.0, 0.3};
  Vec xi0{0.6, -0.4};
  IntegratorSettings s;
  s.sample_times = {T};
  Trajectory v = flow::variational_integrate(sys, x0, {xi0}, 0.0, T, s);
  Vec xp{x0[0] + eps * xi0[0], x0[1] + eps * xi0[1]};
  Trajectory a = flow::integrate(sys, xp, 0.0, T, s);
  Trajectory b = flow::integrate(sys, x0, 0.0, T, s);
  for (int i = 0; i < 2; ++i) {
    double fd = (a.final_state()[i] - b.final_state()[i]) / eps;
    double scale = std::max(1.0, std::abs(fd));
    CHECK(std::abs(v.frames.back()[0][i] - fd) / scale < 1e-4);
  }
}

TEST_CASE("second-order structure is exact in the Jacobian") {
  auto sys = pendulum();
  num::Matrix J = sys.jacobian_at(Vec{0.77, -0.12});
  CHECK(J(0, 0) == 0.0);
  CHECK(J(0, 1) == 1.0);
  CHECK(J(1, 0) == doctest::Approx(-std::cos(0.77)).epsilon(1e-14));
}

TEST_CASE("event location and termination") {
  IntegratorSettings s;
  s.events.push_back({"crossing",
                      [](double, std::span<const double> y) { return y[0] - 2.0; },
                      +1, true});
  Trajectory tr = flow::integrate(exponential_flow(), {1.0}, 0.0, 3.0, s);
  REQUIRE(tr.terminated_by_event);
  REQUIRE(tr.events.size() == 1);
  CHECK(tr.events[0].param == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(tr.events[0].state[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(tr.final_param() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("directional events ignore the wrong slope") {
  // oscillator position crosses zero in both directions; pick downward only
  auto t = expr::make_table(1, true);
  auto sys = flow::lift_second_order(1, {expr::Expression::parse("-x1", t)});
  IntegratorSettings s;
  s.events.push_back({"down",
                      [](double, std::span<const double> y) { return y[0]; },
                      -1, false});
  Trajectory tr = flow::integrate(sys, {1.0, 0.0}, 0.0, 2.0 * M_PI, s);
  REQUIRE(tr.events.size() == 1);  // only the pi/2 crossing, not 3pi/2
  CHECK(tr.events[0].param == doctest::Approx(M_PI / 2.0).epsilon(1e-8));
}

TEST_CASE("finite-time blowups underflow instead of looping") {
  auto t = expr::make_table(1, false);
  auto sys = VectorFlowSystem::from_expressions({expr::Expression::parse("x1^2", t)});
  IntegratorSettings s;
  s.max_steps = 200000;
  CHECK_THROWS_AS(flow::integrate(sys, {1.0}, 0.0, 2.0, s), Error);
}

TEST_CASE("renormalization callbacks fire on schedule") {
  auto sys = oscillator_lift(1.0);
  IntegratorSettings s;
  s.sample_times = {2.0};
  int calls = 0;
  double last_t = 0.0;
  flow::RenormCallback cb = [&](double t, std::span<const double>, std::vector<Vec>& frame) {
    ++calls;
    last_t = t;
    for (auto& v : frame)
      for (auto& c : v) c *= 0.5;
  };
  Trajectory tr =
      flow::variational_integrate(sys, {1.0, 0.0}, {Vec{1.0, 0.0}}, 0.0, 2.0, s, 0.5, cb);
  CHECK(calls == 4);
  CHECK(last_t == doctest::Approx(2.0));
  int renorms = 0;
  for (const auto& ev : tr.events)
    if (ev.kind == "renormalization") ++renorms;
  CHECK(renorms == 4);
}
