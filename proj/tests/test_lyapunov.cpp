#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "geostab/lyapunov.hpp"

using namespace geostab;
using lyap::SeminormFamily;
using num::Vec;

namespace {

flow::VectorFlowSystem oscillator(double mu) {
  auto t = expr::make_table(1, true, {{"mu", mu}});
  return flow::lift_second_order(1, {expr::Expression::parse("mu^2*x1", t)});
}

flow::VectorFlowSystem stable_oscillator() {
  auto t = expr::make_table(1, true);
  return flow::lift_second_order(1, {expr::Expression::parse("-x1", t)});
}

SeminormFamily config_custom() {
  auto t = expr::make_table(1, true);
  return SeminormFamily::custom(1, {expr::Expression::parse("1/(x1^2+1)", t)});
}

}  // namespace

TEST_CASE("seminorm evaluation") {
  SeminormFamily e = SeminormFamily::euclidean();
  CHECK(e.seminorm(Vec{0.0, 0.0}, Vec{3.0, 4.0}) == doctest::Approx(5.0));

  auto flat = geom::MetricField::euclidean(2);
  SeminormFamily v = SeminormFamily::vertical_lift(flat);
  CHECK(v.seminorm(Vec{0.0, 0.0, 0.0, 0.0}, Vec{1.0, 0.0, 9.0, 9.0}) == doctest::Approx(1.0));
  CHECK(v.degenerate_on(4));

  SeminormFamily c = config_custom();
  CHECK(c.seminorm(Vec{1.0, 0.3}, Vec{2.0, 5.0}) == doctest::Approx(2.0 / std::sqrt(2.0)));
}

TEST_CASE("negative custom forms are rejected") {
  auto t = expr::make_table(1, true);
  SeminormFamily bad = SeminormFamily::custom(1, {expr::Expression::parse("-1-x1^2", t)});
  CHECK_THROWS_AS(bad.seminorm(Vec{0.5, 0.0}, Vec{1.0, 0.0}), NegativeForm);
}

TEST_CASE("single-vector exponent of the inverted oscillator") {
  auto sys = oscillator(1.0);
  auto est = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{1.0, 0.7},
                                     SeminormFamily::euclidean(), 50.0, 0.5);
  CHECK(std::abs(est.value - 1.0) < 0.02);
  CHECK(est.renormalizations == 100);
  REQUIRE(!est.convergence.empty());
  CHECK(est.convergence.back().second == doctest::Approx(est.value));
  // convergence series is monotone in the time coordinate
  for (std::size_t k = 1; k < est.convergence.size(); ++k)
    CHECK(est.convergence[k].first > est.convergence[k - 1].first);
}

TEST_CASE("the alternate metric flips the verdict on the same trajectory") {
  auto sys = oscillator(1.0);
  auto est = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{1.0, 0.7}, config_custom(), 50.0, 0.5);
  CHECK(std::abs(est.value) < 0.05);
  double v = est.value;
  CHECK(lyap::classify_global_stability({&v, 1}, 0.05) == lyap::GlobalVerdict::Stable);
}

TEST_CASE("bounded motion has vanishing exponent") {
  auto est = lyap::lyapunov_exponent(stable_oscillator(), Vec{1.0, 0.0}, Vec{0.6, 0.8},
                                     SeminormFamily::euclidean(), 100.0, 0.5);
  CHECK(std::abs(est.value) < 0.02);
}

TEST_CASE("scale invariance of the estimate") {
  auto sys = oscillator(1.0);
  auto a = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{0.3, -0.8},
                                   SeminormFamily::euclidean(), 20.0, 0.5);
  Vec scaled{0.3 * 7.5, -0.8 * 7.5};
  auto b = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, scaled, SeminormFamily::euclidean(),
                                   20.0, 0.5);
  CHECK(std::abs(a.value - b.value) < 1e-12);
}

TEST_CASE("a collapsing seminorm is reported, not averaged over") {
  // contraction rate 1000: the perturbation underflows within one renorm
  // interval of 0.8 time units; a tiny absolute tolerance keeps the decay
  // under relative control all the way down
  auto t = expr::make_table(1, false);
  auto sys = flow::VectorFlowSystem::from_expressions(
      {expr::Expression::parse("-1000*x1", t)});
  flow::IntegratorSettings s;
  s.abs_tol = 1e-320;
  CHECK_THROWS_AS(lyap::lyapunov_exponent(sys, Vec{1.0}, Vec{1.0},
                                          SeminormFamily::euclidean(), 1.6, 0.8, s),
                  SeminormCollapse);
}

TEST_CASE("degenerate starts are rejected") {
  auto sys = oscillator(1.0);
  auto flat = geom::MetricField::euclidean(1);
  SeminormFamily v = SeminormFamily::vertical_lift(flat);
  CHECK_THROWS_AS(lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{0.0, 1.0}, v, 10.0, 0.5),
                  DegenerateStart);
}

TEST_CASE("spectrum of the inverted oscillator") {
  auto sys = oscillator(1.0);
  std::vector<Vec> frame{{1.0, 0.0}, {0.0, 1.0}};
  auto est = lyap::lyapunov_spectrum(sys, Vec{1.0, 1.0}, frame, SeminormFamily::euclidean(),
                                     50.0, 0.5);
  REQUIRE(est.exponents.size() == 2);
  CHECK(std::abs(est.exponents[0] - 1.0) < 0.05);
  CHECK(std::abs(est.exponents[1] + 1.0) < 0.05);
  CHECK(lyap::classify_global_stability(est.exponents, 0.05) == lyap::GlobalVerdict::Unstable);
}

TEST_CASE("linear diagonal flow spectrum") {
  auto t = expr::make_table(2, false);
  auto sys = flow::VectorFlowSystem::from_expressions(
      {expr::Expression::parse("-x1", t), expr::Expression::parse("-2*x2", t)});
  std::vector<Vec> frame{{1.0, 0.0}, {0.0, 1.0}};
  auto est = lyap::lyapunov_spectrum(sys, Vec{1.0, 1.0}, frame, SeminormFamily::euclidean(),
                                     50.0, 0.5);
  CHECK(std::abs(est.exponents[0] + 1.0) < 0.02);
  CHECK(std::abs(est.exponents[1] + 2.0) < 0.02);
  CHECK(lyap::classify_global_stability(est.exponents, 0.05) == lyap::GlobalVerdict::Stable);
}

TEST_CASE("flat geodesic flow has an all-zero spectrum") {
  auto t = expr::make_table(2, true);
  auto sys = flow::lift_second_order(
      2, {expr::Expression::constant(0.0, t), expr::Expression::constant(0.0, t)});
  std::vector<Vec> frame{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  auto est = lyap::lyapunov_spectrum(sys, Vec{0.0, 0.0, 0.7, 0.2}, frame,
                                     SeminormFamily::euclidean(), 100.0, 0.5);
  for (double e : est.exponents) CHECK(std::abs(e) < 0.05);
}

TEST_CASE("degenerate families are rejected for spectra") {
  auto sys = oscillator(1.0);
  auto flat = geom::MetricField::euclidean(1);
  std::vector<Vec> frame{{1.0, 0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(lyap::lyapunov_spectrum(sys, Vec{1.0, 1.0}, frame,
                                          SeminormFamily::vertical_lift(flat), 10.0, 0.5),
                  RankDeficient);
}

TEST_CASE("global stability classification") {
  std::vector<double> stable{-1.0, -2.0};
  CHECK(lyap::classify_global_stability(stable, 0.05) == lyap::GlobalVerdict::Stable);
  std::vector<double> unstable{1.0, -1.0};
  CHECK(lyap::classify_global_stability(unstable, 0.05) == lyap::GlobalVerdict::Unstable);
  std::vector<double> marginal{0.0, 0.0};  // boundary case counts as stable
  CHECK(lyap::classify_global_stability(marginal, 0.05) == lyap::GlobalVerdict::Stable);
}

TEST_CASE("renormalization interval invariance") {
  auto sys = oscillator(1.0);
  auto a = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{1.0, 0.7},
                                   SeminormFamily::euclidean(), 40.0, 0.5);
  auto b = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{1.0, 0.7},
                                   SeminormFamily::euclidean(), 40.0, 0.25);
  // spread of the last half of the convergence series
  double spread = 0.0;
  for (std::size_t k = a.convergence.size() / 2; k < a.convergence.size(); ++k)
    spread = std::max(spread, std::abs(a.convergence[k].second - a.value));
  CHECK(std::abs(a.value - b.value) <= 2.0 * std::max(spread, 1e-6));
}

TEST_CASE("a generic vector picks up the top spectrum exponent") {
  auto sys = oscillator(1.0);
  std::vector<Vec> frame{{1.0, 0.0}, {0.0, 1.0}};
  auto spec = lyap::lyapunov_spectrum(sys, Vec{1.0, 1.0}, frame, SeminormFamily::euclidean(),
                                      30.0, 0.5);
  auto single = lyap::lyapunov_exponent(sys, Vec{1.0, 1.0}, Vec{0.37, 0.91},
                                        SeminormFamily::euclidean(), 30.0, 0.5);
  CHECK(std::abs(single.value - spec.exponents[0]) < 0.05);
}
