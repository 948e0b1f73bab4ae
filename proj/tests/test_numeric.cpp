#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <complex>
#include <random>
#include <utility>

#include "geostab/derive.hpp"
#include "geostab/expr.hpp"
#include "geostab/linalg.hpp"

using namespace geostab;
using num::Matrix;
using num::Vec;

namespace {

Matrix random_matrix(std::mt19937& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = d(rng);
  return a;
}

// independent determinant for the eigenvalue probe (plain fraction-free-ish LU)
std::complex<double> det_shifted(const Matrix& a, std::complex<double> lambda) {
  int n = a.rows();
  std::vector<std::complex<double>> m(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m[i * n + j] = (i == j ? lambda : 0.0) - a(i, j);
  std::complex<double> det = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(m[i * n + k]) > std::abs(m[piv * n + k])) piv = i;
    if (std::abs(m[piv * n + k]) == 0.0) return 0.0;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(m[k * n + j], m[piv * n + j]);
      det = -det;
    }
    det *= m[k * n + k];
    for (int i = k + 1; i < n; ++i) {
      std::complex<double> f = m[i * n + k] / m[k * n + k];
      for (int j = k; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
    }
  }
  return det;
}

}  // namespace

TEST_CASE("solve_linear identities") {
  Matrix I = Matrix::identity(3);
  Vec b{1.0, -2.0, 0.5};
  Vec x = num::solve_linear(I, b);
  for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(b[i]));

  Matrix d(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  Vec x2 = num::solve_linear(d, Vec{2.0, 8.0});
  CHECK(x2[0] == doctest::Approx(1.0));
  CHECK(x2[1] == doctest::Approx(2.0));

  // 1x1 Hessian system of the quadratic Lagrangian
  Matrix h(1, 1);
  h(0, 0) = 1.0;
  double mu = 2.0, xpos = 0.7;
  Vec x3 = num::solve_linear(h, Vec{mu * mu * xpos});
  CHECK(x3[0] == doctest::Approx(mu * mu * xpos));
}

TEST_CASE("solve_linear residual contract on random systems") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + trial % 7;
    Matrix a = random_matrix(rng, n, 2.0);
    for (int i = 0; i < n; ++i) a(i, i) += 2.5 * n;  // keep it comfortably conditioned
    Vec b(n);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    for (auto& v : b) v = d(rng);
    Vec x = num::solve_linear(a, b);
    double bn = 0.0, rn = 0.0;
    for (int i = 0; i < n; ++i) {
      double r = b[i];
      for (int j = 0; j < n; ++j) r -= a(i, j) * x[j];
      rn = std::max(rn, std::abs(r));
      bn = std::max(bn, std::abs(b[i]));
    }
    CHECK(rn <= 1e-10 * (1.0 + bn));
  }
}

TEST_CASE("solve_linear flags singular input") {
  Matrix s(2, 2);
  s(0, 0) = 1.0;
  s(0, 1) = 2.0;
  s(1, 0) = 2.0;
  s(1, 1) = 4.0;
  CHECK_THROWS_AS(num::solve_linear(s, Vec{1.0, 1.0}), SingularMatrix);
}

TEST_CASE("eigenvalues of fixed matrices") {
  auto ev = num::eigenvalues(Matrix::identity(3));
  REQUIRE(ev.values.size() == 3);
  for (const auto& v : ev.values) {
    CHECK(v.real() == doctest::Approx(1.0));
    CHECK(v.imag() == doctest::Approx(0.0));
  }

  Matrix a(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = 4.0;  // mu^2 with mu = 2
  auto ev2 = num::eigenvalues(a);
  REQUIRE(ev2.values.size() == 2);
  CHECK(ev2.values[0].real() == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(ev2.values[1].real() == doctest::Approx(-2.0).epsilon(1e-9));

  Matrix m1(1, 1);
  m1(0, 0) = 1.0;
  auto ev3 = num::eigenvalues(m1);
  CHECK(ev3.values[0].real() == doctest::Approx(1.0));
}

TEST_CASE("complex pairs from a rotation") {
  double th = 0.7;
  Matrix r(2, 2);
  r(0, 0) = std::cos(th);
  r(0, 1) = -std::sin(th);
  r(1, 0) = std::sin(th);
  r(1, 1) = std::cos(th);
  auto ev = num::eigenvalues(r);
  REQUIRE(ev.values.size() == 2);
  CHECK(ev.values[0].real() == doctest::Approx(std::cos(th)).epsilon(1e-10));
  CHECK(std::abs(ev.values[0].imag()) == doctest::Approx(std::sin(th)).epsilon(1e-10));
  CHECK(ev.values[0].imag() == doctest::Approx(-ev.values[1].imag()));
}

TEST_CASE("eigenvalues reproduce the characteristic polynomial at probe points") {
  std::mt19937 rng(2026);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      Matrix a = random_matrix(rng, n, 1.5);
      auto ev = num::eigenvalues(a);
      REQUIRE(static_cast<int>(ev.values.size()) == n);
      std::uniform_real_distribution<double> d(-2.0, 2.0);
      for (int probe = 0; probe < 5; ++probe) {
        std::complex<double> lambda(d(rng), d(rng));
        std::complex<double> direct = det_shifted(a, lambda);
        std::complex<double> from_ev = 1.0;
        for (const auto& v : ev.values) from_ev *= lambda - v;
        CHECK(std::abs(direct - from_ev) <= 1e-7 * (1.0 + std::abs(direct)));
      }
    }
  }
}

TEST_CASE("eigenvalues hold 1e-9 absolute accuracy up to 10x10") {
  // A = S B S^-1 with known block spectrum and a mildly non-normal S
  std::mt19937 rng(606);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int n : {8, 10}) {
    Matrix B(n, n);
    std::vector<std::complex<double>> want;
    int i = 0;
    while (i < n) {
      if (i + 1 < n && i % 4 == 0) {  // complex pair a +/- bi
        double a = d(rng), b = 0.3 + std::abs(d(rng));
        B(i, i) = a; B(i, i + 1) = b;
        B(i + 1, i) = -b; B(i + 1, i + 1) = a;
        want.emplace_back(a, b);
        want.emplace_back(a, -b);
        i += 2;
      } else {
        double a = d(rng);
        B(i, i) = a;
        want.emplace_back(a, 0.0);
        ++i;
      }
    }
    Matrix S = Matrix::identity(n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) S(r, c) += 0.1 * d(rng);
    // A = S B S^-1 column by column
    Matrix SB = S * B;
    Matrix A(n, n);
    for (int c = 0; c < n; ++c) {
      Vec col(n);
      for (int r = 0; r < n; ++r) col[r] = (r == c) ? 1.0 : 0.0;
      // solve S x = e_c to build S^-1 column, then A col = SB * x
      Vec x = num::solve_linear(S, col);
      for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += SB(r, k) * x[k];
        A(r, c) = s;
      }
    }
    auto got = num::eigenvalues(A);
    auto key = [](const std::complex<double>& z) {
      return std::make_pair(z.real(), z.imag());
    };
    std::sort(want.begin(), want.end(),
              [&](auto a, auto b) { return key(a) > key(b); });
    REQUIRE(got.values.size() == want.size());
    for (int k = 0; k < n; ++k)
      CHECK(std::abs(got.values[k] - want[k]) < 1e-9);
  }
}

TEST_CASE("symmetric fast-path agrees with the general path") {
  std::mt19937 rng(5);
  Matrix a = random_matrix(rng, 5, 1.0);
  Matrix s = 0.5 * (a + a.transposed());
  auto ev = num::eigenvalues(s);
  for (const auto& v : ev.values) CHECK(v.imag() == 0.0);
  // probe check on the symmetric spectrum too
  std::complex<double> lambda(0.37, 0.0);
  std::complex<double> direct = det_shifted(s, lambda);
  std::complex<double> from_ev = 1.0;
  for (const auto& v : ev.values) from_ev *= lambda - v;
  CHECK(std::abs(direct - from_ev) <= 1e-7 * (1.0 + std::abs(direct)));
}

TEST_CASE("weighted Gram-Schmidt basics") {
  Matrix I = Matrix::identity(2);
  std::vector<Vec> ortho{{1.0, 0.0}, {0.0, 1.0}};
  auto r = num::weighted_gram_schmidt(ortho, I);
  CHECK(r.log_norms[0] == doctest::Approx(0.0));
  CHECK(r.log_norms[1] == doctest::Approx(0.0));
  CHECK(r.frame[0][0] == doctest::Approx(1.0));

  std::vector<Vec> scaled{{2.0, 0.0}, {0.0, 3.0}};
  auto r2 = num::weighted_gram_schmidt(scaled, I);
  CHECK(r2.log_norms[0] == doctest::Approx(std::log(2.0)));
  CHECK(r2.log_norms[1] == doctest::Approx(std::log(3.0)));
}

TEST_CASE("weighted Gram-Schmidt under a random SPD metric") {
  std::mt19937 rng(17);
  Matrix b = random_matrix(rng, 4, 1.0);
  Matrix g = b.transposed() * b + 0.2 * Matrix::identity(4);
  std::vector<Vec> frame(4, Vec(4));
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  for (auto& v : frame)
    for (auto& c : v) c = d(rng);
  auto r = num::weighted_gram_schmidt(frame, g);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = i == j ? 1.0 : 0.0;
      CHECK(num::metric_dot(g, r.frame[i], r.frame[j]) == doctest::Approx(want).epsilon(1e-10));
    }
  // idempotence
  auto r2 = num::weighted_gram_schmidt(r.frame, g);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(r2.log_norms[i]) < 1e-12);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(r2.frame[i][j] - r.frame[i][j]) < 1e-12);
  }
}

TEST_CASE("rank-deficient frames are rejected") {
  Matrix I = Matrix::identity(3);
  std::vector<Vec> dep{{1.0, 0.0, 0.0}, {2.0, 0.0, 0.0}};
  CHECK_THROWS_AS(num::weighted_gram_schmidt(dep, I), RankDeficient);
}

TEST_CASE("derive on expressions") {
  auto t = expr::make_table(1, false);
  auto e = expr::Expression::parse("x1^2", t);
  CHECK(num::derive(e, std::vector<double>{3.0}, 0) == doctest::Approx(6.0));

  auto t2 = expr::make_table(1, true, {{"mu", 3.0}});
  auto e2 = expr::Expression::parse("0.5*mu^2*u1^2", t2);
  std::vector<double> xu{0.4, 1.7};
  CHECK(num::derive(e2, xu, 1, 1) == doctest::Approx(9.0));
}

TEST_CASE("spray-style derivative against finite differences") {
  // G^1 = 1/2 Gamma(x) u^2 with Gamma(x) = sin(x); dG/du = Gamma(x) u
  auto t = expr::make_table(1, true);
  auto g = expr::Expression::parse("0.5*sin(x1)*u1^2", t);
  std::vector<double> xu{0.8, 1.3};
  double ad = num::derive(g, xu, 1);
  const double h = 1e-5;
  std::vector<double> p = xu, m = xu;
  p[1] += h;
  m[1] -= h;
  double fd = (g(p) - g(m)) / (2 * h);
  CHECK(ad == doctest::Approx(fd).epsilon(1e-6));
  CHECK(ad == doctest::Approx(std::sin(0.8) * 1.3).epsilon(1e-12));
}

TEST_CASE("nested duals give exact second derivatives") {
  using num::D2;
  using num::D1;
  // f(x) = sin(x): f'' = -sin(x)
  D2 x(D1(0.6, 1.0), D1(1.0, 0.0));
  D2 r = sin(x);
  CHECK(r.d.d == doctest::Approx(-std::sin(0.6)).epsilon(1e-14));
}
