#include "geostab/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace geostab::num {

namespace {

struct LuFactors {
  std::vector<double> a;
  std::vector<int> piv;
  int n = 0;
};

LuFactors lu_factor(const Matrix& A) {
  int n = A.rows();
  LuFactors f;
  f.n = n;
  f.a.assign(A.data(), A.data() + n * n);
  f.piv.resize(n);
  double scale = A.inf_norm();
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(f.a[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double m = std::abs(f.a[i * n + k]);
      if (m > best) { best = m; piv = i; }
    }
    if (best < 1e-12 * (scale > 0.0 ? scale : 1.0))
      throw SingularMatrix("pivot " + std::to_string(k) + " below 1e-12 * ||A||");
    f.piv[k] = piv;
    if (piv != k)
      for (int j = 0; j < n; ++j) std::swap(f.a[k * n + j], f.a[piv * n + j]);
    for (int i = k + 1; i < n; ++i) {
      double m = f.a[i * n + k] / f.a[k * n + k];
      f.a[i * n + k] = m;
      for (int j = k + 1; j < n; ++j) f.a[i * n + j] -= m * f.a[k * n + j];
    }
  }
  return f;
}

Vec lu_solve(const LuFactors& f, std::span<const double> b) {
  int n = f.n;
  Vec x(b.begin(), b.end());
  for (int k = 0; k < n; ++k) {
    std::swap(x[k], x[f.piv[k]]);
    for (int i = k + 1; i < n; ++i) x[i] -= f.a[i * n + k] * x[k];
  }
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) x[i] -= f.a[i * n + j] * x[j];
    x[i] /= f.a[i * n + i];
  }
  return x;
}

}  // namespace

Vec solve_linear(const Matrix& A, std::span<const double> b) {
  if (A.rows() != A.cols() || static_cast<int>(b.size()) != A.rows())
    throw ConfigError("solve_linear: dimension mismatch");
  LuFactors f = lu_factor(A);
  Vec x = lu_solve(f, b);
  // one refinement pass tightens the residual on mildly conditioned systems
  Vec r(b.begin(), b.end());
  int n = A.rows();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r[i] -= A(i, j) * x[j];
  Vec dx = lu_solve(f, r);
  for (int i = 0; i < n; ++i) x[i] += dx[i];
  return x;
}

double scaled_determinant(std::span<const double> A, int n) {
  std::vector<double> a(A.begin(), A.end());
  double row_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::abs(a[i * n + j]);
    row_norm = std::max(row_norm, s);
  }
  if (row_norm == 0.0) return 0.0;
  double det = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(a[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double m = std::abs(a[i * n + k]);
      if (m > best) { best = m; piv = i; }
    }
    if (best == 0.0) return 0.0;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      det = -det;
    }
    det *= a[k * n + k] / row_norm;
    for (int i = k + 1; i < n; ++i) {
      double m = a[i * n + k] / a[k * n + k];
      for (int j = k + 1; j < n; ++j) a[i * n + j] -= m * a[k * n + j];
    }
  }
  return det;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double metric_dot(const Matrix& g, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) s += a[i] * g(i, j) * b[j];
  return s;
}

// ---- eigenvalues ----

namespace {

// Cyclic Jacobi for symmetric matrices.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  int n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = a(i, i);
  return ev;
}

void balance(Matrix& a) {
  const double radix = 2.0;
  int n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (int i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c != 0.0 && r != 0.0) {
        double g = r / radix, f = 1.0, s = c + r;
        while (c < g) { f *= radix; c *= radix * radix; }
        g = r * radix;
        while (c > g) { f /= radix; c /= radix * radix; }
        if ((c + r) / f < 0.95 * s) {
          done = false;
          g = 1.0 / f;
          for (int j = 0; j < n; ++j) a(i, j) *= g;
          for (int j = 0; j < n; ++j) a(j, i) *= f;
        }
      }
    }
  }
}

void hessenberg(Matrix& a) {
  int n = a.rows();
  for (int m = 1; m < n - 1; ++m) {
    double x = 0.0;
    int i = m;
    for (int j = m; j < n; ++j)
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        i = j;
      }
    if (i != m) {
      for (int j = m - 1; j < n; ++j) std::swap(a(i, j), a(m, j));
      for (int j = 0; j < n; ++j) std::swap(a(j, i), a(j, m));
    }
    if (x != 0.0) {
      for (i = m + 1; i < n; ++i) {
        double y = a(i, m - 1);
        if (y != 0.0) {
          y /= x;
          a(i, m - 1) = 0.0;
          for (int j = m; j < n; ++j) a(i, j) -= y * a(m, j);
          for (int j = 0; j < n; ++j) a(j, m) += y * a(j, i);
        }
      }
    }
  }
  for (int r = 2; r < n; ++r)
    for (int c = 0; c < r - 1; ++c) a(r, c) = 0.0;
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr).
std::vector<std::complex<double>> hqr(Matrix& a) {
  const double eps = std::numeric_limits<double>::epsilon();
  int n = a.rows();
  std::vector<std::complex<double>> wri(n);
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
  if (anorm == 0.0) return wri;
  int nn = n - 1;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l;
    do {
      for (l = nn; l > 0; --l) {
        double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      double x = a(nn, nn);
      if (l == nn) {
        wri[nn--] = x + t;
      } else {
        double y = a(nn - 1, nn - 1);
        double w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          double p = 0.5 * (y - x);
          double q = p * p + w;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wri[nn - 1] = wri[nn] = x + z;
            if (z != 0.0) wri[nn] = x - w / z;
          } else {
            wri[nn] = std::complex<double>(x + p, -z);
            wri[nn - 1] = std::conj(wri[nn]);
          }
          nn -= 2;
        } else {
          if (its == 30)
            throw NoConvergence("eigenvalue QR iteration budget exhausted");
          if (its == 10 || its == 20) {
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m;
          double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
          for (m = nn - 2; m >= l; --m) {
            z = a(m, m);
            double rr = x - z;
            double ss = y - z;
            p = (rr * ss - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - rr - ss;
            r = a(m + 2, m + 1);
            double s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s; q /= s; r /= s;
            if (m == l) break;
            double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            double v = std::abs(p) *
                       (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = (k + 1 != nn) ? a(k + 2, k - 1) : 0.0;
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) { p /= x; q /= x; r /= x; }
            }
            double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s == 0.0) continue;
            if (k == m) {
              if (l != m) a(k, k - 1) = -a(k, k - 1);
            } else {
              a(k, k - 1) = -s * x;
            }
            p += s;
            x = p / s;
            y = q / s;
            z = r / s;
            q /= p;
            r /= p;
            for (int j = k; j <= nn; ++j) {
              double pp = a(k, j) + q * a(k + 1, j);
              if (k + 1 != nn) {
                pp += r * a(k + 2, j);
                a(k + 2, j) -= pp * z;
              }
              a(k + 1, j) -= pp * y;
              a(k, j) -= pp * x;
            }
            int mmin = nn < k + 3 ? nn : k + 3;
            for (int i = l; i <= mmin; ++i) {
              double pp = x * a(i, k) + y * a(i, k + 1);
              if (k + 1 != nn) {
                pp += z * a(i, k + 2);
                a(i, k + 2) -= pp * r;
              }
              a(i, k + 1) -= pp * q;
              a(i, k) -= pp;
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return wri;
}

}  // namespace

ComplexEigenSet eigenvalues(const Matrix& A) {
  if (A.rows() != A.cols()) throw ConfigError("eigenvalues: matrix not square");
  ComplexEigenSet out;
  int n = A.rows();
  if (n == 0) return out;
  if ((A - A.transposed()).inf_norm() < 1e-12) {
    auto ev = jacobi_eigenvalues(A);
    out.values.assign(ev.begin(), ev.end());
  } else {
    Matrix h = A;
    balance(h);
    hessenberg(h);
    out.values = hqr(h);
  }
  std::sort(out.values.begin(), out.values.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              if (a.real() != b.real()) return a.real() > b.real();
              return a.imag() > b.imag();
            });
  return out;
}

GramSchmidtResult weighted_gram_schmidt(const std::vector<Vec>& frame, const Matrix& metric) {
  GramSchmidtResult res;
  res.frame = frame;
  res.log_norms.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    Vec& v = res.frame[i];
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        double c = metric_dot(metric, v, res.frame[j]);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= c * res.frame[j][k];
      }
    }
    double n2 = metric_dot(metric, v, v);
    if (!(n2 > 0.0)) throw RankDeficient("frame vector " + std::to_string(i) +
                                         " has non-positive metric norm");
    double norm = std::sqrt(n2);
    if (norm < 1e-12)
      throw RankDeficient("residual norm below 1e-12 at frame vector " + std::to_string(i));
    res.log_norms[i] = std::log(norm);
    for (double& x : v) x /= norm;
  }
  return res;
}

}  // namespace geostab::num
