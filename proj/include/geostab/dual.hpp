#ifndef GEOSTAB_DUAL_HPP
#define GEOSTAB_DUAL_HPP

#include <cmath>

namespace geostab::num {

// Forward-mode dual number with a single seed direction. Nesting
// (Dual<Dual<double>> and deeper) yields exact higher-order partials.
// The primal point is replicated through every nesting level, so domain
// checks only ever look at scalar_value().
template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative

  Dual() = default;
  Dual(double c) : v(c), d() {}
  Dual(const T& v_, const T& d_) : v(v_), d(d_) {}

  Dual& operator+=(const Dual& o) { v = v + o.v; d = d + o.d; return *this; }
  Dual& operator-=(const Dual& o) { v = v - o.v; d = d - o.d; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;
using D4 = Dual<D3>;

inline double scalar_value(double x) { return x; }
template <class T>
double scalar_value(const Dual<T>& x) { return scalar_value(x.v); }

// Seed helper: promote a point component to the active direction.
template <class T>
Dual<T> seeded(const T& x) { return Dual<T>(x, T(1.0)); }

template <class T> Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.v + b.v, a.d + b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.v - b.v, a.d - b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <class T> Dual<T> operator+(const Dual<T>& a, double b) { return {a.v + b, a.d}; }
template <class T> Dual<T> operator+(double a, const Dual<T>& b) { return {a + b.v, b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, double b) { return {a.v - b, a.d}; }
template <class T> Dual<T> operator-(double a, const Dual<T>& b) { return {a - b.v, -b.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, double b) { return {a.v * b, a.d * b}; }
template <class T> Dual<T> operator*(double a, const Dual<T>& b) { return {a * b.v, a * b.d}; }
template <class T> Dual<T> operator/(const Dual<T>& a, double b) { return {a.v / b, a.d / b}; }
template <class T> Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }

template <class T> bool operator==(const Dual<T>& a, const Dual<T>& b) {
  return scalar_value(a) == scalar_value(b);
}
template <class T> bool operator<(const Dual<T>& a, const Dual<T>& b) {
  return scalar_value(a) < scalar_value(b);
}

template <class T> Dual<T> sin(const Dual<T>& x) {
  using std::sin; using std::cos;
  return {sin(x.v), cos(x.v) * x.d};
}
template <class T> Dual<T> cos(const Dual<T>& x) {
  using std::sin; using std::cos;
  return {cos(x.v), -(sin(x.v) * x.d)};
}
template <class T> Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.v);
  return {e, e * x.d};
}
template <class T> Dual<T> log(const Dual<T>& x) {
  using std::log;
  return {log(x.v), x.d / x.v};
}
template <class T> Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  T r = sqrt(x.v);
  return {r, x.d / (2.0 * r)};
}
template <class T> Dual<T> abs(const Dual<T>& x) {
  return scalar_value(x) < 0.0 ? -x : x;
}

// Heaviside step, derivative defined as zero everywhere (kink included).
inline double heaviside(double x) { return x < 0.0 ? 0.0 : 1.0; }
template <class T> Dual<T> heaviside(const Dual<T>& x) {
  return Dual<T>(heaviside(scalar_value(x)));
}

// Integer power by repeated squaring; valid for negative bases.
template <class T> T pow_int(T base, long k) {
  if (k < 0) return 1.0 / pow_int(base, -k);
  T result(1.0);
  while (k > 0) {
    if (k & 1) result = result * base;
    base = base * base;
    k >>= 1;
  }
  return result;
}

// Real power a^b for positive base: exp(b log a) with the usual chain rule.
template <class T> Dual<T> pow(const Dual<T>& a, const Dual<T>& b) {
  using std::pow; using std::log;
  T pv = pow(a.v, b.v);
  return {pv, pv * (b.d * log(a.v) + b.v * a.d / a.v)};
}

}  // namespace geostab::num

#endif
