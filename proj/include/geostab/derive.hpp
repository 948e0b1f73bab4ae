#ifndef GEOSTAB_DERIVE_HPP
#define GEOSTAB_DERIVE_HPP

#include <span>
#include <vector>

#include "geostab/dual.hpp"
#include "geostab/expr.hpp"

namespace geostab::num {

// First partial d f / d x_i of a scalar functor callable on dual spans.
template <class F>
double partial1(F&& f, std::span<const double> x, int i) {
  std::vector<D1> xd(x.begin(), x.end());
  xd[i].d = 1.0;
  return f(std::span<const D1>(xd)).d;
}

// Second partial d^2 f / d x_i d x_j via nested duals.
template <class F>
double partial2(F&& f, std::span<const double> x, int i, int j) {
  std::vector<D2> xd(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) xd[k] = D2(D1(x[k], 0.0), D1(0.0, 0.0));
  xd[i].v.d = 1.0;  // inner seed
  xd[j].d.v = 1.0;  // outer seed
  return f(std::span<const D2>(xd)).d.d;
}

// Partial derivatives of an expression with respect to its free symbols;
// `state` covers the free slots, parameters come from the table.
inline double derive(const expr::Expression& e, std::span<const double> state, int i) {
  return partial1(
      [&](std::span<const D1> s) {
        std::vector<D1> buf;
        e.table()->fill(s, buf);
        return e.eval<D1>(buf);
      },
      state, i);
}

inline double derive(const expr::Expression& e, std::span<const double> state, int i, int j) {
  return partial2(
      [&](std::span<const D2> s) {
        std::vector<D2> buf;
        e.table()->fill(s, buf);
        return e.eval<D2>(buf);
      },
      state, i, j);
}

}  // namespace geostab::num

#endif
