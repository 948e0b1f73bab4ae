#ifndef GEOSTAB_MAP_HPP
#define GEOSTAB_MAP_HPP

#include <memory>
#include <span>

#include "geostab/dual.hpp"
#include "geostab/linalg.hpp"

namespace geostab::num {

// A smooth map R^in -> R^out evaluatable on nested duals up to depth three,
// which is what third derivatives of spray coefficients require. Concrete
// maps are usually generic lambdas wrapped by make_map.
class VectorMap {
 public:
  virtual ~VectorMap() = default;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
  virtual void eval(std::span<const double> in, std::span<double> out) const = 0;
  virtual void eval(std::span<const D1> in, std::span<D1> out) const = 0;
  virtual void eval(std::span<const D2> in, std::span<D2> out) const = 0;
  virtual void eval(std::span<const D3> in, std::span<D3> out) const = 0;
};

using MapPtr = std::shared_ptr<const VectorMap>;

template <class F>
class GenericMap final : public VectorMap {
 public:
  GenericMap(int in, int out, F f) : in_(in), out_(out), f_(std::move(f)) {}
  int in_dim() const override { return in_; }
  int out_dim() const override { return out_; }
  void eval(std::span<const double> in, std::span<double> out) const override { f_(in, out); }
  void eval(std::span<const D1> in, std::span<D1> out) const override { f_(in, out); }
  void eval(std::span<const D2> in, std::span<D2> out) const override { f_(in, out); }
  void eval(std::span<const D3> in, std::span<D3> out) const override { f_(in, out); }

 private:
  int in_, out_;
  F f_;
};

template <class F>
MapPtr make_map(int in, int out, F f) {
  return std::make_shared<GenericMap<F>>(in, out, std::move(f));
}

inline Vec eval(const VectorMap& m, std::span<const double> x) {
  Vec out(m.out_dim());
  m.eval(x, std::span<double>(out));
  return out;
}

// Jacobian d(out)/d(in) by one dual sweep per input slot.
inline Matrix jacobian(const VectorMap& m, std::span<const double> x) {
  int in = m.in_dim(), out = m.out_dim();
  Matrix J(out, in);
  std::vector<D1> xd(x.begin(), x.end());
  std::vector<D1> yd(out);
  for (int j = 0; j < in; ++j) {
    xd[j].d = 1.0;
    m.eval(std::span<const D1>(xd), std::span<D1>(yd));
    for (int i = 0; i < out; ++i) J(i, j) = yd[i].d;
    xd[j].d = 0.0;
  }
  return J;
}

}  // namespace geostab::num

#endif
