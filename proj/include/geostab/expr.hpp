#ifndef GEOSTAB_EXPR_HPP
#define GEOSTAB_EXPR_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geostab/dual.hpp"
#include "geostab/errors.hpp"

namespace geostab::expr {

// Ordered symbol table: free symbols (state variables) plus named parameters
// bound to constant values. Function names (sin, step, ...) are reserved.
class SymbolTable {
 public:
  int add(const std::string& name);
  int add_parameter(const std::string& name, double value);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  int find(std::string_view name) const;  // -1 when absent
  bool is_parameter(int i) const { return is_param_[i] != 0; }
  double parameter_value(int i) const { return values_[i]; }

  // Fill a full evaluation buffer: state values into the free slots (in
  // declaration order), parameter values into their bound slots.
  template <class T>
  void fill(std::span<const T> state, std::vector<T>& buffer) const {
    buffer.resize(names_.size());
    std::size_t s = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (is_param_[i]) buffer[i] = T(values_[i]);
      else buffer[i] = state[s++];
    }
  }
  int free_count() const { return free_count_; }

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<std::uint8_t> is_param_;
  int free_count_ = 0;
};

using TablePtr = std::shared_ptr<const SymbolTable>;

// x1..xn (+ u1..un when velocities is true), then parameters in map order.
TablePtr make_table(int n, bool velocities,
                    const std::vector<std::pair<std::string, double>>& params = {});

enum class UnaryOp : std::uint8_t { Neg, Sin, Cos, Exp, Log, Sqrt, Abs, Step };
enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Pow };

namespace detail {
struct Node {
  enum class Kind : std::uint8_t { Constant, Symbol, Unary, Binary } kind;
  UnaryOp uop{};
  BinaryOp bop{};
  std::int32_t a = -1, b = -1;
  double value = 0.0;
  std::int32_t symbol = -1;
  std::uint32_t offset = 0;
};
}  // namespace detail

// Immutable expression tree over a symbol table. Evaluation is generic over
// the scalar type so the same tree runs on doubles and nested duals.
class Expression {
 public:
  Expression() = default;

  static Expression parse(std::string_view text, TablePtr table);

  // Programmatic builders; operands must share one table instance.
  static Expression constant(double c, TablePtr table);
  static Expression symbol(int index, TablePtr table);
  static Expression unary(UnaryOp op, const Expression& a);
  static Expression binary(BinaryOp op, const Expression& a, const Expression& b);

  bool valid() const { return nodes_ != nullptr; }
  const TablePtr& table() const { return table_; }
  std::string text() const;

  // values must cover every table slot (parameters included); see
  // SymbolTable::fill. Throws DomainError on log/sqrt of a negative number,
  // division by zero, or a fractional power of a negative base.
  template <class T>
  T eval(std::span<const T> values) const {
    return eval_node<T>(root_, values);
  }

  // Convenience: state values only, parameters taken from the table.
  double operator()(std::span<const double> state) const {
    std::vector<double> buf;
    table_->fill(state, buf);
    return eval<double>(buf);
  }

  bool same_structure(const Expression& other) const;

 private:
  std::shared_ptr<const std::vector<detail::Node>> nodes_;
  std::int32_t root_ = -1;
  TablePtr table_;

  template <class T>
  T eval_node(std::int32_t i, std::span<const T> vals) const;
  std::string node_text(std::int32_t i) const;
  [[noreturn]] void domain_fail(const char* what, std::int32_t node) const;

  friend class Parser;
};

// ---- generic evaluation ----

template <class T>
T Expression::eval_node(std::int32_t i, std::span<const T> vals) const {
  using std::sin; using std::cos; using std::exp; using std::log;
  using std::sqrt; using std::abs; using std::pow;
  using num::scalar_value; using num::heaviside; using num::pow_int;
  const detail::Node& n = (*nodes_)[i];
  switch (n.kind) {
    case detail::Node::Kind::Constant:
      return T(n.value);
    case detail::Node::Kind::Symbol:
      return vals[n.symbol];
    case detail::Node::Kind::Unary: {
      T a = eval_node<T>(n.a, vals);
      switch (n.uop) {
        case UnaryOp::Neg: return -a;
        case UnaryOp::Sin: return sin(a);
        case UnaryOp::Cos: return cos(a);
        case UnaryOp::Exp: return exp(a);
        case UnaryOp::Log:
          if (scalar_value(a) <= 0.0) domain_fail("log of non-positive value", i);
          return log(a);
        case UnaryOp::Sqrt:
          if (scalar_value(a) < 0.0) domain_fail("sqrt of negative value", i);
          return sqrt(a);
        case UnaryOp::Abs: return abs(a);
        case UnaryOp::Step: return heaviside(a);
      }
      break;
    }
    case detail::Node::Kind::Binary: {
      T a = eval_node<T>(n.a, vals);
      if (n.bop == BinaryOp::Pow) {
        const detail::Node& e = (*nodes_)[n.b];
        if (e.kind == detail::Node::Kind::Constant &&
            e.value == static_cast<double>(static_cast<long>(e.value))) {
          long k = static_cast<long>(e.value);
          if (k < 0 && scalar_value(a) == 0.0) domain_fail("zero raised to negative power", i);
          return pow_int(a, k);
        }
        T b = eval_node<T>(n.b, vals);
        double av = scalar_value(a);
        if (av > 0.0) return pow(a, b);
        if (av == 0.0 && scalar_value(b) > 0.0) return T(0.0);
        domain_fail("fractional power of non-positive base", i);
      }
      T b = eval_node<T>(n.b, vals);
      switch (n.bop) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div:
          if (scalar_value(b) == 0.0) domain_fail("division by zero", i);
          return a / b;
        case BinaryOp::Pow: break;  // handled above
      }
      break;
    }
  }
  return T(0.0);  // unreachable
}

}  // namespace geostab::expr

#endif
