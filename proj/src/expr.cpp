/* expression := term (('+'|'-') term)*
 * term       := unary (('*'|'/') unary)*
 * unary      := '-' unary | power
 * power      := primary ('^' unary)?          right-associative
 * primary    := number | symbol | func '(' expression ')' | '(' expression ')'
 *
 * No implicit multiplication. Functions: sin cos exp log sqrt abs step.
 */
#include "geostab/expr.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <utility>

namespace geostab::expr {

namespace {

const char* kFunctions[] = {"sin", "cos", "exp", "log", "sqrt", "abs", "step"};
const UnaryOp kFunctionOps[] = {UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp,
                                UnaryOp::Log, UnaryOp::Sqrt, UnaryOp::Abs,
                                UnaryOp::Step};

bool is_function_name(std::string_view s, UnaryOp* op = nullptr) {
  for (std::size_t i = 0; i < std::size(kFunctions); ++i) {
    if (s == kFunctions[i]) {
      if (op) *op = kFunctionOps[i];
      return true;
    }
  }
  return false;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int SymbolTable::add(const std::string& name) {
  if (name.empty() || find(name) >= 0 || is_function_name(name))
    throw ConfigError("invalid or duplicate symbol name '" + name + "'");
  names_.push_back(name);
  values_.push_back(0.0);
  is_param_.push_back(0);
  ++free_count_;
  return size() - 1;
}

int SymbolTable::add_parameter(const std::string& name, double value) {
  if (name.empty() || find(name) >= 0 || is_function_name(name))
    throw ConfigError("invalid or duplicate parameter name '" + name + "'");
  if (!std::isfinite(value))
    throw ConfigError("parameter '" + name + "' must be finite");
  names_.push_back(name);
  values_.push_back(value);
  is_param_.push_back(1);
  return size() - 1;
}

int SymbolTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

TablePtr make_table(int n, bool velocities,
                    const std::vector<std::pair<std::string, double>>& params) {
  auto t = std::make_shared<SymbolTable>();
  for (int i = 0; i < n; ++i) t->add("x" + std::to_string(i + 1));
  if (velocities)
    for (int i = 0; i < n; ++i) t->add("u" + std::to_string(i + 1));
  for (const auto& [name, value] : params) t->add_parameter(name, value);
  return t;
}

// ---- parser ----

class Parser {
 public:
  Parser(std::string_view text, TablePtr table)
      : text_(text), table_(std::move(table)) {}

  Expression run() {
    if (text_.find_first_not_of(" \t\r\n") == std::string_view::npos)
      throw SyntaxError(0, "empty expression");
    std::int32_t root = expression();
    skip_ws();
    if (pos_ != text_.size())
      throw SyntaxError(pos_, "unexpected trailing input");
    Expression e;
    e.nodes_ = std::make_shared<std::vector<detail::Node>>(std::move(nodes_));
    e.root_ = root;
    e.table_ = table_;
    return e;
  }

 private:
  std::string_view text_;
  TablePtr table_;
  std::size_t pos_ = 0;
  std::vector<detail::Node> nodes_;

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  std::int32_t push(detail::Node n) {
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }
  std::int32_t make_binary(BinaryOp op, std::int32_t a, std::int32_t b, std::size_t off) {
    detail::Node n;
    n.kind = detail::Node::Kind::Binary;
    n.bop = op;
    n.a = a;
    n.b = b;
    n.offset = static_cast<std::uint32_t>(off);
    return push(n);
  }

  std::int32_t expression() {
    std::int32_t a = term();
    while (true) {
      char c = peek();
      if (c != '+' && c != '-') return a;
      std::size_t off = pos_++;
      a = make_binary(c == '+' ? BinaryOp::Add : BinaryOp::Sub, a, term(), off);
    }
  }

  std::int32_t term() {
    std::int32_t a = unary();
    while (true) {
      char c = peek();
      if (c != '*' && c != '/') return a;
      std::size_t off = pos_++;
      a = make_binary(c == '*' ? BinaryOp::Mul : BinaryOp::Div, a, unary(), off);
    }
  }

  std::int32_t unary() {
    if (peek() == '-') {
      std::size_t off = pos_++;
      std::int32_t a = unary();
      // fold literal negation so "-2.5" round-trips as a constant
      if (nodes_[a].kind == detail::Node::Kind::Constant) {
        nodes_[a].value = -nodes_[a].value;
        return a;
      }
      detail::Node n;
      n.kind = detail::Node::Kind::Unary;
      n.uop = UnaryOp::Neg;
      n.a = a;
      n.offset = static_cast<std::uint32_t>(off);
      return push(n);
    }
    return power();
  }

  std::int32_t power() {
    std::int32_t a = primary();
    if (peek() == '^') {
      std::size_t off = pos_++;
      return make_binary(BinaryOp::Pow, a, unary(), off);
    }
    return a;
  }

  std::int32_t primary() {
    char c = peek();
    std::size_t off = pos_;
    if (c == '(') {
      ++pos_;
      std::int32_t a = expression();
      if (peek() != ')') throw SyntaxError(pos_, "expected ')'");
      ++pos_;
      return a;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string_view ident = text_.substr(start, pos_ - start);
      UnaryOp fop;
      if (peek() == '(') {
        if (!is_function_name(ident, &fop))
          throw SyntaxError(start, "unknown function '" + std::string(ident) + "'");
        ++pos_;
        std::int32_t arg = expression();
        if (peek() != ')') throw SyntaxError(pos_, "expected ')'");
        ++pos_;
        detail::Node n;
        n.kind = detail::Node::Kind::Unary;
        n.uop = fop;
        n.a = arg;
        n.offset = static_cast<std::uint32_t>(start);
        return push(n);
      }
      if (is_function_name(ident))
        throw SyntaxError(start, "function '" + std::string(ident) + "' requires an argument");
      int idx = table_->find(ident);
      if (idx < 0) throw UnknownSymbol(std::string(ident), start);
      detail::Node n;
      n.kind = detail::Node::Kind::Symbol;
      n.symbol = idx;
      n.offset = static_cast<std::uint32_t>(start);
      return push(n);
    }
    throw SyntaxError(off, pos_ >= text_.size() ? "unexpected end of input"
                                                : std::string("unexpected character '") + c + "'");
  }

  std::int32_t number() {
    std::size_t start = pos_;
    double value = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{}) throw SyntaxError(start, "malformed number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    detail::Node n;
    n.kind = detail::Node::Kind::Constant;
    n.value = value;
    n.offset = static_cast<std::uint32_t>(start);
    return push(n);
  }
};

Expression Expression::parse(std::string_view text, TablePtr table) {
  return Parser(text, std::move(table)).run();
}

// ---- builders ----

Expression Expression::constant(double c, TablePtr table) {
  Expression e;
  detail::Node n;
  n.kind = detail::Node::Kind::Constant;
  n.value = c;
  auto v = std::make_shared<std::vector<detail::Node>>();
  v->push_back(n);
  e.nodes_ = std::move(v);
  e.root_ = 0;
  e.table_ = std::move(table);
  return e;
}

Expression Expression::symbol(int index, TablePtr table) {
  Expression e;
  detail::Node n;
  n.kind = detail::Node::Kind::Symbol;
  n.symbol = index;
  auto v = std::make_shared<std::vector<detail::Node>>();
  v->push_back(n);
  e.nodes_ = std::move(v);
  e.root_ = 0;
  e.table_ = std::move(table);
  return e;
}

Expression Expression::unary(UnaryOp op, const Expression& a) {
  Expression e;
  auto v = std::make_shared<std::vector<detail::Node>>(*a.nodes_);
  if (op == UnaryOp::Neg && (*v)[a.root_].kind == detail::Node::Kind::Constant) {
    (*v)[a.root_].value = -(*v)[a.root_].value;
    e.nodes_ = std::move(v);
    e.root_ = a.root_;
    e.table_ = a.table_;
    return e;
  }
  detail::Node n;
  n.kind = detail::Node::Kind::Unary;
  n.uop = op;
  n.a = a.root_;
  v->push_back(n);
  e.nodes_ = std::move(v);
  e.root_ = static_cast<std::int32_t>(e.nodes_->size() - 1);
  e.table_ = a.table_;
  return e;
}

Expression Expression::binary(BinaryOp op, const Expression& a, const Expression& b) {
  if (a.table_ != b.table_)
    throw ConfigError("cannot combine expressions over different symbol tables");
  Expression e;
  auto v = std::make_shared<std::vector<detail::Node>>(*a.nodes_);
  std::int32_t shift = static_cast<std::int32_t>(v->size());
  for (detail::Node n : *b.nodes_) {
    if (n.a >= 0) n.a += shift;
    if (n.b >= 0) n.b += shift;
    v->push_back(n);
  }
  detail::Node n;
  n.kind = detail::Node::Kind::Binary;
  n.bop = op;
  n.a = a.root_;
  n.b = b.root_ + shift;
  v->push_back(n);
  e.nodes_ = std::move(v);
  e.root_ = static_cast<std::int32_t>(e.nodes_->size() - 1);
  e.table_ = a.table_;
  return e;
}

// ---- serialization ----

namespace {
int precedence(const detail::Node& n) {
  switch (n.kind) {
    case detail::Node::Kind::Constant:
      return std::signbit(n.value) ? 3 : 5;  // negative literal prints with a sign
    case detail::Node::Kind::Symbol: return 5;
    case detail::Node::Kind::Unary: return n.uop == UnaryOp::Neg ? 3 : 5;
    case detail::Node::Kind::Binary:
      switch (n.bop) {
        case BinaryOp::Add: case BinaryOp::Sub: return 1;
        case BinaryOp::Mul: case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
      }
  }
  return 5;
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Step: return "step";
  }
  return "?";
}
}  // namespace

std::string Expression::node_text(std::int32_t i) const {
  const detail::Node& n = (*nodes_)[i];
  auto wrap = [&](std::int32_t child, bool parens) {
    std::string s = node_text(child);
    return parens ? "(" + s + ")" : s;
  };
  switch (n.kind) {
    case detail::Node::Kind::Constant: return format_double(n.value);
    case detail::Node::Kind::Symbol: return table_->name(n.symbol);
    case detail::Node::Kind::Unary: {
      int pc = precedence((*nodes_)[n.a]);
      if (n.uop == UnaryOp::Neg) return "-" + wrap(n.a, pc < 3);
      return std::string(unary_name(n.uop)) + "(" + node_text(n.a) + ")";
    }
    case detail::Node::Kind::Binary: {
      int pa = precedence((*nodes_)[n.a]);
      int pb = precedence((*nodes_)[n.b]);
      switch (n.bop) {
        case BinaryOp::Add: return wrap(n.a, pa < 1) + "+" + wrap(n.b, pb <= 1);
        case BinaryOp::Sub: return wrap(n.a, pa < 1) + "-" + wrap(n.b, pb <= 1);
        case BinaryOp::Mul: return wrap(n.a, pa < 2) + "*" + wrap(n.b, pb <= 2);
        case BinaryOp::Div: return wrap(n.a, pa < 2) + "/" + wrap(n.b, pb <= 2);
        case BinaryOp::Pow: return wrap(n.a, pa <= 4) + "^" + wrap(n.b, pb < 3);
      }
    }
  }
  return "?";
}

std::string Expression::text() const { return node_text(root_); }

void Expression::domain_fail(const char* what, std::int32_t node) const {
  throw DomainError(what, node_text(node));
}

namespace {
bool nodes_equal(const std::vector<detail::Node>& an, std::int32_t a,
                 const std::vector<detail::Node>& bn, std::int32_t b) {
  const detail::Node& x = an[a];
  const detail::Node& y = bn[b];
  if (x.kind != y.kind) return false;
  switch (x.kind) {
    case detail::Node::Kind::Constant: return x.value == y.value;
    case detail::Node::Kind::Symbol: return x.symbol == y.symbol;
    case detail::Node::Kind::Unary:
      return x.uop == y.uop && nodes_equal(an, x.a, bn, y.a);
    case detail::Node::Kind::Binary:
      return x.bop == y.bop && nodes_equal(an, x.a, bn, y.a) && nodes_equal(an, x.b, bn, y.b);
  }
  return false;
}
}  // namespace

bool Expression::same_structure(const Expression& other) const {
  if (!valid() || !other.valid()) return valid() == other.valid();
  return nodes_equal(*nodes_, root_, *other.nodes_, other.root_);
}

}  // namespace geostab::expr
