#ifndef GEOSTAB_ERRORS_HPP
#define GEOSTAB_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geostab {

// Root of the library's error hierarchy. kind() is a stable machine-readable
// tag used when errors are serialized into reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Scenario / input problems (exit code 2 at the CLI).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

// ---- expression module ----

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& what)
      : Error("syntax", what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownSymbol : public Error {
 public:
  UnknownSymbol(std::string name, std::size_t offset)
      : Error("unknown-symbol",
              "unknown symbol '" + name + "' (at byte " + std::to_string(offset) + ")"),
        name_(std::move(name)), offset_(offset) {}
  const std::string& name() const { return name_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string name_;
  std::size_t offset_;
};

class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::string node)
      : Error("domain", what + " in '" + node + "'"), node_(std::move(node)) {}
  const std::string& node() const { return node_; }

 private:
  std::string node_;
};

// ---- numeric module ----

class SingularMatrix : public Error {
 public:
  explicit SingularMatrix(const std::string& what) : Error("singular-matrix", what) {}
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(const std::string& what) : Error("no-convergence", what) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(const std::string& what) : Error("rank-deficient", what) {}
};

class NegativeForm : public Error {
 public:
  explicit NegativeForm(const std::string& what) : Error("negative-form", what) {}
};

// ---- geometry / maupertuis ----

class DegenerateMetric : public Error {
 public:
  explicit DegenerateMetric(const std::string& what) : Error("degenerate-metric", what) {}
};

class BoundaryPoint : public Error {
 public:
  explicit BoundaryPoint(const std::string& what) : Error("boundary-point", what) {}
};

// ---- lagrangian ----

class DegenerateLagrangian : public Error {
 public:
  explicit DegenerateLagrangian(const std::string& what)
      : Error("degenerate-lagrangian", what) {}
};

// ---- flow ----

class StepUnderflow : public Error {
 public:
  explicit StepUnderflow(const std::string& what) : Error("step-underflow", what) {}
};

class MaxStepsExceeded : public Error {
 public:
  explicit MaxStepsExceeded(const std::string& what) : Error("max-steps", what) {}
};

// ---- lyapunov ----

class DegenerateStart : public Error {
 public:
  explicit DegenerateStart(const std::string& what) : Error("degenerate-start", what) {}
};

class SeminormCollapse : public Error {
 public:
  explicit SeminormCollapse(const std::string& what) : Error("seminorm-collapse", what) {}
};

}  // namespace geostab

#endif
