#ifndef GEOSTAB_REPORT_HPP
#define GEOSTAB_REPORT_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace geostab::cli {

// Minimal ordered JSON value for report emission. Keys keep insertion order
// and floating-point values are serialized with 17 significant digits, which
// together make outputs byte-deterministic for identical runs.
class Json {
 public:
  Json() : kind_(Kind::Null) {}

  static Json object() { Json j; j.kind_ = Kind::Object; return j; }
  static Json array() { Json j; j.kind_ = Kind::Array; return j; }
  static Json str(std::string s) { Json j; j.kind_ = Kind::String; j.str_ = std::move(s); return j; }
  static Json number(double v) { Json j; j.kind_ = Kind::Number; j.num_ = v; return j; }
  static Json integer(long long v) { Json j; j.kind_ = Kind::Integer; j.int_ = v; return j; }
  static Json boolean(bool v) { Json j; j.kind_ = Kind::Bool; j.bool_ = v; return j; }
  static Json null() { return Json(); }

  template <class It>
  static Json number_array(It begin, It end) {
    Json j = array();
    for (It it = begin; it != end; ++it) j.push(number(*it));
    return j;
  }

  Json& set(const std::string& key, Json v) {
    members_.emplace_back(key, std::move(v));
    return *this;
  }
  Json& push(Json v) {
    items_.push_back(std::move(v));
    return *this;
  }

  std::string dump(int indent = 2) const;

 private:
  enum class Kind { Null, Bool, Integer, Number, String, Array, Object };
  Kind kind_;
  bool bool_ = false;
  long long int_ = 0;
  double num_ = 0.0;
  std::string str_;
  std::vector<Json> items_;
  std::vector<std::pair<std::string, Json>> members_;

  void dump_to(std::string& out, int indent, int depth) const;
};

std::string format_g17(double v);

// CSV table with a header row; floats carry 17 significant digits.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(const std::vector<double>& row);
  std::string dump() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

void write_file(const std::string& path, const std::string& content);

}  // namespace geostab::cli

#endif
