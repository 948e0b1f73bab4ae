#include "geostab/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "geostab/errors.hpp"

namespace geostab::cli {

std::string format_g17(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {
void escape_into(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}
}  // namespace

void Json::dump_to(std::string& out, int indent, int depth) const {
  std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
  std::string pad_close(static_cast<std::size_t>(indent) * depth, ' ');
  switch (kind_) {
    case Kind::Null: out += "null"; break;
    case Kind::Bool: out += bool_ ? "true" : "false"; break;
    case Kind::Integer: out += std::to_string(int_); break;
    case Kind::Number: out += format_g17(num_); break;
    case Kind::String: escape_into(out, str_); break;
    case Kind::Array: {
      if (items_.empty()) { out += "[]"; break; }
      out += "[\n";
      for (std::size_t i = 0; i < items_.size(); ++i) {
        out += pad;
        items_[i].dump_to(out, indent, depth + 1);
        if (i + 1 < items_.size()) out += ',';
        out += '\n';
      }
      out += pad_close + "]";
      break;
    }
    case Kind::Object: {
      if (members_.empty()) { out += "{}"; break; }
      out += "{\n";
      for (std::size_t i = 0; i < members_.size(); ++i) {
        out += pad;
        escape_into(out, members_[i].first);
        out += ": ";
        members_[i].second.dump_to(out, indent, depth + 1);
        if (i + 1 < members_.size()) out += ',';
        out += '\n';
      }
      out += pad_close + "}";
      break;
    }
  }
}

std::string Json::dump(int indent) const {
  std::string out;
  dump_to(out, indent, 0);
  out += '\n';
  return out;
}

void CsvTable::add_row(const std::vector<double>& row) {
  if (row.size() != header_.size())
    throw ConfigError("CSV row width does not match header");
  rows_.push_back(row);
}

std::string CsvTable::dump() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) {
    out += header_[i];
    out += i + 1 < header_.size() ? "," : "";
  }
  out += '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += format_g17(row[i]);
      out += i + 1 < row.size() ? "," : "";
    }
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open output file '" + path + "'");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace geostab::cli
