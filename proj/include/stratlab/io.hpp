#pragma once

// Report output: RFC-4180 CSV tables, JSON summaries and the run manifest.
// Doubles are written with %.17g so that a table round-trips exactly.

#include "stratlab/core.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace stratlab {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A field is quoted when it contains a comma, quote, CR or LF; embedded
/// quotes are doubled.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class Table {
 public:
  using Cell = std::variant<std::string, double, long long>;

  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::vector<Cell>>& data() const { return rows_; }

  template <class... T>
  void add(T&&... cells) {
    std::vector<Cell> row;
    (row.push_back(to_cell(std::forward<T>(cells))), ...);
    add_row(std::move(row));
  }

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw ConfigError("table row width does not match header");
    rows_.push_back(std::move(row));
  }

  static std::string render(const Cell& c) {
    if (auto* s = std::get_if<std::string>(&c)) return *s;
    if (auto* d = std::get_if<double>(&c)) return format_double(*d);
    return std::to_string(std::get<long long>(c));
  }

  /// CRLF line endings, as RFC-4180 specifies.
  std::string csv() const {
    std::string out;
    auto line = [&](const auto& cells, auto&& str) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_field(str(cells[i]));
      }
      out += "\r\n";
    };
    line(header_, [](const std::string& s) { return s; });
    for (const auto& r : rows_) line(r, [](const Cell& c) { return render(c); });
    return out;
  }

 private:
  template <class T>
  static Cell to_cell(T&& v) {
    using U = std::decay_t<T>;
    if constexpr (std::is_same_v<U, bool>) return static_cast<long long>(v);
    else if constexpr (std::is_integral_v<U>) return static_cast<long long>(v);
    else if constexpr (std::is_floating_point_v<U>) return static_cast<double>(v);
    else return std::string(std::forward<T>(v));
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

/// Parses RFC-4180 text back into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
  if (!os) throw ConfigError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_csv(const std::filesystem::path& path, const Table& t) { write_text(path, t.csv()); }

/// Non-finite numbers are not JSON; they are written as strings.
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace stratlab
