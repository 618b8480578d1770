#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/kazhdan.hpp"

namespace gaplab {

// Every number written to a report goes through tag(): value plus provenance.
// Non-finite values become the strings "inf", "-inf" or "nan" since JSON has no
// literal for them.

inline nlohmann::ordered_json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline nlohmann::ordered_json tag(double v, Provenance p) {
  nlohmann::ordered_json j;
  j["value"] = json_number(v);
  j["provenance"] = to_string(p);
  return j;
}

inline nlohmann::ordered_json tag(const std::vector<double>& v, Provenance p) {
  nlohmann::ordered_json j;
  auto arr = nlohmann::ordered_json::array();
  for (double x : v) arr.push_back(json_number(x));
  j["values"] = std::move(arr);
  j["provenance"] = to_string(p);
  return j;
}

inline nlohmann::ordered_json measured(double v) { return tag(v, Provenance::Measured); }
inline nlohmann::ordered_json formula(double v) { return tag(v, Provenance::PaperFormula); }
inline nlohmann::ordered_json oracle(double v) { return tag(v, Provenance::Oracle); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<double>& values) {
    std::vector<std::string> r;
    for (double v : values) r.push_back(format_number(v));
    rows_.push_back(std::move(r));
  }
  void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

}  // namespace gaplab
