#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "diffpilot/error.hpp"

namespace diffpilot {

using json = nlohmann::json;

/// Reals as "%.17g" so every double round-trips exactly.
inline std::string format_real(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite real");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Compact canonical JSON: object keys in nlohmann's sorted order, reals with
/// 17 significant digits. Identical documents always produce identical bytes.
inline void write_canonical(std::ostream& os, const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      os << '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',';
        first = false;
        os << json(it.key()).dump() << ':';
        write_canonical(os, it.value());
      }
      os << '}';
      break;
    }
    case json::value_t::array: {
      os << '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ',';
        write_canonical(os, j[i]);
      }
      os << ']';
      break;
    }
    case json::value_t::number_float:
      os << format_real(j.get<double>());
      break;
    default:
      os << j.dump();
  }
}

inline std::string to_canonical(const json& j) {
  std::ostringstream os;
  write_canonical(os, j);
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

}  // namespace diffpilot
