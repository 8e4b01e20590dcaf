#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "diffpilot/json_io.hpp"
#include "diffpilot/world/world.hpp"

namespace diffpilot::world {

/// One step of an episode: the state the action was applied in, the executed
/// action, and the resulting event.
struct TrajectoryRecord {
  int t = 0;
  Vec s;  // 6-vector observation before the step
  Vec a;  // executed action
  StepEvent event = StepEvent::Running;
  std::optional<double> gamma;
  std::optional<Vec> pilot_action;
};

inline json record_to_json(const TrajectoryRecord& r) {
  json j;
  j["t"] = r.t;
  j["s"] = std::vector<double>(r.s.data(), r.s.data() + r.s.size());
  j["a"] = std::vector<double>(r.a.data(), r.a.data() + r.a.size());
  j["event"] = std::string(to_string(r.event));
  if (r.gamma) j["gamma"] = *r.gamma;
  if (r.pilot_action) j["pilot"] = std::vector<double>(r.pilot_action->data(), r.pilot_action->data() + 2);
  return j;
}

inline Vec json_vec(const json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) throw ParseError(std::string(what) + ": expected array of " + std::to_string(n));
  Vec v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline TrajectoryRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("trajectory record must be an object");
  TrajectoryRecord r;
  try {
    r.t = j.at("t").get<int>();
    r.s = json_vec(j.at("s"), 6, "s");
    r.a = json_vec(j.at("a"), 2, "a");
    r.event = step_event_from_string(j.at("event").get<std::string>());
    if (j.contains("gamma")) r.gamma = j.at("gamma").get<double>();
    if (j.contains("pilot")) r.pilot_action = json_vec(j.at("pilot"), 2, "pilot");
  } catch (const json::exception& e) {
    throw ParseError(std::string("trajectory record: ") + e.what());
  }
  return r;
}

inline void write_ndjson(std::ostream& os, const std::vector<TrajectoryRecord>& recs) {
  for (const auto& r : recs) {
    write_canonical(os, record_to_json(r));
    os << '\n';
  }
}

inline std::vector<TrajectoryRecord> read_ndjson(const std::string& text) {
  std::vector<TrajectoryRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace diffpilot::world
