#include "tracelm/trace.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>

#include <json.hpp>

namespace tracelm::trace {

namespace {

using nlohmann::json;

std::int64_t require_int(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line_no, std::string("missing field '") + key + "'");
  if (!it->is_number_integer() && !it->is_number_unsigned())
    throw ParseError(line_no, std::string("field '") + key + "' is not an integer");
  return it->get<std::int64_t>();
}

std::string require_string(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line_no, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ParseError(line_no, std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

bool require_bool(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line_no, std::string("missing field '") + key + "'");
  if (!it->is_boolean()) throw ParseError(line_no, std::string("field '") + key + "' is not a boolean");
  return it->get<bool>();
}

Event event_from_json(const json& j, std::size_t line_no) {
  if (!j.is_object()) throw ParseError(line_no, "record is not a JSON object");
  const std::string name = require_string(j, "name", line_no);
  if (name.empty()) throw ParseError(line_no, "field 'name' is empty");
  const std::int64_t ts = require_int(j, "ts", line_no);
  if (ts < 0) throw ParseError(line_no, "field 'ts' is negative");

  if (name == "request_enter" || name == "request_exit") {
    MarkerEvent m;
    m.kind = name == "request_enter" ? MarkerKind::request_enter : MarkerKind::request_exit;
    m.ts_ns = ts;
    m.tid = require_int(j, "tid", line_no);
    if (j.size() != 3) throw ParseError(line_no, "marker record has unexpected fields");
    return m;
  }

  SyscallEvent e;
  e.name = name;
  e.ts_ns = ts;
  e.ret = require_int(j, "ret", line_no);
  e.procname = require_string(j, "proc", line_no);
  if (e.procname.empty()) throw ParseError(line_no, "field 'proc' is empty");
  e.tid = require_int(j, "tid", line_no);
  e.pid = require_int(j, "pid", line_no);
  e.entry = require_bool(j, "entry", line_no);
  if (j.size() != 7) throw ParseError(line_no, "syscall record has unexpected fields");
  return e;
}

json event_to_json(const Event& event) {
  json j;
  if (const auto* m = std::get_if<MarkerEvent>(&event)) {
    j["ts"] = m->ts_ns;
    j["name"] = m->kind == MarkerKind::request_enter ? "request_enter" : "request_exit";
    j["tid"] = m->tid;
  } else {
    const auto& e = std::get<SyscallEvent>(event);
    j["ts"] = e.ts_ns;
    j["name"] = e.name;
    j["ret"] = e.ret;
    j["proc"] = e.procname;
    j["tid"] = e.tid;
    j["pid"] = e.pid;
    j["entry"] = e.entry;
  }
  return j;
}

std::int64_t event_ts(const Event& event) {
  return std::visit([](const auto& e) { return e.ts_ns; }, event);
}

}  // namespace

Event parse_event_line(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& err) {
    throw ParseError(line_no, std::string("invalid JSON: ") + err.what());
  }
  return event_from_json(j, line_no);
}

std::string serialize_event(const Event& event) { return event_to_json(event).dump(); }

DelimitResult delimit_requests(const std::vector<Event>& stream, std::string_view label) {
  struct Interval {
    std::int64_t enter_ts;
    std::int64_t exit_ts = -1;
    bool closed = false;
  };

  std::vector<SyscallEvent> syscalls;
  std::vector<Interval> intervals;            // ordered by enter position
  std::map<std::int64_t, std::deque<std::size_t>> open_by_tid;  // FIFO per tid

  for (const Event& event : stream) {
    if (const auto* m = std::get_if<MarkerEvent>(&event)) {
      if (m->kind == MarkerKind::request_enter) {
        open_by_tid[m->tid].push_back(intervals.size());
        intervals.push_back({m->ts_ns});
      } else {
        auto it = open_by_tid.find(m->tid);
        if (it == open_by_tid.end() || it->second.empty())
          throw StreamError("request_exit without matching request_enter on tid " +
                            std::to_string(m->tid));
        Interval& iv = intervals[it->second.front()];
        it->second.pop_front();
        iv.exit_ts = m->ts_ns;
        iv.closed = true;
      }
    } else {
      syscalls.push_back(std::get<SyscallEvent>(event));
    }
  }

  DelimitResult result;
  for (const Interval& iv : intervals) {
    if (!iv.closed) {
      ++result.dropped_unmatched_enters;
      continue;
    }
    Request r;
    r.label = label;
    r.duration_ns = iv.exit_ts - iv.enter_ts;
    // syscalls is time-ordered (stream precondition), so interval membership
    // is a contiguous range; ties at the endpoints are included.
    auto first = std::lower_bound(syscalls.begin(), syscalls.end(), iv.enter_ts,
                                  [](const SyscallEvent& e, std::int64_t t) { return e.ts_ns < t; });
    auto last = std::upper_bound(syscalls.begin(), syscalls.end(), iv.exit_ts,
                                 [](std::int64_t t, const SyscallEvent& e) { return t < e.ts_ns; });
    r.events.assign(first, last);
    compute_deltas(r);
    result.requests.push_back(std::move(r));
  }
  return result;
}

void compute_deltas(Request& request) {
  request.deltas_ns.resize(request.events.size());
  for (std::size_t i = 0; i < request.events.size(); ++i) {
    request.deltas_ns[i] = i == 0 ? 0 : request.events[i].ts_ns - request.events[i - 1].ts_ns;
  }
}

Request truncate_request(const Request& request, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("truncate_request: max_len must be >= 1");
  if (request.events.size() <= max_len) return request;
  Request out;
  out.label = request.label;
  out.duration_ns = request.duration_ns;
  out.events.assign(request.events.begin(), request.events.begin() + max_len);
  out.deltas_ns.assign(request.deltas_ns.begin(), request.deltas_ns.begin() + max_len);
  if (!out.deltas_ns.empty()) out.deltas_ns[0] = 0;
  return out;
}

std::vector<Event> read_event_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event file: " + path.string());
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t prev_ts = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Event e = parse_event_line(line, line_no);
    const std::int64_t ts = event_ts(e);
    if (ts < prev_ts) throw ParseError(line_no, "timestamps are not non-decreasing");
    prev_ts = ts;
    events.push_back(std::move(e));
  }
  return events;
}

void write_event_file(const std::filesystem::path& path, const std::vector<Event>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event file: " + path.string());
  for (const Event& e : events) out << serialize_event(e) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string serialize_request(const Request& request) {
  json j;
  j["label"] = request.label;
  json events = json::array();
  for (const SyscallEvent& e : request.events) events.push_back(event_to_json(Event{e}));
  j["events"] = std::move(events);
  return j.dump();
}

Request parse_request_line(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& err) {
    throw ParseError(line_no, std::string("invalid JSON: ") + err.what());
  }
  if (!j.is_object() || !j.contains("label") || !j.contains("events"))
    throw ParseError(line_no, "request record needs {label, events}");
  Request r;
  r.label = j["label"].get<std::string>();
  if (!j["events"].is_array()) throw ParseError(line_no, "'events' is not an array");
  std::int64_t prev_ts = -1;
  for (const json& ej : j["events"]) {
    Event e = event_from_json(ej, line_no);
    auto* sc = std::get_if<SyscallEvent>(&e);
    if (!sc) throw ParseError(line_no, "marker event inside a request record");
    if (sc->ts_ns < prev_ts) throw ParseError(line_no, "request events not sorted by ts");
    prev_ts = sc->ts_ns;
    r.events.push_back(std::move(*sc));
  }
  compute_deltas(r);
  r.duration_ns = r.events.empty() ? 0 : r.events.back().ts_ns - r.events.front().ts_ns;
  return r;
}

std::vector<Request> read_request_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open request file: " + path.string());
  std::vector<Request> requests;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    requests.push_back(parse_request_line(line, line_no));
  }
  return requests;
}

void write_request_file(const std::filesystem::path& path, const std::vector<Request>& requests) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write request file: " + path.string());
  for (const Request& r : requests) out << serialize_request(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace tracelm::trace
