#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tracelm::trace {

// One kernel event. Timestamps are nanoseconds since trace start, kept in
// 64-bit integers so multi-second traces cannot overflow.
struct SyscallEvent {
  std::string name;
  std::int64_t ts_ns = 0;
  std::int64_t ret = 0;
  std::string procname;
  std::int64_t tid = 0;
  std::int64_t pid = 0;
  bool entry = true;

  bool operator==(const SyscallEvent&) const = default;
};

enum class MarkerKind { request_enter, request_exit };

// Userspace event delimiting a request's lifetime.
struct MarkerEvent {
  MarkerKind kind = MarkerKind::request_enter;
  std::int64_t ts_ns = 0;
  std::int64_t tid = 0;

  bool operator==(const MarkerEvent&) const = default;
};

using Event = std::variant<SyscallEvent, MarkerEvent>;

// All syscalls observed between a request's enter and exit markers,
// regardless of the emitting thread. Immutable once built.
struct Request {
  std::vector<SyscallEvent> events;
  std::vector<std::int64_t> deltas_ns;  // deltas_ns[0] == 0
  std::string label;
  std::int64_t duration_ns = 0;

  std::size_t size() const { return events.size(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses one JSON Lines record. Syscall records carry exactly
// {ts,name,ret,proc,tid,pid,entry}; markers carry {ts,name,tid} with
// name in {request_enter, request_exit}.
Event parse_event_line(std::string_view line, std::size_t line_no = 0);

std::string serialize_event(const Event& event);

struct DelimitResult {
  std::vector<Request> requests;
  std::size_t dropped_unmatched_enters = 0;
};

// Pairs enter/exit markers by tid (FIFO per tid) and assigns every syscall
// with enter.ts <= ts <= exit.ts to the request, both endpoints included.
// A syscall may land in several overlapping requests. Enters still open at
// end of stream are dropped and counted. An exit with no matching enter is
// a StreamError.
DelimitResult delimit_requests(const std::vector<Event>& stream, std::string_view label = "");

// Fills deltas_ns: deltas[0] = 0, deltas[i] = ts[i] - ts[i-1]. Idempotent.
void compute_deltas(Request& request);

// Keeps the first max_len events and their deltas. max_len >= 1.
Request truncate_request(const Request& request, std::size_t max_len);

// Event file I/O. Validates that timestamps are non-decreasing.
std::vector<Event> read_event_file(const std::filesystem::path& path);
void write_event_file(const std::filesystem::path& path, const std::vector<Event>& events);

// Request dataset I/O: JSON Lines, one {label, events:[...]} per line.
// duration_ns is recomputed as last.ts - first.ts on load.
std::vector<Request> read_request_file(const std::filesystem::path& path);
void write_request_file(const std::filesystem::path& path, const std::vector<Request>& requests);

std::string serialize_request(const Request& request);
Request parse_request_line(std::string_view line, std::size_t line_no = 0);

}  // namespace tracelm::trace
