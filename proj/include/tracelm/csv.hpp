#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tracelm::csv {

std::string format_double(double value);

// Minimal CSV with one leading "# seed=<n>" comment line and a header row.
// Values never contain commas or quotes in this project's outputs.
class Writer {
 public:
  Writer(const std::filesystem::path& path, std::uint64_t seed,
         const std::vector<std::string>& columns);
  ~Writer();

  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void row(const std::vector<std::string>& cells);
  // Flushes and renames the staged file onto the target path.
  void finish();

 private:
  std::filesystem::path target_;
  std::filesystem::path staged_;
  std::string buffer_;
  std::size_t columns_ = 0;
  bool finished_ = false;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;
};

Table read_csv(const std::filesystem::path& path);

}  // namespace tracelm::csv
