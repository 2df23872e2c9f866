#include "tracelm/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tracelm::csv {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

Writer::Writer(const std::filesystem::path& path, std::uint64_t seed,
               const std::vector<std::string>& columns)
    : target_(path), staged_(path.string() + ".tmp"), columns_(columns.size()) {
  if (columns.empty()) throw std::invalid_argument("csv::Writer: no columns");
  buffer_ += "# seed=" + std::to_string(seed) + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += columns[i];
  }
  buffer_ += '\n';
}

Writer::~Writer() {
  if (!finished_) {
    std::error_code ec;
    std::filesystem::remove(staged_, ec);
  }
}

void Writer::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("csv::Writer: cell count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += cells[i];
  }
  buffer_ += '\n';
}

void Writer::finish() {
  if (finished_) return;
  {
    std::ofstream out(staged_);
    if (!out) throw std::runtime_error("cannot write " + staged_.string());
    out << buffer_;
    if (!out) throw std::runtime_error("write failed: " + staged_.string());
  }
  std::filesystem::rename(staged_, target_);
  finished_ = true;
}

std::size_t Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw std::runtime_error("csv: missing column " + name);
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table table;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!header_seen) {
      table.columns = std::move(cells);
      header_seen = true;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (!header_seen) throw std::runtime_error("csv: no header in " + path.string());
  return table;
}

}  // namespace tracelm::csv
