#include "tracelm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tracelm::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'T', 'L', 'M', 'C', 'K', 'P', 'T', '1'};
}

const Eigen::MatrixXf& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return m;
  throw std::runtime_error("checkpoint: missing array " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["version"] = checkpoint.format_version;
  header["arch"] = checkpoint.arch;
  header["hyper"] = checkpoint.hyper;
  header["vocab"] = checkpoint.vocab;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, m] : checkpoint.arrays)
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["arrays"] = std::move(arrays);
  const std::string header_bytes = header.dump();
  if (header_bytes.size() > 0xffffffffull) throw std::runtime_error("checkpoint header too large");

  // Stage and rename so a failed write never leaves a partial checkpoint.
  const std::filesystem::path staged = path.string() + ".tmp";
  {
    std::ofstream out(staged, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + staged.string());
    out.write(kMagic, sizeof(kMagic));
    const auto len = static_cast<std::uint32_t>(header_bytes.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    std::vector<float> row;
    for (const auto& [name, m] : checkpoint.arrays) {
      (void)name;
      row.resize(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
      }
    }
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(staged, ec);
      throw std::runtime_error("checkpoint write failed: " + staged.string());
    }
  }
  std::filesystem::rename(staged, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a model checkpoint: " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::parse_error& err) {
    throw std::runtime_error("corrupt checkpoint header: " + std::string(err.what()));
  }

  Checkpoint checkpoint;
  checkpoint.format_version = header.at("version").get<int>();
  if (checkpoint.format_version != 1)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(checkpoint.format_version));
  checkpoint.arch = header.at("arch").get<std::string>();
  checkpoint.hyper = header.at("hyper");
  checkpoint.vocab = header.at("vocab");

  std::vector<float> row;
  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: bad array shape for " + name);
    Eigen::MatrixXf m(rows, cols);
    row.resize(static_cast<std::size_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
      if (!in) throw std::runtime_error("truncated checkpoint payload: " + path.string());
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    checkpoint.arrays.emplace_back(name, std::move(m));
  }
  return checkpoint;
}

}  // namespace tracelm::ckpt
