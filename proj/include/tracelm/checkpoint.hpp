#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace tracelm::ckpt {

// Single-file model container:
//   bytes 0..7   magic "TLMCKPT1"
//   bytes 8..11  u32 LE header length H
//   H bytes      JSON header {version, arch, hyper, vocab, arrays:[{name,rows,cols}]}
//   payload      arrays in header order, row-major float32 LE
struct Checkpoint {
  int format_version = 1;
  std::string arch;
  nlohmann::json hyper;
  nlohmann::json vocab;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> arrays;

  const Eigen::MatrixXf& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tracelm::ckpt
