// utts/checkpoint.cpp

// Copyright 2026  The UTTS Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "utts/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace utts {

using nlohmann::json;

namespace {
constexpr uint32_t kVersion = 1;
}

const Mat& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw ValidationError("checkpoint: missing tensor " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  json header;
  header["meta"] = cp.meta;
  json index = json::array();
  for (const auto& [name, m] : cp.tensors)
    index.push_back({{"name", name},
                     {"rows", m.rows()},
                     {"cols", m.cols()}});
  header["tensors"] = index;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write("UCKP", 4);
  uint32_t ver = kVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : cp.tensors)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "UCKP", 4) != 0)
    throw ValidationError("load_checkpoint: bad magic in " + path);
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kVersion)
    throw ValidationError(
        str_cat("load_checkpoint: unsupported version ", ver, " in ", path));
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ValidationError("load_checkpoint: truncated header in " + path);

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw ValidationError(str_cat("load_checkpoint: bad header: ", e.what()));
  }
  Checkpoint cp;
  cp.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        if (!in)
          throw ValidationError("load_checkpoint: truncated payload in " +
                                path);
        m(r, c) = v;
      }
    cp.tensors.emplace_back(name, std::move(m));
  }
  return cp;
}

}  // namespace utts
