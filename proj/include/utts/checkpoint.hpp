// utts/checkpoint.hpp

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

// Versioned checkpoint container: "UCKP" magic, u32 version, u64 header
// length, JSON header (model metadata + tensor index), then row-major
// float64 little-endian tensor payloads in index order.

#ifndef UTTS_CHECKPOINT_HPP_
#define UTTS_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "utts/common.hpp"

namespace utts {

struct Checkpoint {
  nlohmann::json meta;  // model-specific metadata; never holds tensor data
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace utts

#endif  // UTTS_CHECKPOINT_HPP_
