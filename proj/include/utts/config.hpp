// utts/config.hpp

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

#ifndef UTTS_CONFIG_HPP_
#define UTTS_CONFIG_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "utts/cdsvae.hpp"
#include "utts/frontend.hpp"

namespace utts::config {

// One config file drives every stage. Layering: built-in defaults, then the
// file, then --set key.path=value overrides. Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 1234;
  std::string out_dir = "out";

  // data
  std::string manifest;
  std::string eval_manifest;  // optional; falls back to manifest
  std::string lexicon;
  std::string symbols;

  // alignment
  int clusters = 50;
  std::string alignment_kind = "UA";  // or "FA"

  cdsvae::LossConfig loss;
  cdsvae::MaskConfig mask;
  cdsvae::TrainSchedule schedule;
  std::string arch_preset = "paper";  // or "small"

  frontend::FrontendSchedule frontend_schedule;
  frontend::DurationModelConfig duration_model;
  frontend::Fa2UaModelConfig fa2ua_model;
  std::string model_preset = "paper";  // sizes the frontend models

  // vocoder
  std::string vocoder_kind = "internal";  // or "external"
  int vocoder_iterations = 60;
  std::string vocoder_endpoint;
  std::string vocoder_command;
  int vocoder_timeout_ms = 30000;

  cdsvae::ArchConfig arch() const;
  nlohmann::json to_json() const;  // canonical form
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides = {});
  std::string canonical_text() const;
  std::string hash() const;  // 16 hex chars over the canonical form
};

// Applies "a.b.c=value" onto a JSON tree; values parse as JSON scalars when
// possible, else as strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace utts::config

#endif  // UTTS_CONFIG_HPP_
