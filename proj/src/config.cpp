// utts/config.cpp

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

#include "utts/config.hpp"

#include <fstream>
#include <set>

namespace utts::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  require(j.is_object(), "config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (allowed.find(it.key()) == allowed.end())
      throw ValidationError("config: unknown key \"" + where + it.key() +
                            "\"");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

cdsvae::ArchConfig RunConfig::arch() const {
  if (arch_preset == "paper") return cdsvae::ArchConfig{};
  if (arch_preset == "small") return cdsvae::ArchConfig::small();
  throw ValidationError("config: unknown arch preset \"" + arch_preset + "\"");
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["data"] = {{"manifest", manifest},
               {"eval_manifest", eval_manifest},
               {"lexicon", lexicon},
               {"symbols", symbols}};
  j["alignment"] = {{"clusters", clusters}, {"kind", alignment_kind}};
  j["loss"] = {{"alpha", loss.alpha},
               {"beta", loss.beta},
               {"gamma", loss.gamma},
               {"unconditional_prior", loss.unconditional_prior}};
  j["mask"] = {{"start_prob", mask.start_prob}, {"span", mask.span}};
  j["schedule"] = {{"epochs", schedule.epochs},
                   {"batch_size", schedule.batch_size},
                   {"lr", schedule.lr},
                   {"lr_decay", schedule.lr_decay},
                   {"decay_every_epochs", schedule.decay_every_epochs},
                   {"crop_frames", schedule.crop_frames},
                   {"workers", schedule.workers}};
  j["arch"] = {{"preset", arch_preset}};
  j["frontend"] = {{"epochs", frontend_schedule.epochs},
                   {"batch_size", frontend_schedule.batch_size},
                   {"lr", frontend_schedule.lr},
                   {"lr_decay", frontend_schedule.lr_decay},
                   {"decay_every_epochs", frontend_schedule.decay_every_epochs},
                   {"workers", frontend_schedule.workers},
                   {"validation_fraction",
                    frontend_schedule.validation_fraction},
                   {"preset", model_preset}};
  j["vocoder"] = {{"kind", vocoder_kind},
                  {"iterations", vocoder_iterations},
                  {"endpoint", vocoder_endpoint},
                  {"command", vocoder_command},
                  {"timeout_ms", vocoder_timeout_ms}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, {"seed", "out_dir", "data", "alignment", "loss", "mask",
                 "schedule", "arch", "frontend", "vocoder"},
             "");
  get_if(j, "seed", c.seed);
  get_if(j, "out_dir", c.out_dir);
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"manifest", "eval_manifest", "lexicon", "symbols"}, "data.");
    get_if(d, "manifest", c.manifest);
    get_if(d, "eval_manifest", c.eval_manifest);
    get_if(d, "lexicon", c.lexicon);
    get_if(d, "symbols", c.symbols);
  }
  if (j.contains("alignment")) {
    const json& a = j.at("alignment");
    check_keys(a, {"clusters", "kind"}, "alignment.");
    get_if(a, "clusters", c.clusters);
    get_if(a, "kind", c.alignment_kind);
    require(c.alignment_kind == "UA" || c.alignment_kind == "FA",
            "config: alignment.kind must be UA or FA");
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, {"alpha", "beta", "gamma", "unconditional_prior"}, "loss.");
    get_if(l, "alpha", c.loss.alpha);
    get_if(l, "beta", c.loss.beta);
    get_if(l, "gamma", c.loss.gamma);
    get_if(l, "unconditional_prior", c.loss.unconditional_prior);
    c.loss.validate();
  }
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    check_keys(m, {"start_prob", "span"}, "mask.");
    get_if(m, "start_prob", c.mask.start_prob);
    get_if(m, "span", c.mask.span);
    require(c.mask.start_prob >= 0.0 && c.mask.start_prob <= 1.0,
            "config: mask.start_prob must be in [0, 1]");
    require(c.mask.span >= 1, "config: mask.span must be >= 1");
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s,
               {"epochs", "batch_size", "lr", "lr_decay", "decay_every_epochs",
                "crop_frames", "workers"},
               "schedule.");
    get_if(s, "epochs", c.schedule.epochs);
    get_if(s, "batch_size", c.schedule.batch_size);
    get_if(s, "lr", c.schedule.lr);
    get_if(s, "lr_decay", c.schedule.lr_decay);
    get_if(s, "decay_every_epochs", c.schedule.decay_every_epochs);
    get_if(s, "crop_frames", c.schedule.crop_frames);
    get_if(s, "workers", c.schedule.workers);
  }
  if (j.contains("arch")) {
    const json& a = j.at("arch");
    check_keys(a, {"preset"}, "arch.");
    get_if(a, "preset", c.arch_preset);
    c.arch();  // validates the preset name
  }
  if (j.contains("frontend")) {
    const json& f = j.at("frontend");
    check_keys(f,
               {"epochs", "batch_size", "lr", "lr_decay", "decay_every_epochs",
                "workers", "validation_fraction", "preset"},
               "frontend.");
    get_if(f, "epochs", c.frontend_schedule.epochs);
    get_if(f, "batch_size", c.frontend_schedule.batch_size);
    get_if(f, "lr", c.frontend_schedule.lr);
    get_if(f, "lr_decay", c.frontend_schedule.lr_decay);
    get_if(f, "decay_every_epochs", c.frontend_schedule.decay_every_epochs);
    get_if(f, "workers", c.frontend_schedule.workers);
    get_if(f, "validation_fraction", c.frontend_schedule.validation_fraction);
    get_if(f, "preset", c.model_preset);
    require(c.model_preset == "paper" || c.model_preset == "small",
            "config: frontend.preset must be paper or small");
  }
  if (j.contains("vocoder")) {
    const json& v = j.at("vocoder");
    check_keys(v, {"kind", "iterations", "endpoint", "command", "timeout_ms"},
               "vocoder.");
    get_if(v, "kind", c.vocoder_kind);
    get_if(v, "iterations", c.vocoder_iterations);
    get_if(v, "endpoint", c.vocoder_endpoint);
    get_if(v, "command", c.vocoder_command);
    get_if(v, "timeout_ms", c.vocoder_timeout_ms);
    require(c.vocoder_kind == "internal" || c.vocoder_kind == "external",
            "config: vocoder.kind must be internal or external");
  }
  if (c.model_preset == "small") {
    c.duration_model = frontend::DurationModelConfig::small();
    c.fa2ua_model = frontend::Fa2UaModelConfig::small();
  }
  c.fa2ua_model.ua_classes = c.clusters;
  c.frontend_schedule.seed = c.seed ^ 0xf0f0f0f0ull;
  c.schedule.seed = c.seed;
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0,
          "config override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), "config override: empty key in " + assignment);
    if (dot == std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // plain string
      }
      (*node)[key] = parsed;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(str_cat("config: parse error in ", path, ": ",
                                    e.what()));
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return from_json(j);
}

std::string RunConfig::canonical_text() const { return to_json().dump(2); }

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical_text())); }

}  // namespace utts::config
