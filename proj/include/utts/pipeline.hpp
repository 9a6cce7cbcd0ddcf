// utts/pipeline.hpp

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

// End-to-end generation: voice conversion, alignment-driven generation, full
// text synthesis, and the vocoder boundary.

#ifndef UTTS_PIPELINE_HPP_
#define UTTS_PIPELINE_HPP_

#include <filesystem>
#include <optional>
#include <string>

#include "utts/cdsvae.hpp"
#include "utts/features.hpp"
#include "utts/frontend.hpp"

namespace utts::pipeline {

enum class VocoderKind { internal_spectral_inversion, external_service };

struct VocoderHandle {
  VocoderKind kind = VocoderKind::internal_spectral_inversion;
  // Internal backend:
  int iterations = 60;
  // External backend; exactly one of endpoint/command is set.
  std::string http_endpoint;  // e.g. "http://127.0.0.1:8090"
  std::string pipe_command;   // reads a mel container on stdin, writes WAV
  int timeout_ms = 30000;

  static VocoderHandle internal(int iterations = 60);
  static VocoderHandle external_http(const std::string& endpoint,
                                     int timeout_ms = 30000);
  static VocoderHandle external_pipe(const std::string& command,
                                     int timeout_ms = 30000);
};

// Mel container exchanged with external vocoders: "UMC1" magic, u32 rows,
// u32 cols, f32 frame rate, f32 window seconds, then row-major f32 log-mel.
std::string serialize_mel_request(const features::MelSpectrogram& mel);
features::MelSpectrogram parse_mel_request(const std::string& bytes);

features::Waveform vocode(const features::MelSpectrogram& mel,
                          const VocoderHandle& v);

// Keeps content from `src`, takes the speaker from `tgt` via the posterior
// speaker encoder. Content is a posterior sample drawn with `rng`; the
// speaker embedding uses the posterior mean unless `speaker_sample` is set.
features::MelSpectrogram voice_convert(const features::MelSpectrogram& src_mel,
                                       const features::MelSpectrogram& tgt_mel,
                                       const cdsvae::Model& model, Rng& rng,
                                       bool speaker_sample = false);

// Content sampled from the alignment-conditioned prior, speaker from the
// target utterance.
features::MelSpectrogram generate_from_alignment(
    const alignment::AlignmentSequence& a,
    const features::MelSpectrogram& tgt_mel, const cdsvae::Model& model,
    Rng& rng, bool speaker_sample = false);

struct SynthesisRequest {
  std::string text;
  std::string reference_audio_path;
  std::string duration_speaker = "random";  // speaker-pool id or "random"
  uint64_t seed = 0;
  bool speaker_sample = false;
  bool word_boundary_sil = false;
};

struct Models {
  const cdsvae::Model* acoustic = nullptr;
  const frontend::DurationModel* duration = nullptr;
  const frontend::Fa2UaModel* fa2ua = nullptr;
  const frontend::Lexicon* lexicon = nullptr;
  const frontend::SpeakerPool* speaker_pool = nullptr;
};

struct SynthesisResult {
  features::Waveform waveform;
  frontend::PhonemeSequence phonemes;
  Vec log_durations;
  alignment::PhonemeDurations durations;
  alignment::AlignmentSequence fa;
  alignment::AlignmentSequence ua;
  features::MelSpectrogram mel;
};

SynthesisResult synthesize(const SynthesisRequest& req, const Models& models,
                           const VocoderHandle& vocoder);

// Persists the intermediate artifacts (FA, UA, mel, WAV, metadata) for
// inspection; files are byte-deterministic for a fixed request.
void write_bundle(const std::filesystem::path& dir, const SynthesisResult& res,
                  const SynthesisRequest& req,
                  const std::string& config_hash = "");

// UA/FA token files: "UA <vocab>" or "FA <vocab>" header line, then
// space-separated frame tokens.
void save_alignment(const std::string& path,
                    const alignment::AlignmentSequence& a);
alignment::AlignmentSequence load_alignment(const std::string& path);

}  // namespace utts::pipeline

#endif  // UTTS_PIPELINE_HPP_
