// utts/features.hpp

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

// Audio ingestion, mel extraction, dataset manifests and feature-file I/O.

#ifndef UTTS_FEATURES_HPP_
#define UTTS_FEATURES_HPP_

#include <optional>
#include <string>
#include <vector>

#include "utts/common.hpp"
#include "utts/rng.hpp"

namespace utts::features {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// T x 80 natural-log mel power matrix. Silence maps to kLogFloor.
struct MelSpectrogram {
  Mat frames;
  double hop_seconds = 0.016;
  double window_seconds = 0.064;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  double frame_rate() const { return 1.0 / hop_seconds; }
};

struct FeatureMatrix {
  Mat frames;  // T' x D
  double frame_rate = 0.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string audio_path;
  std::optional<std::string> fa_path;
  std::optional<std::string> ssl_feature_path;
  std::optional<std::string> transcript;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  const ManifestEntry& find(const std::string& utterance_id) const;
};

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 1024;       // 64 ms window
  int hop = 256;          // 16 ms hop
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
};

constexpr double kMelPowerFloor = 1e-5;
inline double log_floor() { return std::log(kMelPowerFloor); }

// WAV reader; PCM16 and float32, any channel count (averaged to mono),
// any source rate (resampled to 16 kHz).
Waveform load_audio(const std::string& path);

void save_wav_pcm16(const std::string& path, const Waveform& w);

MelSpectrogram compute_mel(const Waveform& w, const MelConfig& cfg = {});

// 13-dim cepstral proxy at the mel frame rate, standing in for external SSL
// features when none are supplied. Coefficients are DCT components 1..13 of
// the log-mel frame (the energy component is dropped).
FeatureMatrix cepstral_proxy(const MelSpectrogram& mel);

FeatureMatrix load_feature_matrix(const std::string& path);
void save_feature_matrix(const std::string& path, const FeatureMatrix& fm);

// Manifest file: one JSON object per line, fields of ManifestEntry.
// Referenced paths are checked for existence relative to the manifest's
// directory (absolute paths pass through).
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

struct CropResult {
  MelSpectrogram mel;
  int start = 0;         // source frame of the first output frame
  int valid_frames = 0;  // frames that carry real data (rest are padding)
};

// `length` contiguous frames at a random start; shorter inputs are
// right-padded with the log floor.
CropResult crop_segment(const MelSpectrogram& mel, int length, Rng& rng);

void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

}  // namespace utts::features

#endif  // UTTS_FEATURES_HPP_
