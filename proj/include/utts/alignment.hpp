// utts/alignment.hpp

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

// The two alignment kinds: UA from k-means++ pseudo-labels over feature
// matrices and FA from phoneme+duration expansion.

#ifndef UTTS_ALIGNMENT_HPP_
#define UTTS_ALIGNMENT_HPP_

#include <string>
#include <vector>

#include "utts/common.hpp"
#include "utts/features.hpp"
#include "utts/rng.hpp"

namespace utts::alignment {

enum class Kind { FA, UA };

// 72 monophones; ids 72/73 are the mask/pad symbols.
constexpr int kNumMonophones = 72;
constexpr int kFaMaskSymbol = 72;
constexpr int kFaPadSymbol = 73;
constexpr int kFaVocabSize = 74;

struct AlignmentSequence {
  std::vector<int> tokens;
  Kind kind = Kind::UA;
  int vocab_size = 0;  // FA: 74; UA: K clusters + 1 mask symbol

  int length() const { return static_cast<int>(tokens.size()); }
  // Count of real symbols (mask excluded): FA 72, UA K.
  int real_vocab() const { return kind == Kind::FA ? kNumMonophones : vocab_size - 1; }
  int mask_symbol() const { return kind == Kind::FA ? kFaMaskSymbol : vocab_size - 1; }
  void validate() const;
};

AlignmentSequence make_fa(std::vector<int> tokens);
AlignmentSequence make_ua(std::vector<int> tokens, int num_clusters);

struct Codebook {
  Mat centroids;  // K x D

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

struct PhonemeDurations {
  std::vector<int> phonemes;
  std::vector<int> durations;  // frames, >= 1

  void validate() const;
  int total_frames() const;
};

struct KmeansOptions {
  int max_iterations = 300;
  double rel_tolerance = 1e-4;
};

// k-means++ seeding followed by Lloyd iterations until the relative inertia
// change drops below tolerance. Ties in assignment go to the lowest index.
Codebook fit_codebook(const std::vector<features::FeatureMatrix>& features,
                      int k, Rng& rng, const KmeansOptions& opts = {});

// Nearest centroid per frame (squared Euclidean, ties to lowest index).
AlignmentSequence assign_units(const features::FeatureMatrix& features,
                               const Codebook& cb);

// Token i repeated durations[i] times.
AlignmentSequence expand_phonemes(const PhonemeDurations& pd);

// Nearest-source-frame lookup per destination frame; output length is
// round(len * dst_rate / src_rate).
AlignmentSequence resample_alignment(const AlignmentSequence& a,
                                     double src_rate, double dst_rate);

// Run-length encoding; inverse of expand_phonemes.
PhonemeDurations durations_from_alignment(const AlignmentSequence& a);

// FA file: one "phoneme_id duration_frames" pair per line.
PhonemeDurations load_fa_file(const std::string& path);
void save_fa_file(const std::string& path, const PhonemeDurations& pd);

// Codebook file: "UCB1", u32 K, u32 D, row-major float32 centroids.
Codebook load_codebook(const std::string& path);
void save_codebook(const std::string& path, const Codebook& cb);

}  // namespace utts::alignment

#endif  // UTTS_ALIGNMENT_HPP_
