// utts/toycorpus.hpp

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

// A fully synthetic two-factor corpus: the speaker factor (fundamental +
// spectral tilt) and the content factor (per-phoneme formant pair) are
// constructed independent, with exact frame-level alignments by
// construction. Keeps the whole stack runnable with no external data.

#ifndef UTTS_TOYCORPUS_HPP_
#define UTTS_TOYCORPUS_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "utts/features.hpp"
#include "utts/frontend.hpp"

namespace utts::toycorpus {

struct ToyCorpusOptions {
  int speakers = 4;
  int train_utts_per_speaker = 12;
  int test_utts_per_speaker = 3;
  int min_words = 3;
  int max_words = 6;
  uint64_t seed = 2024;
};

struct ToyCorpus {
  std::filesystem::path root;
  std::string train_manifest_path;
  std::string test_manifest_path;
  std::string lexicon_path;
  std::string symbols_path;
  std::vector<std::string> test_sentences;
};

// Writes WAVs, FA files, manifests, lexicon and symbol table under `dir`.
ToyCorpus make_toy_corpus(const std::filesystem::path& dir,
                          const ToyCorpusOptions& opts = {});

// The toy word list (each maps to a single monophone).
const std::vector<std::string>& toy_words();

}  // namespace utts::toycorpus

#endif  // UTTS_TOYCORPUS_HPP_
