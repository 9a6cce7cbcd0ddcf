// utts/frontend.hpp

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

// Text-side models: lexicon lookup, the speaker-aware duration predictor and
// the FA-to-UA alignment mapper.

#ifndef UTTS_FRONTEND_HPP_
#define UTTS_FRONTEND_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "utts/alignment.hpp"
#include "utts/cdsvae.hpp"
#include "utts/checkpoint.hpp"
#include "utts/nn.hpp"
#include "utts/rng.hpp"

namespace utts::frontend {

struct PhonemeSequence {
  std::vector<int> ids;  // in [0, 72)
  std::string text;

  int size() const { return static_cast<int>(ids.size()); }
};

class Lexicon {
 public:
  // `symbols` fixes the 72-id mapping; `entries` maps uppercase words to
  // phoneme symbol lists.
  Lexicon(std::vector<std::string> symbols,
          std::map<std::string, std::vector<std::string>> entries);

  static Lexicon load(const std::string& lexicon_path,
                      const std::string& symbols_path);
  void save(const std::string& lexicon_path,
            const std::string& symbols_path) const;

  int symbol_id(const std::string& symbol) const;
  const std::string& symbol(int id) const;
  int num_symbols() const { return static_cast<int>(symbols_.size()); }
  bool has_word(const std::string& word) const;
  const std::vector<std::string>& words() const { return word_list_; }
  const std::vector<int>& lookup(const std::string& word) const;

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> symbol_to_id_;
  std::map<std::string, std::vector<int>> word_to_ids_;
  std::vector<std::string> word_list_;
};

// The built-in 72-monophone table: SIL/SP/SPN, then stressed vowels, then
// consonants.
std::vector<std::string> default_phoneme_symbols();

// Splits on whitespace, case-normalizes, concatenates lexicon entries.
// Unknown words raise a validation error naming the word. When
// `word_boundary_sil` is set, SP is inserted between words.
PhonemeSequence text_to_phonemes(const std::string& text, const Lexicon& lex,
                                 bool word_boundary_sil = false);

struct DurationModelConfig {
  int phoneme_vocab = alignment::kNumMonophones;
  int model_dim = 256;
  int key_dim = 128;
  int value_dim = 128;
  int heads = 2;
  int attention_layers = 4;
  int conv_channels = 256;
  int conv_kernel = 3;
  int conv_layers = 2;
  int speaker_dim = 64;

  static DurationModelConfig small();
  nlohmann::json to_json() const;
  static DurationModelConfig from_json(const nlohmann::json& j);
};

class DurationModel {
 public:
  DurationModel(const DurationModelConfig& cfg, uint64_t seed);

  const DurationModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // N log-durations for N phonemes; the speaker embedding is projected to
  // the model dimension and summed onto the phoneme representation before
  // the conv stack.
  ad::Tensor forward_t(const std::vector<int>& phoneme_ids,
                       const Mat& speaker) const;

 private:
  DurationModelConfig cfg_;
  nn::ParamStore params_;
  nn::Embedding embedding_;
  std::vector<nn::MhaBlock> attention_;
  nn::Dense speaker_proj_;
  std::vector<nn::Conv1d> convs_;
  nn::Dense out_;
};

// N x 1 of log-frame durations.
Vec predict_durations(const PhonemeSequence& ph, const Mat& speaker,
                      const DurationModel& m);

// frames = max(1, ceil(exp(logdur))).
std::vector<int> durations_to_frames(const Vec& logdur);

double duration_loss(const Vec& pred_logdur, const Vec& target_logdur);
ad::Tensor duration_loss_t(const ad::Tensor& pred, const Mat& target);

struct Fa2UaModelConfig {
  int fa_vocab = alignment::kFaVocabSize;  // includes mask + pad
  int ua_classes = 50;                     // real units (mask excluded)
  int embed_dim = 256;
  int hidden = 256;
  int layers = 3;

  static Fa2UaModelConfig small();
  nlohmann::json to_json() const;
  static Fa2UaModelConfig from_json(const nlohmann::json& j);
};

class Fa2UaModel {
 public:
  Fa2UaModel(const Fa2UaModelConfig& cfg, uint64_t seed);

  const Fa2UaModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // T x ua_classes logits; masked input frames are replaced by the FA mask
  // symbol before the lookup.
  ad::Tensor forward_t(const std::vector<int>& fa_tokens,
                       const cdsvae::MaskSet& mask) const;
  Mat logits(const alignment::AlignmentSequence& fa,
             const cdsvae::MaskSet& mask = {}) const;

 private:
  Fa2UaModelConfig cfg_;
  nn::ParamStore params_;
  nn::Embedding embedding_;
  nn::BiLstm lstm_;
  nn::Dense classifier_;
};

// Argmax over the UA vocabulary per frame.
alignment::AlignmentSequence fa2ua_predict(
    const alignment::AlignmentSequence& fa, const Fa2UaModel& m);

// Mean NLL over masked frames only; exact zero on an empty mask.
double fa2ua_loss(const Mat& logits, const alignment::AlignmentSequence& ua,
                  const cdsvae::MaskSet& mask);

// ---- training ----

struct DurationTrainItem {
  std::string utterance_id;
  std::vector<int> phoneme_ids;
  Vec target_logdur;
  Mat speaker;  // 1 x speaker_dim
};

struct Fa2UaTrainItem {
  std::string utterance_id;
  std::vector<int> fa_tokens;  // frame level, mel rate
  std::vector<int> ua_tokens;  // frame level, mel rate
};

struct FrontendSchedule {
  int epochs = 20;
  int batch_size = 16;
  double lr = 5e-4;
  double lr_decay = 0.95;
  int decay_every_epochs = 5;
  int workers = 2;
  uint64_t seed = 99;
  double validation_fraction = 0.1;
};

struct FrontendEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;  // fa2ua only
};

struct FrontendTrainResult {
  std::vector<FrontendEpochStats> epochs;
  std::string final_checkpoint;
};

FrontendTrainResult train_duration(DurationModel& model,
                                   const std::vector<DurationTrainItem>& items,
                                   const FrontendSchedule& schedule,
                                   const std::filesystem::path& out_dir);

FrontendTrainResult train_fa2ua(Fa2UaModel& model,
                                const std::vector<Fa2UaTrainItem>& items,
                                const cdsvae::MaskConfig& mask_cfg,
                                const FrontendSchedule& schedule,
                                const std::filesystem::path& out_dir);

// Per-speaker averages of posterior speaker-embedding means.
struct SpeakerPool {
  std::map<std::string, Vec> embeddings;

  const Vec& get(const std::string& speaker_id) const;
  const Vec& random(Rng& rng) const;
  void save(const std::string& path) const;
  static SpeakerPool load(const std::string& path);
};

// Checkpoint helpers.
Checkpoint pack_duration(const DurationModel& m);
DurationModel unpack_duration(const Checkpoint& cp);
Checkpoint pack_fa2ua(const Fa2UaModel& m);
Fa2UaModel unpack_fa2ua(const Checkpoint& cp);

}  // namespace utts::frontend

#endif  // UTTS_FRONTEND_HPP_
