// utts/eval.hpp

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

// Objective evaluation: verification EER over trial lists, a frame-level
// phoneme probe, 2-D embedding projections and CER/WER arithmetic.

#ifndef UTTS_EVAL_HPP_
#define UTTS_EVAL_HPP_

#include <map>
#include <string>
#include <vector>

#include "utts/cdsvae.hpp"
#include "utts/common.hpp"
#include "utts/features.hpp"
#include "utts/rng.hpp"

namespace utts::eval {

struct Trial {
  std::string utt_a;
  std::string utt_b;
  bool is_target = false;
};

struct TrialList {
  std::vector<Trial> trials;
};

struct ScoredTrial {
  double score = 0.0;  // cosine, in [-1, 1]
  bool is_target = false;
};

using ScoredTrials = std::vector<ScoredTrial>;

enum class EmbeddingKind { speaker, content };

using EmbeddingMap = std::map<std::string, Vec>;

// Speaker: the posterior speaker mean. Content: the time-averaged posterior
// content mean. Both deterministic (no sampling).
EmbeddingMap embed_utterances(
    const std::vector<std::pair<std::string, features::MelSpectrogram>>& utts,
    const cdsvae::Model& model, EmbeddingKind which);

ScoredTrials score_trials(const EmbeddingMap& embeds, const TrialList& trials);

// Threshold sweep; linear interpolation where false-accept and false-reject
// rates cross.
double compute_eer(const ScoredTrials& st);

// Balanced target/non-target sampling over speakers.
TrialList generate_trials(
    const std::vector<std::pair<std::string, std::string>>& utt_speaker,
    int max_trials, Rng& rng);

TrialList load_trials(const std::string& path);
void save_trials(const std::string& path, const TrialList& trials);

struct ProbeOptions {
  int num_classes = 72;
  double train_fraction = 0.8;
  int epochs = 120;
  double lr = 0.05;
  uint64_t seed = 17;
};

// Linear softmax classifier over frozen per-frame features; returns top-1
// accuracy on the held-out split.
double phoneme_probe(const Mat& features, const std::vector<int>& labels,
                     const ProbeOptions& opts);

enum class ProjectionMethod { sne, pca };

struct ProjectionOptions {
  ProjectionMethod method = ProjectionMethod::sne;
  double perplexity = 30.0;
  int iterations = 400;
  uint64_t seed = 5;
};

struct ProjectedPoint {
  std::string id;
  std::string label;
  double x = 0.0;
  double y = 0.0;
};

// 2-D projection of labeled embeddings; needs at least 10 points.
std::vector<ProjectedPoint> project_embeddings(
    const EmbeddingMap& embeds, const std::map<std::string, std::string>& labels,
    const ProjectionOptions& opts = {});

// Structured text: "id\tlabel\tx\ty" per line.
void export_projection(const std::string& path,
                       const std::vector<ProjectedPoint>& points);

struct ErrorRates {
  double cer = 0.0;
  double wer = 0.0;
};

// Levenshtein distance over characters/words divided by reference length.
ErrorRates cer_wer(const std::string& ref, const std::string& hyp);

// Edit distance over arbitrary token sequences (exposed for reuse).
int edit_distance(const std::vector<std::string>& a,
                  const std::vector<std::string>& b);

}  // namespace utts::eval

#endif  // UTTS_EVAL_HPP_
