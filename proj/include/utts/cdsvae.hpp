// utts/cdsvae.hpp

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

// Conditional disentangled sequential VAE: a shared mel encoder feeding a
// global speaker posterior and a per-frame content posterior, an
// alignment-conditioned content prior with an optional masked-unit-prediction
// classifier head, and a prenet/postnet decoder.

#ifndef UTTS_CDSVAE_HPP_
#define UTTS_CDSVAE_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "utts/alignment.hpp"
#include "utts/checkpoint.hpp"
#include "utts/features.hpp"
#include "utts/nn.hpp"
#include "utts/rng.hpp"

namespace utts::cdsvae {

// Per-frame diagonal Gaussians (a single row for the speaker latent).
struct GaussianSeq {
  Mat mean;
  Mat std;  // strictly positive

  void validate() const;
};

enum class LatentSource { posterior_speaker, posterior_content, prior_content };

struct LatentSample {
  Mat values;
  LatentSource source = LatentSource::posterior_content;
};

// Strictly increasing masked frame indices.
using MaskSet = std::vector<int>;

struct MaskConfig {
  double start_prob = 0.08;
  int span = 10;
};

struct LossConfig {
  double alpha = 0.01;
  double beta = 10.0;
  double gamma = 1.0;
  // Replaces the alignment-conditioned content prior with a standard normal
  // (the unconditional DSVAE baseline).
  bool unconditional_prior = false;

  void validate() const;
};

struct LossBreakdown {
  double recon = 0.0;
  double kld_s = 0.0;
  double kld_c = 0.0;
  double mup = 0.0;
  double total = 0.0;
};

// Layer stack dimensions. Defaults follow the published architecture table;
// small() is a reduced preset for desk-scale runs and tests.
struct ArchConfig {
  int mel_bins = 80;
  int latent_dim = 64;
  int share_channels = 256;
  int share_layers = 3;
  int share_kernel = 5;
  int spk_hidden = 512;
  int spk_layers = 2;
  int con_hidden = 512;
  int con_layers = 2;
  int con_rnn_hidden = 512;
  int prior_hidden = 512;
  int prior_layers = 2;
  int dec_channels = 512;
  int dec_conv_layers = 3;
  int dec_lstm1_hidden = 512;
  int dec_lstm2_hidden = 1024;
  int dec_lstm2_layers = 2;
  int post_channels = 512;
  int post_layers = 4;
  bool classifier_head = true;

  static ArchConfig small();
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
};

struct PriorOutput {
  GaussianSeq gaussian;
  std::optional<Mat> unit_logits;  // T x classes, when the head is enabled
};

// Tensor-level counterparts used while building training graphs.
struct TGaussian {
  ad::Tensor mean;
  ad::Tensor std;
};

struct TPrior {
  TGaussian gaussian;
  ad::Tensor unit_logits;  // null when the head is disabled
};

class Model {
 public:
  // `alignment_vocab` includes the mask symbol; `unit_classes` is the count
  // of real (predictable) units.
  Model(const ArchConfig& arch, alignment::Kind kind, int alignment_vocab,
        int unit_classes, uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  alignment::Kind alignment_kind() const { return kind_; }
  int alignment_vocab() const { return alignment_vocab_; }
  int unit_classes() const { return unit_classes_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // --- graph-building forward passes ---
  ad::Tensor encode_shared_t(const ad::Tensor& mel) const;
  TGaussian encode_speaker_t(const ad::Tensor& shared) const;
  TGaussian encode_content_t(const ad::Tensor& shared) const;
  TPrior encode_prior_t(const alignment::AlignmentSequence& a,
                        const MaskSet& mask) const;
  ad::Tensor decode_t(const ad::Tensor& zs, const ad::Tensor& zc) const;

  // --- value-level wrappers (inference) ---
  Mat encode_shared(const features::MelSpectrogram& mel) const;
  GaussianSeq encode_speaker(const Mat& shared) const;
  GaussianSeq encode_content(const Mat& shared) const;
  PriorOutput encode_prior(const alignment::AlignmentSequence& a,
                           const MaskSet& mask) const;
  features::MelSpectrogram decode(const LatentSample& zs,
                                  const LatentSample& zc) const;

 private:
  ArchConfig arch_;
  alignment::Kind kind_;
  int alignment_vocab_;
  int unit_classes_;
  nn::ParamStore params_;

  std::vector<nn::Conv1d> share_convs_;
  nn::BiLstm spk_lstm_;
  nn::Dense spk_mean_, spk_std_;
  nn::BiLstm con_lstm_;
  nn::Rnn con_rnn_;
  nn::Dense con_mean_, con_std_;
  nn::BiLstm prior_lstm_;
  nn::Dense prior_mean_, prior_std_, prior_classifier_;
  std::vector<nn::Conv1d> dec_convs_;
  nn::Lstm dec_lstm1_;
  std::vector<nn::Lstm> dec_lstm2_;
  nn::Dense dec_out_;
  std::vector<nn::Conv1d> post_convs_;
  nn::Conv1d post_out_;
};

// sample = mean + std (*) unit normal draw.
LatentSample reparameterize(const GaussianSeq& g, Rng& rng,
                            LatentSource source);
ad::Tensor reparameterize_t(const TGaussian& g, const Mat& noise);

// Closed-form diagonal-Gaussian KL divergence: summed over latent dims,
// averaged over frames.
double kld_diag_gaussian(const GaussianSeq& q, const GaussianSeq& p);
ad::Tensor kld_t(const TGaussian& q, const TGaussian& p);

// HuBERT-style span masking: starts drawn per frame, fixed span length,
// overlapping spans allowed, clipped to [0, T).
MaskSet sample_mask(int num_frames, Rng& rng, const MaskConfig& cfg = {});

// Mean NLL over masked frames; exact zero on an empty mask.
double mup_loss(const Mat& logits, const alignment::AlignmentSequence& targets,
                const MaskSet& mask);

struct LossGraph {
  ad::Tensor total;
  LossBreakdown values;
};

// Full training objective. Noise and mask draws come from `rng` in a fixed
// order (speaker eps, content eps, mask, then prior eps when dual), so a
// reseeded rng makes the loss a deterministic function of the parameters.
LossGraph cdsvae_loss_graph(const Model& model,
                            const features::MelSpectrogram& mel,
                            const alignment::AlignmentSequence& a,
                            const LossConfig& cfg, const MaskConfig& mask_cfg,
                            Rng& rng, bool dual);

LossBreakdown cdsvae_loss(const Model& model,
                          const features::MelSpectrogram& mel,
                          const alignment::AlignmentSequence& a,
                          const LossConfig& cfg, const MaskConfig& mask_cfg,
                          Rng& rng);

// Second-round objective: reconstruction averaged over content latents from
// the posterior and from the alignment-conditioned prior.
LossBreakdown dual_recon_loss(const Model& model,
                              const features::MelSpectrogram& mel,
                              const alignment::AlignmentSequence& a,
                              const LossConfig& cfg,
                              const MaskConfig& mask_cfg, Rng& rng);

struct TrainItem {
  std::string utterance_id;
  Mat mel_frames;  // T x 80
  alignment::AlignmentSequence alignment;
};

struct TrainSchedule {
  int epochs = 30;
  int batch_size = 16;
  double lr = 5e-4;
  double lr_decay = 0.95;
  int decay_every_epochs = 5;
  int crop_frames = 100;
  int workers = 2;
  uint64_t seed = 1234;
  bool dual = false;
  bool save_every_epoch = true;
};

struct TrainState {
  int64_t step = 0;
  int epoch = 0;  // next epoch to run
  std::string model_rng;
  std::string data_rng;
};

struct EpochStats {
  int epoch = 0;
  LossBreakdown mean;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::string final_checkpoint;
};

// Learning-rate schedule: lr * decay^floor(epoch / every), epochs 0-based.
double scheduled_lr(double base_lr, double decay, int every, int epoch);

// Adaptive-moment training over per-utterance graphs; batches are gradient
// accumulations so variable-length utterances need no padding. Deterministic
// for a fixed schedule (worker partitioning is by in-batch position and
// reduction order is fixed).
TrainResult train(Model& model, const std::vector<TrainItem>& items,
                  const LossConfig& loss_cfg, const MaskConfig& mask_cfg,
                  const TrainSchedule& schedule,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::string>& resume_checkpoint = {},
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// Checkpoint packing. `extra` merges into the stored metadata.
Checkpoint pack_checkpoint(const Model& model, const nn::AdamOptimizer* opt,
                           const TrainState& state,
                           const nlohmann::json& extra = {});
Model unpack_model(const Checkpoint& cp, uint64_t seed = 0);
void restore_optimizer(const Checkpoint& cp, const nn::ParamStore& params,
                       nn::AdamOptimizer& opt);
TrainState checkpoint_state(const Checkpoint& cp);

}  // namespace utts::cdsvae

#endif  // UTTS_CDSVAE_HPP_
