// utts/cdsvae.cpp

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

#include "utts/cdsvae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

namespace utts::cdsvae {

using namespace ad;
using nlohmann::json;

void GaussianSeq::validate() const {
  require(mean.rows() == std.rows() && mean.cols() == std.cols(),
          "gaussian: mean/std shape mismatch");
  require((std.array() > 0.0).all(), "gaussian: std must be positive");
  require(all_finite(mean) && all_finite(std), "gaussian: non-finite values");
}

void LossConfig::validate() const {
  require(alpha >= 0 && beta >= 0 && gamma >= 0,
          "loss config: weights must be non-negative");
}

ArchConfig ArchConfig::small() {
  ArchConfig c;
  c.share_channels = 48;
  c.share_layers = 2;
  c.spk_hidden = 32;
  c.spk_layers = 1;
  c.con_hidden = 32;
  c.con_layers = 1;
  c.con_rnn_hidden = 48;
  c.prior_hidden = 32;
  c.prior_layers = 1;
  c.dec_channels = 64;
  c.dec_conv_layers = 2;
  c.dec_lstm1_hidden = 48;
  c.dec_lstm2_hidden = 64;
  c.dec_lstm2_layers = 1;
  c.post_channels = 48;
  c.post_layers = 2;
  return c;
}

json ArchConfig::to_json() const {
  return json{{"mel_bins", mel_bins},
              {"latent_dim", latent_dim},
              {"share_channels", share_channels},
              {"share_layers", share_layers},
              {"share_kernel", share_kernel},
              {"spk_hidden", spk_hidden},
              {"spk_layers", spk_layers},
              {"con_hidden", con_hidden},
              {"con_layers", con_layers},
              {"con_rnn_hidden", con_rnn_hidden},
              {"prior_hidden", prior_hidden},
              {"prior_layers", prior_layers},
              {"dec_channels", dec_channels},
              {"dec_conv_layers", dec_conv_layers},
              {"dec_lstm1_hidden", dec_lstm1_hidden},
              {"dec_lstm2_hidden", dec_lstm2_hidden},
              {"dec_lstm2_layers", dec_lstm2_layers},
              {"post_channels", post_channels},
              {"post_layers", post_layers},
              {"classifier_head", classifier_head}};
}

ArchConfig ArchConfig::from_json(const json& j) {
  ArchConfig c;
  c.mel_bins = j.at("mel_bins").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.share_channels = j.at("share_channels").get<int>();
  c.share_layers = j.at("share_layers").get<int>();
  c.share_kernel = j.at("share_kernel").get<int>();
  c.spk_hidden = j.at("spk_hidden").get<int>();
  c.spk_layers = j.at("spk_layers").get<int>();
  c.con_hidden = j.at("con_hidden").get<int>();
  c.con_layers = j.at("con_layers").get<int>();
  c.con_rnn_hidden = j.at("con_rnn_hidden").get<int>();
  c.dec_channels = j.at("dec_channels").get<int>();
  c.dec_conv_layers = j.at("dec_conv_layers").get<int>();
  c.dec_lstm1_hidden = j.at("dec_lstm1_hidden").get<int>();
  c.dec_lstm2_hidden = j.at("dec_lstm2_hidden").get<int>();
  c.dec_lstm2_layers = j.at("dec_lstm2_layers").get<int>();
  c.post_channels = j.at("post_channels").get<int>();
  c.post_layers = j.at("post_layers").get<int>();
  c.prior_hidden = j.at("prior_hidden").get<int>();
  c.prior_layers = j.at("prior_layers").get<int>();
  c.classifier_head = j.at("classifier_head").get<bool>();
  return c;
}

Model::Model(const ArchConfig& arch, alignment::Kind kind, int alignment_vocab,
             int unit_classes, uint64_t seed)
    : arch_(arch),
      kind_(kind),
      alignment_vocab_(alignment_vocab),
      unit_classes_(unit_classes) {
  require(alignment_vocab_ >= 2, "model: alignment vocabulary too small");
  require(unit_classes_ >= 1, "model: unit class count too small");
  Rng rng(seed);
  const int pad = (arch.share_kernel - 1) / 2;

  int ch = arch.mel_bins;
  for (int l = 0; l < arch.share_layers; ++l) {
    share_convs_.emplace_back(params_, str_cat("share.conv", l), ch,
                              arch.share_channels, arch.share_kernel, pad, rng);
    ch = arch.share_channels;
  }
  spk_lstm_ = nn::BiLstm(params_, "spk.lstm", ch, arch.spk_hidden,
                         arch.spk_layers, rng);
  spk_mean_ = nn::Dense(params_, "spk.mean", 2 * arch.spk_hidden,
                        arch.latent_dim, rng);
  spk_std_ = nn::Dense(params_, "spk.std", 2 * arch.spk_hidden,
                       arch.latent_dim, rng);
  con_lstm_ = nn::BiLstm(params_, "con.lstm", ch, arch.con_hidden,
                         arch.con_layers, rng);
  con_rnn_ = nn::Rnn(params_, "con.rnn", 2 * arch.con_hidden,
                     arch.con_rnn_hidden, rng);
  con_mean_ = nn::Dense(params_, "con.mean", arch.con_rnn_hidden,
                        arch.latent_dim, rng);
  con_std_ = nn::Dense(params_, "con.std", arch.con_rnn_hidden,
                       arch.latent_dim, rng);
  prior_lstm_ = nn::BiLstm(params_, "prior.lstm", alignment_vocab_,
                           arch.prior_hidden, arch.prior_layers, rng);
  prior_mean_ = nn::Dense(params_, "prior.mean", 2 * arch.prior_hidden,
                          arch.latent_dim, rng);
  prior_std_ = nn::Dense(params_, "prior.std", 2 * arch.prior_hidden,
                         arch.latent_dim, rng);
  if (arch.classifier_head)
    prior_classifier_ = nn::Dense(params_, "prior.classifier",
                                  2 * arch.prior_hidden, unit_classes_, rng);

  ch = 2 * arch.latent_dim;
  for (int l = 0; l < arch.dec_conv_layers; ++l) {
    dec_convs_.emplace_back(params_, str_cat("dec.conv", l), ch,
                            arch.dec_channels, arch.share_kernel, pad, rng);
    ch = arch.dec_channels;
  }
  dec_lstm1_ = nn::Lstm(params_, "dec.lstm1", ch, arch.dec_lstm1_hidden, rng);
  int dch = arch.dec_lstm1_hidden;
  for (int l = 0; l < arch.dec_lstm2_layers; ++l) {
    dec_lstm2_.emplace_back(params_, str_cat("dec.lstm2.", l), dch,
                            arch.dec_lstm2_hidden, rng);
    dch = arch.dec_lstm2_hidden;
  }
  dec_out_ = nn::Dense(params_, "dec.out", dch, arch.mel_bins, rng);

  ch = arch.mel_bins;
  for (int l = 0; l < arch.post_layers; ++l) {
    post_convs_.emplace_back(params_, str_cat("post.conv", l), ch,
                             arch.post_channels, arch.share_kernel, pad, rng);
    ch = arch.post_channels;
  }
  post_out_ = nn::Conv1d(params_, "post.out", ch, arch.mel_bins,
                         arch.share_kernel, pad, rng);
}

Tensor Model::encode_shared_t(const Tensor& mel) const {
  Tensor h = mel;
  for (const auto& conv : share_convs_)
    h = relu(nn::instance_norm(conv.forward(h)));
  return h;
}

TGaussian Model::encode_speaker_t(const Tensor& shared) const {
  Tensor h = spk_lstm_.forward(shared);
  Tensor pooled = mean_over_rows(h);
  return {spk_mean_.forward(pooled), softplus(spk_std_.forward(pooled))};
}

TGaussian Model::encode_content_t(const Tensor& shared) const {
  Tensor h = con_rnn_.forward(con_lstm_.forward(shared));
  return {con_mean_.forward(h), softplus(con_std_.forward(h))};
}

TPrior Model::encode_prior_t(const alignment::AlignmentSequence& a,
                             const MaskSet& mask) const {
  a.validate();
  require(a.length() >= 1, "encode_prior: empty alignment");
  std::vector<int> tokens = a.tokens;
  const int mask_symbol = a.mask_symbol();
  for (int idx : mask) {
    require(idx >= 0 && idx < a.length(), "encode_prior: mask index range");
    tokens[static_cast<size_t>(idx)] = mask_symbol;
  }
  Tensor x = constant(nn::one_hot(tokens, alignment_vocab_));
  Tensor h = prior_lstm_.forward(x);
  TPrior out;
  out.gaussian = {prior_mean_.forward(h), softplus(prior_std_.forward(h))};
  if (arch_.classifier_head) out.unit_logits = prior_classifier_.forward(h);
  return out;
}

Tensor Model::decode_t(const Tensor& zs, const Tensor& zc) const {
  require(zs->rows() == 1, "decode: speaker latent must be a single row");
  require(zs->cols() == arch_.latent_dim && zc->cols() == arch_.latent_dim,
          "decode: latent dimension mismatch");
  Tensor h = concat_cols(
      {repeat_row(zs, static_cast<int>(zc->rows())), zc});
  for (const auto& conv : dec_convs_)
    h = relu(conv.forward(nn::instance_norm(h)));
  h = dec_lstm1_.forward(h);
  for (const auto& l : dec_lstm2_) h = l.forward(h);
  Tensor pre = dec_out_.forward(h);
  Tensor p = pre;
  for (const auto& conv : post_convs_)
    p = nn::instance_norm(tanh_op(conv.forward(p)));
  return add(pre, post_out_.forward(p));
}

Mat Model::encode_shared(const features::MelSpectrogram& mel) const {
  return encode_shared_t(constant(mel.frames))->val;
}

GaussianSeq Model::encode_speaker(const Mat& shared) const {
  require(shared.rows() >= 1, "encode_speaker: empty input");
  TGaussian g = encode_speaker_t(constant(shared));
  return {g.mean->val, g.std->val};
}

GaussianSeq Model::encode_content(const Mat& shared) const {
  require(shared.rows() >= 1, "encode_content: empty input");
  TGaussian g = encode_content_t(constant(shared));
  return {g.mean->val, g.std->val};
}

PriorOutput Model::encode_prior(const alignment::AlignmentSequence& a,
                                const MaskSet& mask) const {
  TPrior p = encode_prior_t(a, mask);
  PriorOutput out;
  out.gaussian = {p.gaussian.mean->val, p.gaussian.std->val};
  if (p.unit_logits) out.unit_logits = p.unit_logits->val;
  return out;
}

features::MelSpectrogram Model::decode(const LatentSample& zs,
                                       const LatentSample& zc) const {
  features::MelSpectrogram mel;
  mel.frames = decode_t(constant(zs.values), constant(zc.values))->val;
  return mel;
}

LatentSample reparameterize(const GaussianSeq& g, Rng& rng,
                            LatentSource source) {
  g.validate();
  LatentSample s;
  s.source = source;
  s.values =
      g.mean + g.std.cwiseProduct(rng.normal_mat(
                   static_cast<int>(g.mean.rows()),
                   static_cast<int>(g.mean.cols())));
  return s;
}

Tensor reparameterize_t(const TGaussian& g, const Mat& noise) {
  return add(g.mean, mul(g.std, constant(noise)));
}

Tensor kld_t(const TGaussian& q, const TGaussian& p) {
  if (q.mean->rows() != p.mean->rows() || q.mean->cols() != p.mean->cols())
    throw ValidationError("kld: shape mismatch");
  // log(p_std) - log(q_std) + (q_std^2 + (q_mean - p_mean)^2) / (2 p_std^2) - 1/2
  Tensor var_p = square(p.std);
  Tensor num = add(square(q.std), square(sub(q.mean, p.mean)));
  Tensor per = add_scalar(
      add(sub(log_op(p.std), log_op(q.std)), scale(div(num, var_p), 0.5)),
      -0.5);
  // Sum over latent dims, mean over frames.
  return sum_all(mean_over_rows(per));
}

double kld_diag_gaussian(const GaussianSeq& q, const GaussianSeq& p) {
  q.validate();
  p.validate();
  require(q.mean.rows() == p.mean.rows() && q.mean.cols() == p.mean.cols(),
          "kld: shape mismatch");
  TGaussian qt{constant(q.mean), constant(q.std)};
  TGaussian pt{constant(p.mean), constant(p.std)};
  return kld_t(qt, pt)->scalar();
}

MaskSet sample_mask(int num_frames, Rng& rng, const MaskConfig& cfg) {
  require(num_frames >= 1, "sample_mask: need at least one frame");
  std::vector<bool> masked(num_frames, false);
  for (int t = 0; t < num_frames; ++t) {
    if (rng.bernoulli(cfg.start_prob)) {
      const int end = std::min(num_frames, t + cfg.span);
      for (int i = t; i < end; ++i) masked[i] = true;
    }
  }
  MaskSet out;
  for (int t = 0; t < num_frames; ++t)
    if (masked[t]) out.push_back(t);
  return out;
}

double mup_loss(const Mat& logits, const alignment::AlignmentSequence& targets,
                const MaskSet& mask) {
  require(static_cast<int>(logits.rows()) == targets.length(),
          "mup_loss: logits/targets length mismatch");
  return masked_nll(constant(logits), targets.tokens, mask)->scalar();
}

namespace {

TGaussian standard_normal_like(int rows, int cols) {
  return {constant(Mat::Zero(rows, cols)), constant(Mat::Ones(rows, cols))};
}

// 0.5 * sum over mel dims of squared error, averaged over frames.
Tensor recon_term(const Tensor& decoded, const Tensor& target) {
  return scale(sum_all(mean_over_rows(square(sub(decoded, target)))), 0.5);
}

LossGraph build_loss(const Model& model, const features::MelSpectrogram& mel,
                     const alignment::AlignmentSequence& a,
                     const LossConfig& cfg, const MaskConfig& mask_cfg,
                     Rng& rng, bool dual) {
  cfg.validate();
  const int t_len = mel.num_frames();
  require(t_len >= 1, "cdsvae_loss: empty mel");
  require(a.length() == t_len,
          str_cat("cdsvae_loss: alignment length ", a.length(),
                  " != mel frames ", t_len));
  const int zd = model.arch().latent_dim;

  // Fixed draw order; see header.
  const Mat eps_s = rng.normal_mat(1, zd);
  const Mat eps_c = rng.normal_mat(t_len, zd);
  const bool want_mup = cfg.gamma > 0.0 && model.arch().classifier_head &&
                        !cfg.unconditional_prior;
  const MaskSet mask = want_mup ? sample_mask(t_len, rng, mask_cfg) : MaskSet{};
  const Mat eps_cp = dual ? rng.normal_mat(t_len, zd) : Mat();

  Tensor mel_t = constant(mel.frames);
  Tensor shared = model.encode_shared_t(mel_t);
  TGaussian q_s = model.encode_speaker_t(shared);
  TGaussian q_c = model.encode_content_t(shared);

  Tensor z_s = reparameterize_t(q_s, eps_s);
  Tensor z_c = reparameterize_t(q_c, eps_c);
  Tensor recon = recon_term(model.decode_t(z_s, z_c), mel_t);

  TGaussian p_c;
  if (cfg.unconditional_prior) {
    p_c = standard_normal_like(t_len, zd);
  } else {
    // Clean pass for the KL term; the masked pass below feeds only the
    // unit-prediction head.
    p_c = model.encode_prior_t(a, {}).gaussian;
  }

  if (dual) {
    Tensor z_cp = reparameterize_t(p_c, eps_cp);
    Tensor recon_p = recon_term(model.decode_t(z_s, z_cp), mel_t);
    recon = scale(add(recon, recon_p), 0.5);
  }

  Tensor kld_s = kld_t(q_s, standard_normal_like(1, zd));
  Tensor kld_c = kld_t(q_c, p_c);

  Tensor mup;
  if (want_mup) {
    TPrior masked = model.encode_prior_t(a, mask);
    mup = masked_nll(masked.unit_logits, a.tokens, mask);
  } else {
    mup = constant(Mat::Zero(1, 1));
  }

  Tensor total = add(
      add(add(recon, scale(kld_s, cfg.alpha)), scale(kld_c, cfg.beta)),
      scale(mup, cfg.gamma));

  LossGraph g;
  g.total = total;
  g.values.recon = recon->scalar();
  g.values.kld_s = kld_s->scalar();
  g.values.kld_c = kld_c->scalar();
  g.values.mup = mup->scalar();
  g.values.total = total->scalar();
  return g;
}

}  // namespace

LossGraph cdsvae_loss_graph(const Model& model,
                            const features::MelSpectrogram& mel,
                            const alignment::AlignmentSequence& a,
                            const LossConfig& cfg, const MaskConfig& mask_cfg,
                            Rng& rng, bool dual) {
  return build_loss(model, mel, a, cfg, mask_cfg, rng, dual);
}

LossBreakdown cdsvae_loss(const Model& model,
                          const features::MelSpectrogram& mel,
                          const alignment::AlignmentSequence& a,
                          const LossConfig& cfg, const MaskConfig& mask_cfg,
                          Rng& rng) {
  return build_loss(model, mel, a, cfg, mask_cfg, rng, false).values;
}

LossBreakdown dual_recon_loss(const Model& model,
                              const features::MelSpectrogram& mel,
                              const alignment::AlignmentSequence& a,
                              const LossConfig& cfg,
                              const MaskConfig& mask_cfg, Rng& rng) {
  return build_loss(model, mel, a, cfg, mask_cfg, rng, true).values;
}

double scheduled_lr(double base_lr, double decay, int every, int epoch) {
  return base_lr * std::pow(decay, static_cast<double>(epoch / every));
}

namespace {

struct SampleTask {
  const TrainItem* item;
  int crop_start;
  int crop_len;
  uint64_t loss_seed;
};

}  // namespace

Checkpoint pack_checkpoint(const Model& model, const nn::AdamOptimizer* opt,
                           const TrainState& state, const json& extra) {
  Checkpoint cp;
  cp.meta["kind"] = "cdsvae";
  cp.meta["arch"] = model.arch().to_json();
  cp.meta["alignment_kind"] =
      model.alignment_kind() == alignment::Kind::FA ? "FA" : "UA";
  cp.meta["alignment_vocab"] = model.alignment_vocab();
  cp.meta["unit_classes"] = model.unit_classes();
  cp.meta["step"] = state.step;
  cp.meta["epoch"] = state.epoch;
  cp.meta["model_rng"] = state.model_rng;
  cp.meta["data_rng"] = state.data_rng;
  if (!extra.is_null())
    for (auto it = extra.begin(); it != extra.end(); ++it)
      cp.meta[it.key()] = it.value();
  for (const auto& [name, t] : model.params().items())
    cp.tensors.emplace_back(name, t->val);
  cp.meta["has_optimizer"] = opt != nullptr;
  if (opt) {
    cp.meta["adam_t"] = opt->t();
    const auto& items = model.params().items();
    auto& m = const_cast<nn::AdamOptimizer*>(opt)->moment1();
    auto& v = const_cast<nn::AdamOptimizer*>(opt)->moment2();
    for (size_t i = 0; i < items.size(); ++i)
      cp.tensors.emplace_back("adam.m." + items[i].first, m[i]);
    for (size_t i = 0; i < items.size(); ++i)
      cp.tensors.emplace_back("adam.v." + items[i].first, v[i]);
  }
  return cp;
}

Model unpack_model(const Checkpoint& cp, uint64_t seed) {
  require(cp.meta.at("kind") == "cdsvae",
          "checkpoint: not a cdsvae checkpoint");
  ArchConfig arch = ArchConfig::from_json(cp.meta.at("arch"));
  alignment::Kind kind = cp.meta.at("alignment_kind") == "FA"
                             ? alignment::Kind::FA
                             : alignment::Kind::UA;
  Model model(arch, kind, cp.meta.at("alignment_vocab").get<int>(),
              cp.meta.at("unit_classes").get<int>(), seed);
  for (const auto& [name, t] : model.params().items()) {
    const Mat& stored = cp.tensor(name);
    require(stored.rows() == t->rows() && stored.cols() == t->cols(),
            "checkpoint: shape mismatch for " + name);
    t->val = stored;
  }
  return model;
}

void restore_optimizer(const Checkpoint& cp, const nn::ParamStore& params,
                       nn::AdamOptimizer& opt) {
  require(cp.meta.value("has_optimizer", false),
          "checkpoint: no optimizer state");
  opt.set_t(cp.meta.at("adam_t").get<int64_t>());
  const auto& items = params.items();
  for (size_t i = 0; i < items.size(); ++i) {
    opt.moment1()[i] = cp.tensor("adam.m." + items[i].first);
    opt.moment2()[i] = cp.tensor("adam.v." + items[i].first);
  }
}

TrainState checkpoint_state(const Checkpoint& cp) {
  TrainState s;
  s.step = cp.meta.at("step").get<int64_t>();
  s.epoch = cp.meta.at("epoch").get<int>();
  s.model_rng = cp.meta.at("model_rng").get<std::string>();
  s.data_rng = cp.meta.at("data_rng").get<std::string>();
  return s;
}

TrainResult train(Model& model, const std::vector<TrainItem>& items,
                  const LossConfig& loss_cfg, const MaskConfig& mask_cfg,
                  const TrainSchedule& schedule,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::string>& resume_checkpoint,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  require(!items.empty(), "train: empty dataset");
  require(schedule.batch_size >= 1 && schedule.epochs >= 1,
          "train: bad schedule");
  for (const auto& it : items) {
    require(it.mel_frames.rows() == it.alignment.length(),
            "train: item " + it.utterance_id + " alignment out of sync");
    require(it.alignment.vocab_size == model.alignment_vocab(),
            "train: item " + it.utterance_id + " vocabulary mismatch");
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl",
                    resume_checkpoint ? std::ios::app : std::ios::out);

  Rng data_rng(schedule.seed);
  Rng model_rng(schedule.seed ^ 0x5eed5eed5eed5eedull);
  TrainState state;
  nn::AdamOptimizer opt(model.params(), schedule.lr);

  if (resume_checkpoint) {
    Checkpoint cp = load_checkpoint(*resume_checkpoint);
    state = checkpoint_state(cp);
    data_rng = Rng::deserialize(state.data_rng);
    model_rng = Rng::deserialize(state.model_rng);
    if (cp.meta.value("has_optimizer", false))
      restore_optimizer(cp, model.params(), opt);
    for (const auto& [name, t] : model.params().items()) t->val = cp.tensor(name);
  }

  // Parameter node -> index, for gradient gathering.
  std::unordered_map<const ad::Node*, size_t> param_index;
  const auto& param_items = model.params().items();
  for (size_t i = 0; i < param_items.size(); ++i)
    param_index[param_items[i].second.get()] = i;

  const int workers = std::max(1, schedule.workers);
  TrainResult result;

  for (int epoch = state.epoch; epoch < schedule.epochs; ++epoch) {
    const double lr = scheduled_lr(schedule.lr, schedule.lr_decay,
                                   schedule.decay_every_epochs, epoch);
    opt.set_lr(lr);

    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    data_rng.shuffle(order);

    LossBreakdown epoch_sum;
    int epoch_batches = 0;

    for (size_t at = 0; at < order.size(); at += schedule.batch_size) {
      const size_t bsz =
          std::min<size_t>(schedule.batch_size, order.size() - at);
      std::vector<SampleTask> tasks(bsz);
      for (size_t b = 0; b < bsz; ++b) {
        const TrainItem& item = items[order[at + b]];
        const int t_total = static_cast<int>(item.mel_frames.rows());
        const int use = std::min(schedule.crop_frames, t_total);
        const int start =
            t_total == use
                ? 0
                : static_cast<int>(data_rng.uniform_int(
                      static_cast<uint64_t>(t_total - use) + 1));
        tasks[b] = SampleTask{&item, start, use, model_rng.next_u64()};
      }

      std::vector<std::vector<Mat>> worker_grads(
          workers, std::vector<Mat>());
      std::vector<std::vector<std::pair<size_t, LossBreakdown>>> worker_stats(
          workers);
      auto run_worker = [&](int w) {
        auto& grads = worker_grads[w];
        grads.resize(param_items.size());
        for (size_t i = 0; i < grads.size(); ++i)
          grads[i] = Mat::Zero(param_items[i].second->rows(),
                               param_items[i].second->cols());
        for (size_t b = w; b < bsz; b += workers) {
          const SampleTask& task = tasks[b];
          features::MelSpectrogram mel;
          mel.frames =
              task.item->mel_frames.middleRows(task.crop_start, task.crop_len);
          alignment::AlignmentSequence a;
          a.kind = task.item->alignment.kind;
          a.vocab_size = task.item->alignment.vocab_size;
          a.tokens.assign(
              task.item->alignment.tokens.begin() + task.crop_start,
              task.item->alignment.tokens.begin() + task.crop_start +
                  task.crop_len);
          Rng loss_rng(task.loss_seed);
          LossGraph lg = cdsvae_loss_graph(model, mel, a, loss_cfg, mask_cfg,
                                           loss_rng, schedule.dual);
          ad::Gradients g = ad::backward(lg.total);
          const double inv_b = 1.0 / static_cast<double>(bsz);
          for (size_t i = 0; i < param_items.size(); ++i) {
            const Mat* gi = g.find(param_items[i].second);
            if (gi) grads[i] += inv_b * *gi;
          }
          worker_stats[w].emplace_back(b, lg.values);
        }
      };
      if (workers == 1) {
        run_worker(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
        for (auto& th : pool) th.join();
      }

      // Fixed reduction order keeps training bit-reproducible.
      std::vector<Mat> grads(param_items.size());
      for (size_t i = 0; i < grads.size(); ++i) {
        grads[i] = std::move(worker_grads[0][i]);
        for (int w = 1; w < workers; ++w) grads[i] += worker_grads[w][i];
      }

      std::vector<LossBreakdown> by_pos(bsz);
      for (const auto& ws : worker_stats)
        for (const auto& [pos, v] : ws) by_pos[pos] = v;
      LossBreakdown batch_mean;
      for (const auto& v : by_pos) {
        batch_mean.recon += v.recon / bsz;
        batch_mean.kld_s += v.kld_s / bsz;
        batch_mean.kld_c += v.kld_c / bsz;
        batch_mean.mup += v.mup / bsz;
        batch_mean.total += v.total / bsz;
      }
      if (!std::isfinite(batch_mean.total))
        throw RuntimeFailure(
            str_cat("train: non-finite loss at step ", state.step,
                    " (epoch ", epoch, "); aborting"));

      opt.step(grads);
      ++state.step;

      log << json{{"step", state.step}, {"epoch", epoch},
                  {"recon", batch_mean.recon}, {"kld_s", batch_mean.kld_s},
                  {"kld_c", batch_mean.kld_c}, {"mup", batch_mean.mup},
                  {"total", batch_mean.total}, {"lr", lr}}
              .dump()
          << "\n";

      epoch_sum.recon += batch_mean.recon;
      epoch_sum.kld_s += batch_mean.kld_s;
      epoch_sum.kld_c += batch_mean.kld_c;
      epoch_sum.mup += batch_mean.mup;
      epoch_sum.total += batch_mean.total;
      ++epoch_batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.mean.recon = epoch_sum.recon / epoch_batches;
    stats.mean.kld_s = epoch_sum.kld_s / epoch_batches;
    stats.mean.kld_c = epoch_sum.kld_c / epoch_batches;
    stats.mean.mup = epoch_sum.mup / epoch_batches;
    stats.mean.total = epoch_sum.total / epoch_batches;
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    state.epoch = epoch + 1;
    state.model_rng = model_rng.serialize();
    state.data_rng = data_rng.serialize();
    if (schedule.save_every_epoch || epoch + 1 == schedule.epochs) {
      Checkpoint cp = pack_checkpoint(model, &opt, state);
      const std::string name = str_cat("epoch_", epoch, ".ckpt");
      save_checkpoint((out_dir / name).string(), cp);
      save_checkpoint((out_dir / "latest.ckpt").string(), cp);
      result.final_checkpoint = (out_dir / "latest.ckpt").string();
    }
  }
  return result;
}

}  // namespace utts::cdsvae
