// utts/frontend.cpp

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

#include "utts/frontend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace utts::frontend {

using namespace ad;
using nlohmann::json;

namespace {

std::string to_upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return out;
}

}  // namespace

std::vector<std::string> default_phoneme_symbols() {
  std::vector<std::string> symbols{"SIL", "SP", "SPN"};
  const char* vowels[] = {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
                          "EY", "IH", "IY", "OW", "OY", "UH", "UW"};
  for (const char* v : vowels)
    for (int stress = 0; stress <= 2; ++stress)
      symbols.push_back(str_cat(v, stress));
  const char* consonants[] = {"B", "CH", "D",  "DH", "F", "G",  "HH", "JH",
                              "K", "L",  "M",  "N",  "NG", "P", "R",  "S",
                              "SH", "T", "TH", "V",  "W", "Y",  "Z",  "ZH"};
  for (const char* c : consonants) symbols.push_back(c);
  require(symbols.size() == alignment::kNumMonophones,
          "phoneme table must have exactly 72 entries");
  return symbols;
}

Lexicon::Lexicon(std::vector<std::string> symbols,
                 std::map<std::string, std::vector<std::string>> entries)
    : symbols_(std::move(symbols)) {
  require(!symbols_.empty(), "lexicon: empty symbol table");
  for (size_t i = 0; i < symbols_.size(); ++i) {
    auto [it, fresh] = symbol_to_id_.emplace(symbols_[i], static_cast<int>(i));
    require(fresh, "lexicon: duplicate symbol " + symbols_[i]);
  }
  for (auto& [word, phones] : entries) {
    std::vector<int> ids;
    for (const auto& p : phones) ids.push_back(symbol_id(p));
    const std::string w = to_upper(word);
    word_to_ids_[w] = std::move(ids);
  }
  for (const auto& [w, ids] : word_to_ids_) word_list_.push_back(w);
}

int Lexicon::symbol_id(const std::string& symbol) const {
  auto it = symbol_to_id_.find(symbol);
  if (it == symbol_to_id_.end())
    throw ValidationError("lexicon: unknown phoneme symbol " + symbol);
  return it->second;
}

const std::string& Lexicon::symbol(int id) const {
  require(id >= 0 && id < num_symbols(), "lexicon: symbol id out of range");
  return symbols_[static_cast<size_t>(id)];
}

bool Lexicon::has_word(const std::string& word) const {
  return word_to_ids_.count(to_upper(word)) > 0;
}

const std::vector<int>& Lexicon::lookup(const std::string& word) const {
  auto it = word_to_ids_.find(to_upper(word));
  if (it == word_to_ids_.end())
    throw ValidationError("lexicon: out-of-vocabulary word \"" + word + "\"");
  return it->second;
}

Lexicon Lexicon::load(const std::string& lexicon_path,
                      const std::string& symbols_path) {
  std::ifstream sym(symbols_path);
  if (!sym) throw IoError("lexicon: cannot open symbol table " + symbols_path);
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(sym, line)) {
    if (!line.empty()) symbols.push_back(line);
  }
  std::ifstream lex(lexicon_path);
  if (!lex) throw IoError("lexicon: cannot open " + lexicon_path);
  std::map<std::string, std::vector<std::string>> entries;
  while (std::getline(lex, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    std::vector<std::string> phones;
    std::string p;
    while (is >> p) phones.push_back(p);
    require(!phones.empty(), "lexicon: entry with no phonemes: " + word);
    entries[word] = std::move(phones);
  }
  return Lexicon(std::move(symbols), std::move(entries));
}

void Lexicon::save(const std::string& lexicon_path,
                   const std::string& symbols_path) const {
  std::ofstream sym(symbols_path);
  if (!sym) throw IoError("lexicon: cannot write " + symbols_path);
  for (const auto& s : symbols_) sym << s << "\n";
  std::ofstream lex(lexicon_path);
  if (!lex) throw IoError("lexicon: cannot write " + lexicon_path);
  for (const auto& [word, ids] : word_to_ids_) {
    lex << word;
    for (int id : ids) lex << " " << symbols_[static_cast<size_t>(id)];
    lex << "\n";
  }
}

PhonemeSequence text_to_phonemes(const std::string& text, const Lexicon& lex,
                                 bool word_boundary_sil) {
  std::istringstream is(text);
  std::vector<std::string> words;
  std::string w;
  while (is >> w) words.push_back(w);
  require(!words.empty(), "text_to_phonemes: empty text");

  PhonemeSequence seq;
  seq.text = text;
  const int sp = word_boundary_sil ? lex.symbol_id("SP") : -1;
  for (size_t i = 0; i < words.size(); ++i) {
    const std::vector<int>& ids = lex.lookup(words[i]);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
    if (word_boundary_sil && i + 1 < words.size()) seq.ids.push_back(sp);
  }
  return seq;
}

DurationModelConfig DurationModelConfig::small() {
  DurationModelConfig c;
  c.model_dim = 48;
  c.key_dim = 24;
  c.value_dim = 24;
  c.heads = 2;
  c.attention_layers = 2;
  c.conv_channels = 48;
  c.conv_layers = 2;
  return c;
}

json DurationModelConfig::to_json() const {
  return json{{"phoneme_vocab", phoneme_vocab}, {"model_dim", model_dim},
              {"key_dim", key_dim},             {"value_dim", value_dim},
              {"heads", heads},                 {"attention_layers", attention_layers},
              {"conv_channels", conv_channels}, {"conv_kernel", conv_kernel},
              {"conv_layers", conv_layers},     {"speaker_dim", speaker_dim}};
}

DurationModelConfig DurationModelConfig::from_json(const json& j) {
  DurationModelConfig c;
  c.phoneme_vocab = j.at("phoneme_vocab").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.key_dim = j.at("key_dim").get<int>();
  c.value_dim = j.at("value_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.attention_layers = j.at("attention_layers").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.conv_layers = j.at("conv_layers").get<int>();
  c.speaker_dim = j.at("speaker_dim").get<int>();
  return c;
}

DurationModel::DurationModel(const DurationModelConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  embedding_ = nn::Embedding(params_, "dur.embed", cfg.phoneme_vocab,
                             cfg.model_dim, rng);
  for (int l = 0; l < cfg.attention_layers; ++l)
    attention_.emplace_back(params_, str_cat("dur.mha", l), cfg.model_dim,
                            cfg.key_dim, cfg.value_dim, cfg.heads, rng);
  speaker_proj_ =
      nn::Dense(params_, "dur.spk_proj", cfg.speaker_dim, cfg.model_dim, rng);
  int ch = cfg.model_dim;
  // Length-preserving convs: symmetric padding of (kernel-1)/2.
  const int pad = (cfg.conv_kernel - 1) / 2;
  for (int l = 0; l < cfg.conv_layers; ++l) {
    convs_.emplace_back(params_, str_cat("dur.conv", l), ch, cfg.conv_channels,
                        cfg.conv_kernel, pad, rng);
    ch = cfg.conv_channels;
  }
  out_ = nn::Dense(params_, "dur.out", ch, 1, rng);
}

Tensor DurationModel::forward_t(const std::vector<int>& phoneme_ids,
                                const Mat& speaker) const {
  require(!phoneme_ids.empty(), "duration model: empty phoneme sequence");
  require(speaker.rows() == 1 && speaker.cols() == cfg_.speaker_dim,
          "duration model: speaker embedding must be 1 x speaker_dim");
  Tensor h = embedding_.forward(phoneme_ids);
  for (const auto& block : attention_) h = block.forward(h);
  Tensor spk = speaker_proj_.forward(constant(speaker));
  h = add(h, repeat_row(spk, static_cast<int>(phoneme_ids.size())));
  for (const auto& conv : convs_) h = relu(conv.forward(h));
  return out_.forward(h);  // N x 1, log domain
}

Vec predict_durations(const PhonemeSequence& ph, const Mat& speaker,
                      const DurationModel& m) {
  require(ph.size() >= 1, "predict_durations: empty sequence");
  return m.forward_t(ph.ids, speaker)->val.col(0);
}

std::vector<int> durations_to_frames(const Vec& logdur) {
  std::vector<int> frames(static_cast<size_t>(logdur.size()));
  for (Eigen::Index i = 0; i < logdur.size(); ++i) {
    require(std::isfinite(logdur(i)), "durations_to_frames: non-finite value");
    frames[static_cast<size_t>(i)] =
        std::max(1, static_cast<int>(std::ceil(std::exp(logdur(i)))));
  }
  return frames;
}

Tensor duration_loss_t(const Tensor& pred, const Mat& target) {
  if (pred->rows() != target.rows() || pred->cols() != target.cols())
    throw ValidationError("duration_loss: length mismatch");
  return mean_all(square(sub(pred, constant(target))));
}

double duration_loss(const Vec& pred_logdur, const Vec& target_logdur) {
  require(pred_logdur.size() == target_logdur.size(),
          "duration_loss: length mismatch");
  return (pred_logdur - target_logdur).squaredNorm() /
         static_cast<double>(pred_logdur.size());
}

Fa2UaModelConfig Fa2UaModelConfig::small() {
  Fa2UaModelConfig c;
  c.embed_dim = 32;
  c.hidden = 32;
  c.layers = 1;
  return c;
}

json Fa2UaModelConfig::to_json() const {
  return json{{"fa_vocab", fa_vocab},   {"ua_classes", ua_classes},
              {"embed_dim", embed_dim}, {"hidden", hidden},
              {"layers", layers}};
}

Fa2UaModelConfig Fa2UaModelConfig::from_json(const json& j) {
  Fa2UaModelConfig c;
  c.fa_vocab = j.at("fa_vocab").get<int>();
  c.ua_classes = j.at("ua_classes").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  return c;
}

Fa2UaModel::Fa2UaModel(const Fa2UaModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  embedding_ =
      nn::Embedding(params_, "fa2ua.embed", cfg.fa_vocab, cfg.embed_dim, rng);
  lstm_ = nn::BiLstm(params_, "fa2ua.lstm", cfg.embed_dim, cfg.hidden,
                     cfg.layers, rng);
  classifier_ =
      nn::Dense(params_, "fa2ua.out", 2 * cfg.hidden, cfg.ua_classes, rng);
}

Tensor Fa2UaModel::forward_t(const std::vector<int>& fa_tokens,
                             const cdsvae::MaskSet& mask) const {
  require(!fa_tokens.empty(), "fa2ua: empty input");
  std::vector<int> tokens = fa_tokens;
  for (int idx : mask) {
    require(idx >= 0 && idx < static_cast<int>(tokens.size()),
            "fa2ua: mask index range");
    tokens[static_cast<size_t>(idx)] = alignment::kFaMaskSymbol;
  }
  return classifier_.forward(lstm_.forward(embedding_.forward(tokens)));
}

Mat Fa2UaModel::logits(const alignment::AlignmentSequence& fa,
                       const cdsvae::MaskSet& mask) const {
  require(fa.kind == alignment::Kind::FA, "fa2ua: input must be FA");
  return forward_t(fa.tokens, mask)->val;
}

alignment::AlignmentSequence fa2ua_predict(
    const alignment::AlignmentSequence& fa, const Fa2UaModel& m) {
  Mat l = m.logits(fa);
  std::vector<int> tokens(static_cast<size_t>(l.rows()));
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    Eigen::Index best;
    l.row(r).maxCoeff(&best);
    tokens[static_cast<size_t>(r)] = static_cast<int>(best);
  }
  return alignment::make_ua(std::move(tokens), m.config().ua_classes);
}

double fa2ua_loss(const Mat& logits, const alignment::AlignmentSequence& ua,
                  const cdsvae::MaskSet& mask) {
  require(static_cast<int>(logits.rows()) == ua.length(),
          "fa2ua_loss: length mismatch");
  return masked_nll(constant(logits), ua.tokens, mask)->scalar();
}

// ---- training ----

namespace {

struct SplitIndices {
  std::vector<size_t> train, validation;
};

SplitIndices split_dataset(size_t n, double validation_fraction, Rng& rng) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  size_t n_val = static_cast<size_t>(std::floor(n * validation_fraction));
  if (n >= 4 && n_val == 0) n_val = 1;
  SplitIndices s;
  s.validation.assign(order.begin(), order.begin() + n_val);
  s.train.assign(order.begin() + n_val, order.end());
  require(!s.train.empty(), "train: no training items after split");
  return s;
}

// Shared mini-batch loop for the two frontend models: per-item graphs,
// deterministic worker partitioning, fixed-order reduction.
template <typename MakeLoss>
double run_epoch(nn::ParamStore& params, nn::AdamOptimizer& opt,
                 const std::vector<size_t>& train_idx, int batch_size,
                 int workers, Rng& data_rng, MakeLoss make_loss) {
  std::vector<size_t> order = train_idx;
  data_rng.shuffle(order);
  double epoch_loss = 0.0;
  int batches = 0;
  const auto& items = params.items();
  for (size_t at = 0; at < order.size(); at += batch_size) {
    const size_t bsz = std::min<size_t>(batch_size, order.size() - at);
    std::vector<uint64_t> seeds(bsz);
    for (size_t b = 0; b < bsz; ++b) seeds[b] = data_rng.next_u64();

    std::vector<std::vector<Mat>> worker_grads(workers);
    std::vector<double> worker_loss(workers, 0.0);
    auto run_worker = [&](int w) {
      auto& grads = worker_grads[w];
      grads.resize(items.size());
      for (size_t i = 0; i < grads.size(); ++i)
        grads[i] = Mat::Zero(items[i].second->rows(), items[i].second->cols());
      for (size_t b = w; b < bsz; b += workers) {
        ad::Tensor loss = make_loss(order[at + b], seeds[b]);
        ad::Gradients g = ad::backward(loss);
        const double inv_b = 1.0 / static_cast<double>(bsz);
        for (size_t i = 0; i < items.size(); ++i) {
          const Mat* gi = g.find(items[i].second);
          if (gi) grads[i] += inv_b * *gi;
        }
        worker_loss[w] += loss->scalar() * inv_b;
      }
    };
    if (workers == 1) {
      run_worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
      for (auto& th : pool) th.join();
    }
    std::vector<Mat> grads(items.size());
    double batch_loss = 0.0;
    for (size_t i = 0; i < grads.size(); ++i) {
      grads[i] = std::move(worker_grads[0][i]);
      for (int w = 1; w < workers; ++w) grads[i] += worker_grads[w][i];
    }
    for (int w = 0; w < workers; ++w) batch_loss += worker_loss[w];
    if (!std::isfinite(batch_loss))
      throw RuntimeFailure("train: non-finite loss; aborting");
    opt.step(grads);
    epoch_loss += batch_loss;
    ++batches;
  }
  return epoch_loss / std::max(1, batches);
}

}  // namespace

FrontendTrainResult train_duration(DurationModel& model,
                                   const std::vector<DurationTrainItem>& items,
                                   const FrontendSchedule& schedule,
                                   const std::filesystem::path& out_dir) {
  require(!items.empty(), "train_duration: empty dataset");
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "duration_log.jsonl");
  Rng data_rng(schedule.seed);
  SplitIndices split =
      split_dataset(items.size(), schedule.validation_fraction, data_rng);
  nn::AdamOptimizer opt(model.params(), schedule.lr);

  FrontendTrainResult result;
  const int workers = std::max(1, schedule.workers);
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    opt.set_lr(cdsvae::scheduled_lr(schedule.lr, schedule.lr_decay,
                                    schedule.decay_every_epochs, epoch));
    const double train_loss = run_epoch(
        model.params(), opt, split.train, schedule.batch_size, workers,
        data_rng, [&](size_t idx, uint64_t) {
          const auto& it = items[idx];
          Mat target = it.target_logdur;
          return duration_loss_t(model.forward_t(it.phoneme_ids, it.speaker),
                                 target);
        });
    double val_loss = 0.0;
    for (size_t idx : split.validation) {
      const auto& it = items[idx];
      Vec pred = model.forward_t(it.phoneme_ids, it.speaker)->val.col(0);
      val_loss += duration_loss(pred, it.target_logdur);
    }
    if (!split.validation.empty()) val_loss /= split.validation.size();

    FrontendEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss;
    stats.validation_loss = val_loss;
    result.epochs.push_back(stats);
    log << nlohmann::json{{"epoch", epoch},
                          {"train_mse", train_loss},
                          {"val_mse", val_loss},
                          {"lr", opt.lr()}}
               .dump()
        << "\n";
  }
  Checkpoint cp = pack_duration(model);
  const std::string path = (out_dir / "duration.ckpt").string();
  save_checkpoint(path, cp);
  result.final_checkpoint = path;
  return result;
}

FrontendTrainResult train_fa2ua(Fa2UaModel& model,
                                const std::vector<Fa2UaTrainItem>& items,
                                const cdsvae::MaskConfig& mask_cfg,
                                const FrontendSchedule& schedule,
                                const std::filesystem::path& out_dir) {
  require(!items.empty(), "train_fa2ua: empty dataset");
  for (const auto& it : items)
    require(it.fa_tokens.size() == it.ua_tokens.size(),
            "train_fa2ua: FA/UA out of sync for " + it.utterance_id);
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "fa2ua_log.jsonl");
  Rng data_rng(schedule.seed);
  SplitIndices split =
      split_dataset(items.size(), schedule.validation_fraction, data_rng);
  nn::AdamOptimizer opt(model.params(), schedule.lr);

  FrontendTrainResult result;
  const int workers = std::max(1, schedule.workers);
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    opt.set_lr(cdsvae::scheduled_lr(schedule.lr, schedule.lr_decay,
                                    schedule.decay_every_epochs, epoch));
    const double train_loss = run_epoch(
        model.params(), opt, split.train, schedule.batch_size, workers,
        data_rng, [&](size_t idx, uint64_t seed) {
          const auto& it = items[idx];
          Rng mask_rng(seed);
          cdsvae::MaskSet mask = cdsvae::sample_mask(
              static_cast<int>(it.fa_tokens.size()), mask_rng, mask_cfg);
          return masked_nll(model.forward_t(it.fa_tokens, mask), it.ua_tokens,
                            mask);
        });

    // Masked top-1 accuracy on validation, with a deterministic mask.
    double val_loss = 0.0;
    int64_t val_correct = 0, val_total = 0;
    Rng val_rng(schedule.seed ^ 0xabcdefull);
    for (size_t idx : split.validation) {
      const auto& it = items[idx];
      cdsvae::MaskSet mask = cdsvae::sample_mask(
          static_cast<int>(it.fa_tokens.size()), val_rng, mask_cfg);
      Mat l = model.forward_t(it.fa_tokens, mask)->val;
      alignment::AlignmentSequence ua =
          alignment::make_ua(it.ua_tokens, model.config().ua_classes);
      val_loss += fa2ua_loss(l, ua, mask);
      for (int r : mask) {
        Eigen::Index best;
        l.row(r).maxCoeff(&best);
        val_correct += best == it.ua_tokens[static_cast<size_t>(r)];
        ++val_total;
      }
    }
    if (!split.validation.empty()) val_loss /= split.validation.size();

    FrontendEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss;
    stats.validation_loss = val_loss;
    stats.validation_accuracy =
        val_total > 0 ? static_cast<double>(val_correct) / val_total : 0.0;
    result.epochs.push_back(stats);
    log << nlohmann::json{{"epoch", epoch},
                          {"train_nll", train_loss},
                          {"val_nll", val_loss},
                          {"val_masked_top1", stats.validation_accuracy},
                          {"lr", opt.lr()}}
               .dump()
        << "\n";
  }
  Checkpoint cp = pack_fa2ua(model);
  const std::string path = (out_dir / "fa2ua.ckpt").string();
  save_checkpoint(path, cp);
  result.final_checkpoint = path;
  return result;
}

const Vec& SpeakerPool::get(const std::string& speaker_id) const {
  auto it = embeddings.find(speaker_id);
  if (it == embeddings.end())
    throw ValidationError("speaker pool: unknown speaker " + speaker_id);
  return it->second;
}

const Vec& SpeakerPool::random(Rng& rng) const {
  require(!embeddings.empty(), "speaker pool: empty");
  const size_t pick = rng.uniform_int(embeddings.size());
  auto it = embeddings.begin();
  std::advance(it, static_cast<long>(pick));
  return it->second;
}

void SpeakerPool::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("speaker pool: cannot write " + path);
  for (const auto& [id, e] : embeddings) {
    nlohmann::json j;
    j["speaker_id"] = id;
    j["embedding"] = std::vector<double>(e.data(), e.data() + e.size());
    out << j.dump() << "\n";
  }
}

SpeakerPool SpeakerPool::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("speaker pool: cannot open " + path);
  SpeakerPool pool;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    auto vals = j.at("embedding").get<std::vector<double>>();
    Vec e(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) e(static_cast<Eigen::Index>(i)) = vals[i];
    pool.embeddings[j.at("speaker_id").get<std::string>()] = e;
  }
  require(!pool.embeddings.empty(), "speaker pool: no entries in " + path);
  return pool;
}

Checkpoint pack_duration(const DurationModel& m) {
  Checkpoint cp;
  cp.meta["kind"] = "duration";
  cp.meta["config"] = m.config().to_json();
  for (const auto& [name, t] : m.params().items())
    cp.tensors.emplace_back(name, t->val);
  return cp;
}

DurationModel unpack_duration(const Checkpoint& cp) {
  require(cp.meta.at("kind") == "duration",
          "checkpoint: not a duration model");
  DurationModel m(DurationModelConfig::from_json(cp.meta.at("config")), 0);
  for (const auto& [name, t] : m.params().items()) t->val = cp.tensor(name);
  return m;
}

Checkpoint pack_fa2ua(const Fa2UaModel& m) {
  Checkpoint cp;
  cp.meta["kind"] = "fa2ua";
  cp.meta["config"] = m.config().to_json();
  for (const auto& [name, t] : m.params().items())
    cp.tensors.emplace_back(name, t->val);
  return cp;
}

Fa2UaModel unpack_fa2ua(const Checkpoint& cp) {
  require(cp.meta.at("kind") == "fa2ua", "checkpoint: not a fa2ua model");
  Fa2UaModel m(Fa2UaModelConfig::from_json(cp.meta.at("config")), 0);
  for (const auto& [name, t] : m.params().items()) t->val = cp.tensor(name);
  return m;
}

}  // namespace utts::frontend
