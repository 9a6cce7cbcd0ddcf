// utts/cli.cpp

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

#include "utts/cli.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "utts/config.hpp"
#include "utts/eval.hpp"
#include "utts/pipeline.hpp"
#include "utts/toycorpus.hpp"

namespace utts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path stage_dir(const config::RunConfig& cfg, const std::string& stage) {
  return fs::path(cfg.out_dir) / (stage + "-" + cfg.hash().substr(0, 8));
}

void write_stage_meta(const fs::path& dir, const config::RunConfig& cfg,
                      const json& extra = {}) {
  json meta;
  meta["config_hash"] = cfg.hash();
  meta["config"] = cfg.to_json();
  if (!extra.is_null())
    for (auto it = extra.begin(); it != extra.end(); ++it)
      meta[it.key()] = it.value();
  std::ofstream out(dir / "stage.json");
  out << meta.dump(2) << "\n";
}

bool stage_complete(const fs::path& dir, const config::RunConfig& cfg) {
  std::ifstream in(dir / "stage.json");
  if (!in) return false;
  try {
    json meta = json::parse(in);
    return meta.at("config_hash").get<std::string>() == cfg.hash();
  } catch (...) {
    return false;
  }
}

struct PreparedUtterance {
  features::ManifestEntry entry;
  features::MelSpectrogram mel;
  alignment::AlignmentSequence condition;  // UA or FA at mel rate
  std::optional<alignment::PhonemeDurations> fa;
};

// Pads or trims an alignment to exactly `frames` (rate rounding can differ
// by a frame).
alignment::AlignmentSequence fit_to_frames(alignment::AlignmentSequence a,
                                           int frames) {
  require(a.length() >= 1, "alignment is empty");
  if (a.length() > frames)
    a.tokens.resize(static_cast<size_t>(frames));
  while (a.length() < frames) a.tokens.push_back(a.tokens.back());
  return a;
}

int cmd_prepare(const config::RunConfig& cfg, bool force) {
  require(!cfg.manifest.empty(), "prepare: config needs data.manifest");
  features::DatasetManifest manifest = features::load_manifest(cfg.manifest);
  require(!manifest.entries.empty(), "prepare: empty manifest");

  const fs::path dir = stage_dir(cfg, "prepare");
  if (!force && stage_complete(dir, cfg)) {
    std::cout << "prepare: artifacts up to date in " << dir << "\n";
    return 0;
  }
  fs::create_directories(dir / "mels");
  fs::create_directories(dir / "ua");
  fs::create_directories(dir / "durations");

  // Mels + feature matrices.
  std::vector<features::FeatureMatrix> all_features;
  std::vector<int> mel_frames;
  std::vector<std::string> fa_warnings;
  for (const auto& e : manifest.entries) {
    features::Waveform wav = features::load_audio(e.audio_path);
    features::MelSpectrogram mel = features::compute_mel(wav);
    features::save_mel((dir / "mels" / (e.utterance_id + ".ufm")).string(),
                       mel);
    mel_frames.push_back(mel.num_frames());
    features::FeatureMatrix fm =
        e.ssl_feature_path ? features::load_feature_matrix(*e.ssl_feature_path)
                           : features::cepstral_proxy(mel);
    all_features.push_back(std::move(fm));
  }

  // UA: codebook over all training features, then per-utterance labels at
  // the mel frame rate.
  Rng rng(cfg.seed);
  alignment::Codebook cb =
      alignment::fit_codebook(all_features, cfg.clusters, rng);
  alignment::save_codebook((dir / "codebook.ucb").string(), cb);
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    alignment::AlignmentSequence ua =
        alignment::assign_units(all_features[i], cb);
    const double mel_rate = 62.5;
    if (all_features[i].frame_rate != mel_rate)
      ua = alignment::resample_alignment(ua, all_features[i].frame_rate,
                                         mel_rate);
    ua = fit_to_frames(std::move(ua), mel_frames[i]);
    pipeline::save_alignment((dir / "ua" / (e.utterance_id + ".ua")).string(),
                             ua);
  }

  // Duration targets from FA, in the log domain.
  int fa_count = 0;
  for (const auto& e : manifest.entries) {
    if (!e.fa_path) {
      fa_warnings.push_back(e.utterance_id);
      continue;
    }
    alignment::PhonemeDurations pd = alignment::load_fa_file(*e.fa_path);
    std::ofstream out(dir / "durations" / (e.utterance_id + ".logdur"));
    out.precision(17);
    for (size_t i = 0; i < pd.phonemes.size(); ++i)
      out << pd.phonemes[i] << " " << std::log(pd.durations[i]) << "\n";
    ++fa_count;
  }

  write_stage_meta(dir, cfg,
                   json{{"utterances", manifest.entries.size()},
                        {"with_fa", fa_count}});
  std::cout << "prepare: " << manifest.entries.size() << " utterances, "
            << fa_count << " with FA, K=" << cfg.clusters << " -> " << dir
            << "\n";
  for (const auto& id : fa_warnings)
    std::cout << "prepare: warning: no FA for " << id << "\n";
  return 0;
}

std::vector<PreparedUtterance> load_prepared(const config::RunConfig& cfg,
                                             bool need_fa) {
  const fs::path dir = stage_dir(cfg, "prepare");
  require(stage_complete(dir, cfg),
          "missing prepared artifacts for this config; run `utts prepare` "
          "first (expected " +
              dir.string() + ")");
  features::DatasetManifest manifest = features::load_manifest(cfg.manifest);
  std::vector<PreparedUtterance> out;
  for (const auto& e : manifest.entries) {
    PreparedUtterance u;
    u.entry = e;
    u.mel = features::load_mel((dir / "mels" / (e.utterance_id + ".ufm")).string());
    if (cfg.alignment_kind == "UA") {
      u.condition = pipeline::load_alignment(
          (dir / "ua" / (e.utterance_id + ".ua")).string());
    } else {
      require(e.fa_path.has_value(),
              "FA conditioning requested but no FA for " + e.utterance_id);
      alignment::PhonemeDurations pd = alignment::load_fa_file(*e.fa_path);
      u.condition = fit_to_frames(alignment::expand_phonemes(pd),
                                  u.mel.num_frames());
    }
    if (e.fa_path) u.fa = alignment::load_fa_file(*e.fa_path);
    if (need_fa && !u.fa)
      std::cout << "warning: skipping " << e.utterance_id << " (no FA)\n";
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<cdsvae::TrainItem> to_train_items(
    const std::vector<PreparedUtterance>& prepared) {
  std::vector<cdsvae::TrainItem> items;
  for (const auto& u : prepared) {
    cdsvae::TrainItem it;
    it.utterance_id = u.entry.utterance_id;
    it.mel_frames = u.mel.frames;
    it.alignment = u.condition;
    items.push_back(std::move(it));
  }
  return items;
}

cdsvae::Model make_model(const config::RunConfig& cfg) {
  const bool ua = cfg.alignment_kind == "UA";
  const int vocab = ua ? cfg.clusters + 1 : alignment::kFaVocabSize;
  const int classes = ua ? cfg.clusters : alignment::kNumMonophones;
  return cdsvae::Model(cfg.arch(),
                       ua ? alignment::Kind::UA : alignment::Kind::FA, vocab,
                       classes, cfg.seed);
}

frontend::SpeakerPool build_speaker_pool(
    const cdsvae::Model& model, const std::vector<PreparedUtterance>& prepared) {
  std::map<std::string, std::pair<Vec, int>> acc;
  for (const auto& u : prepared) {
    Mat shared = model.encode_shared(u.mel);
    Vec mean = model.encode_speaker(shared).mean.row(0);
    auto& slot = acc[u.entry.speaker_id];
    if (slot.second == 0) slot.first = Vec::Zero(mean.size());
    slot.first += mean;
    slot.second += 1;
  }
  frontend::SpeakerPool pool;
  for (auto& [id, s] : acc) pool.embeddings[id] = s.first / s.second;
  return pool;
}

int cmd_train(const config::RunConfig& cfg, const std::string& stage,
              std::string base_checkpoint) {
  if (stage == "cdsvae" || stage == "cdsvae-dual") {
    const bool dual = stage == "cdsvae-dual";
    std::vector<cdsvae::TrainItem> items =
        to_train_items(load_prepared(cfg, false));
    cdsvae::Model model = make_model(cfg);
    if (dual) {
      if (base_checkpoint.empty())
        base_checkpoint =
            (stage_dir(cfg, "train-cdsvae") / "latest.ckpt").string();
      require(fs::exists(base_checkpoint),
              "cdsvae-dual needs a converged base checkpoint; run `utts train "
              "--stage cdsvae` first (expected " +
                  base_checkpoint + ")");
      Checkpoint cp = load_checkpoint(base_checkpoint);
      model = cdsvae::unpack_model(cp);
    }
    cdsvae::TrainSchedule schedule = cfg.schedule;
    schedule.dual = dual;
    const fs::path dir = stage_dir(cfg, "train-" + stage);
    cdsvae::TrainResult res =
        cdsvae::train(model, items, cfg.loss, cfg.mask, schedule, dir, {},
                      [](const cdsvae::EpochStats& s) {
                        std::cout << "epoch " << s.epoch << " total "
                                  << s.mean.total << " recon " << s.mean.recon
                                  << " kld_s " << s.mean.kld_s << " kld_c "
                                  << s.mean.kld_c << " mup " << s.mean.mup
                                  << " lr " << s.lr << "\n";
                      });
    write_stage_meta(dir, cfg);
    std::cout << stage << ": checkpoint " << res.final_checkpoint << "\n";
    return 0;
  }

  if (stage == "duration" || stage == "fa2ua") {
    std::vector<PreparedUtterance> prepared = load_prepared(cfg, true);
    if (base_checkpoint.empty())
      base_checkpoint =
          (stage_dir(cfg, "train-cdsvae") / "latest.ckpt").string();

    const fs::path dir = stage_dir(cfg, "train-" + stage);
    fs::create_directories(dir);
    if (stage == "duration") {
      require(fs::exists(base_checkpoint),
              "duration training needs a trained acoustic checkpoint "
              "(expected " + base_checkpoint + ")");
      cdsvae::Model model =
          cdsvae::unpack_model(load_checkpoint(base_checkpoint));
      frontend::SpeakerPool pool = build_speaker_pool(model, prepared);
      pool.save((dir / "speaker_pool.jsonl").string());

      std::vector<frontend::DurationTrainItem> items;
      for (const auto& u : prepared) {
        if (!u.fa) continue;
        frontend::DurationTrainItem it;
        it.utterance_id = u.entry.utterance_id;
        it.phoneme_ids = u.fa->phonemes;
        it.target_logdur.resize(static_cast<Eigen::Index>(u.fa->durations.size()));
        for (size_t i = 0; i < u.fa->durations.size(); ++i)
          it.target_logdur(static_cast<Eigen::Index>(i)) =
              std::log(u.fa->durations[i]);
        it.speaker = pool.get(u.entry.speaker_id).transpose();
        items.push_back(std::move(it));
      }
      require(!items.empty(), "duration training: no utterances carry FA");
      frontend::DurationModel model2(cfg.duration_model, cfg.seed + 1);
      auto res = frontend::train_duration(model2, items,
                                          cfg.frontend_schedule, dir);
      write_stage_meta(dir, cfg);
      std::cout << "duration: val_mse "
                << res.epochs.back().validation_loss << " checkpoint "
                << res.final_checkpoint << "\n";
    } else {
      std::vector<frontend::Fa2UaTrainItem> items;
      for (const auto& u : prepared) {
        if (!u.fa) continue;
        frontend::Fa2UaTrainItem it;
        it.utterance_id = u.entry.utterance_id;
        it.fa_tokens = fit_to_frames(alignment::expand_phonemes(*u.fa),
                                     u.mel.num_frames())
                           .tokens;
        it.ua_tokens = u.condition.tokens;
        items.push_back(std::move(it));
      }
      require(!items.empty(), "fa2ua training: no utterances carry FA");
      frontend::Fa2UaModel model(cfg.fa2ua_model, cfg.seed + 2);
      auto res =
          frontend::train_fa2ua(model, items, cfg.mask,
                                cfg.frontend_schedule, dir);
      write_stage_meta(dir, cfg);
      std::cout << "fa2ua: val_masked_top1 "
                << res.epochs.back().validation_accuracy << " checkpoint "
                << res.final_checkpoint << "\n";
    }
    return 0;
  }
  throw ValidationError("train: unknown stage \"" + stage +
                        "\" (cdsvae, cdsvae-dual, duration, fa2ua)");
}

pipeline::VocoderHandle vocoder_from_config(const config::RunConfig& cfg) {
  if (cfg.vocoder_kind == "internal")
    return pipeline::VocoderHandle::internal(cfg.vocoder_iterations);
  if (!cfg.vocoder_endpoint.empty())
    return pipeline::VocoderHandle::external_http(cfg.vocoder_endpoint,
                                                  cfg.vocoder_timeout_ms);
  require(!cfg.vocoder_command.empty(),
          "external vocoder needs vocoder.endpoint or vocoder.command");
  return pipeline::VocoderHandle::external_pipe(cfg.vocoder_command,
                                                cfg.vocoder_timeout_ms);
}

struct LoadedModels {
  cdsvae::Model acoustic;
  frontend::DurationModel duration;
  frontend::Fa2UaModel fa2ua;
  frontend::Lexicon lexicon;
  frontend::SpeakerPool pool;
};

LoadedModels load_models(const config::RunConfig& cfg,
                         const std::string& acoustic_ckpt) {
  const std::string a = acoustic_ckpt.empty()
                            ? (stage_dir(cfg, "train-cdsvae-dual") /
                               "latest.ckpt")
                                  .string()
                            : acoustic_ckpt;
  const std::string a2 =
      (stage_dir(cfg, "train-cdsvae") / "latest.ckpt").string();
  const std::string acoustic_path = fs::exists(a) ? a : a2;
  require(fs::exists(acoustic_path),
          "no acoustic checkpoint found; run `utts train --stage cdsvae`");
  const fs::path dur_dir = stage_dir(cfg, "train-duration");
  const fs::path fa2ua_dir = stage_dir(cfg, "train-fa2ua");
  require(fs::exists(dur_dir / "duration.ckpt"),
          "no duration checkpoint; run `utts train --stage duration`");
  require(fs::exists(fa2ua_dir / "fa2ua.ckpt"),
          "no fa2ua checkpoint; run `utts train --stage fa2ua`");
  require(!cfg.lexicon.empty() && !cfg.symbols.empty(),
          "config needs data.lexicon and data.symbols");
  return LoadedModels{
      cdsvae::unpack_model(load_checkpoint(acoustic_path)),
      frontend::unpack_duration(
          load_checkpoint((dur_dir / "duration.ckpt").string())),
      frontend::unpack_fa2ua(
          load_checkpoint((fa2ua_dir / "fa2ua.ckpt").string())),
      frontend::Lexicon::load(cfg.lexicon, cfg.symbols),
      frontend::SpeakerPool::load((dur_dir / "speaker_pool.jsonl").string())};
}

int cmd_synthesize(const config::RunConfig& cfg,
                   const pipeline::SynthesisRequest& req,
                   const std::string& acoustic_ckpt, std::string out) {
  LoadedModels m = load_models(cfg, acoustic_ckpt);
  pipeline::Models models{&m.acoustic, &m.duration, &m.fa2ua, &m.lexicon,
                          &m.pool};
  pipeline::SynthesisResult res =
      pipeline::synthesize(req, models, vocoder_from_config(cfg));
  if (out.empty())
    out = (fs::path(cfg.out_dir) /
           str_cat("synth-", hex64(fnv1a64(req.text)).substr(0, 8), "-s",
                   req.seed))
              .string();
  pipeline::write_bundle(out, res, req, cfg.hash());
  std::cout << "synthesize: " << res.mel.num_frames() << " frames, "
            << res.waveform.samples.size() << " samples -> " << out << "\n";
  return 0;
}

int cmd_convert(const config::RunConfig& cfg, const std::string& src,
                const std::string& tgt, const std::string& out_wav,
                uint64_t seed, const std::string& acoustic_ckpt) {
  std::string path = acoustic_ckpt;
  if (path.empty()) {
    const std::string dual =
        (stage_dir(cfg, "train-cdsvae-dual") / "latest.ckpt").string();
    const std::string base =
        (stage_dir(cfg, "train-cdsvae") / "latest.ckpt").string();
    path = fs::exists(dual) ? dual : base;
  }
  require(fs::exists(path), "convert: no acoustic checkpoint at " + path);
  cdsvae::Model model = cdsvae::unpack_model(load_checkpoint(path));
  features::MelSpectrogram src_mel =
      features::compute_mel(features::load_audio(src));
  features::MelSpectrogram tgt_mel =
      features::compute_mel(features::load_audio(tgt));
  Rng rng(seed);
  features::MelSpectrogram converted =
      pipeline::voice_convert(src_mel, tgt_mel, model, rng);
  features::Waveform wav =
      pipeline::vocode(converted, vocoder_from_config(cfg));
  features::save_wav_pcm16(out_wav, wav);
  features::save_mel(out_wav + ".ufm", converted);
  std::cout << "convert: " << converted.num_frames() << " frames -> "
            << out_wav << "\n";
  return 0;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& trials_path,
                 const std::string& hyp_path,
                 const std::string& acoustic_ckpt) {
  std::string path = acoustic_ckpt;
  if (path.empty()) {
    const std::string dual =
        (stage_dir(cfg, "train-cdsvae-dual") / "latest.ckpt").string();
    const std::string base =
        (stage_dir(cfg, "train-cdsvae") / "latest.ckpt").string();
    path = fs::exists(dual) ? dual : base;
  }
  require(fs::exists(path), "evaluate: no acoustic checkpoint at " + path);
  cdsvae::Model model = cdsvae::unpack_model(load_checkpoint(path));

  const std::string manifest_path =
      cfg.eval_manifest.empty() ? cfg.manifest : cfg.eval_manifest;
  features::DatasetManifest manifest = features::load_manifest(manifest_path);

  std::vector<std::pair<std::string, features::MelSpectrogram>> utts;
  std::vector<std::pair<std::string, std::string>> utt_speaker;
  for (const auto& e : manifest.entries) {
    utts.emplace_back(e.utterance_id,
                      features::compute_mel(features::load_audio(e.audio_path)));
    utt_speaker.emplace_back(e.utterance_id, e.speaker_id);
  }

  eval::TrialList trials;
  Rng rng(cfg.seed + 7);
  if (!trials_path.empty()) {
    trials = eval::load_trials(trials_path);
  } else {
    trials = eval::generate_trials(utt_speaker, 2000, rng);
  }

  const fs::path dir = stage_dir(cfg, "eval");
  fs::create_directories(dir);
  eval::save_trials((dir / "trials.txt").string(), trials);

  eval::EmbeddingMap spk =
      eval::embed_utterances(utts, model, eval::EmbeddingKind::speaker);
  eval::EmbeddingMap con =
      eval::embed_utterances(utts, model, eval::EmbeddingKind::content);
  const double eer_spk = eval::compute_eer(eval::score_trials(spk, trials));
  const double eer_con = eval::compute_eer(eval::score_trials(con, trials));

  json report;
  report["speaker_eer"] = eer_spk;
  report["content_eer"] = eer_con;
  report["trials"] = trials.trials.size();

  // Frame-level phoneme probe over utterances that carry FA.
  std::vector<int> labels;
  std::vector<Mat> feats;
  for (const auto& e : manifest.entries) {
    if (!e.fa_path) continue;
    const auto& mel =
        std::find_if(utts.begin(), utts.end(),
                     [&](const auto& p) { return p.first == e.utterance_id; })
            ->second;
    alignment::AlignmentSequence fa = fit_to_frames(
        alignment::expand_phonemes(alignment::load_fa_file(*e.fa_path)),
        mel.num_frames());
    Mat shared = model.encode_shared(mel);
    Mat mean = model.encode_content(shared).mean;
    feats.push_back(mean);
    for (int t : fa.tokens) labels.push_back(t);
  }
  if (!feats.empty()) {
    Eigen::Index rows = 0;
    for (const auto& f : feats) rows += f.rows();
    Mat all(rows, feats[0].cols());
    Eigen::Index at = 0;
    for (const auto& f : feats) {
      all.middleRows(at, f.rows()) = f;
      at += f.rows();
    }
    eval::ProbeOptions popts;
    popts.seed = cfg.seed + 11;
    report["phoneme_probe_top1"] = eval::phoneme_probe(all, labels, popts);
  }

  // 2-D projection of content embeddings labeled by speaker.
  if (con.size() >= 10) {
    std::map<std::string, std::string> label_map;
    for (const auto& [id, s] : utt_speaker) label_map[id] = s;
    eval::ProjectionOptions popts;
    popts.seed = cfg.seed + 13;
    auto pts = eval::project_embeddings(con, label_map, popts);
    eval::export_projection((dir / "content_projection.tsv").string(), pts);
  }

  // CER/WER over provided hypothesis transcripts.
  if (!hyp_path.empty()) {
    std::ifstream in(hyp_path);
    require(static_cast<bool>(in), "evaluate: cannot open " + hyp_path);
    double cer_sum = 0, wer_sum = 0;
    int n = 0;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      const auto& entry = manifest.find(j.at("utterance_id").get<std::string>());
      require(entry.transcript.has_value(),
              "evaluate: no reference transcript for " + entry.utterance_id);
      eval::ErrorRates r =
          eval::cer_wer(*entry.transcript, j.at("hyp").get<std::string>());
      cer_sum += r.cer;
      wer_sum += r.wer;
      ++n;
    }
    require(n > 0, "evaluate: empty hypothesis file");
    report["cer"] = cer_sum / n;
    report["wer"] = wer_sum / n;
  }

  std::ofstream out(dir / "report.json");
  out << report.dump(2) << "\n";
  std::cout << "evaluate: speaker_eer " << eer_spk << " content_eer "
            << eer_con << " -> " << (dir / "report.json") << "\n";
  write_stage_meta(dir, cfg, json{{"report", report}});
  return 0;
}

int cmd_pipe_vocode(int iterations) {
  std::string input((std::istreambuf_iterator<char>(std::cin)),
                    std::istreambuf_iterator<char>());
  features::MelSpectrogram mel = pipeline::parse_mel_request(input);
  features::Waveform wav =
      pipeline::vocode(mel, pipeline::VocoderHandle::internal(iterations));
  const std::string tmp =
      (fs::temp_directory_path() / str_cat("utts_pipe_", ::getpid(), ".wav"))
          .string();
  features::save_wav_pcm16(tmp, wav);
  std::ifstream in(tmp, std::ios::binary);
  std::cout << in.rdbuf();
  in.close();
  fs::remove(tmp);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"utts: unsupervised TTS built on a conditional disentangled "
               "sequential VAE"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  uint64_t seed_flag = 0;
  bool seed_set = false;
  std::string out_dir_flag;
  app.add_option("--config", config_path, "JSON config file")
      ->envname("UTTS_CONFIG");
  app.add_option("--set", overrides,
                 "override a config value, e.g. --set schedule.epochs=5");
  auto* seed_opt = app.add_option("--seed", seed_flag, "global seed override");
  app.add_option("--out-dir", out_dir_flag, "output directory override");

  auto load_cfg = [&]() {
    std::vector<std::string> all = overrides;
    if (seed_set) all.push_back(str_cat("seed=", seed_flag));
    if (!out_dir_flag.empty()) all.push_back("out_dir=" + out_dir_flag);
    return config::RunConfig::load(config_path, all);
  };

  // prepare
  bool force = false;
  auto* prepare = app.add_subcommand("prepare",
                                     "extract mels, fit the unit codebook, "
                                     "write alignments and duration targets");
  prepare->add_flag("--force", force, "recompute even if artifacts exist");

  // train
  std::string stage, base_ckpt;
  auto* train = app.add_subcommand("train", "train a stage");
  train->add_option("--stage", stage,
                    "cdsvae | cdsvae-dual | duration | fa2ua")
      ->required();
  train->add_option("--base-checkpoint", base_ckpt,
                    "base checkpoint (cdsvae-dual, duration)");

  // synthesize
  pipeline::SynthesisRequest req;
  std::string synth_out, acoustic_ckpt;
  auto* synth = app.add_subcommand("synthesize", "text to waveform");
  synth->add_option("--text", req.text, "input text")->required();
  synth->add_option("--ref-audio", req.reference_audio_path,
                    "reference utterance for the target voice")
      ->required();
  synth->add_option("--seed", req.seed, "sampling seed");
  synth->add_option("--duration-speaker", req.duration_speaker,
                    "speaker-pool id or \"random\"");
  synth->add_flag("--speaker-sample", req.speaker_sample,
                  "sample the speaker latent instead of using the mean");
  synth->add_flag("--word-sil", req.word_boundary_sil,
                  "insert short pauses between words");
  synth->add_option("--out", synth_out, "bundle output directory");
  synth->add_option("--acoustic-checkpoint", acoustic_ckpt,
                    "explicit acoustic checkpoint");

  // convert
  std::string src_wav, tgt_wav, conv_out;
  uint64_t conv_seed = 0;
  auto* convert = app.add_subcommand("convert", "zero-shot voice conversion");
  convert->add_option("--src", src_wav, "source utterance (content)")
      ->required();
  convert->add_option("--tgt", tgt_wav, "target utterance (speaker)")
      ->required();
  convert->add_option("--out", conv_out, "output WAV")->required();
  convert->add_option("--seed", conv_seed, "sampling seed");
  convert->add_option("--acoustic-checkpoint", acoustic_ckpt,
                      "explicit acoustic checkpoint");

  // evaluate
  std::string trials_path, hyp_path;
  auto* evaluate = app.add_subcommand(
      "evaluate", "EER / probe / projection / CER-WER reports");
  evaluate->add_option("--trials", trials_path, "trial list file");
  evaluate->add_option("--hyp", hyp_path,
                       "JSONL {utterance_id, hyp} transcripts to score");
  evaluate->add_option("--acoustic-checkpoint", acoustic_ckpt,
                       "explicit acoustic checkpoint");

  // toy-corpus
  std::string toy_out = "toy_corpus";
  toycorpus::ToyCorpusOptions toy_opts;
  auto* toy = app.add_subcommand("toy-corpus",
                                 "generate the synthetic two-factor corpus");
  toy->add_option("--out", toy_out, "output directory");
  toy->add_option("--speakers", toy_opts.speakers, "speaker count");
  toy->add_option("--train-utts", toy_opts.train_utts_per_speaker,
                  "train utterances per speaker");
  toy->add_option("--test-utts", toy_opts.test_utts_per_speaker,
                  "held-out utterances per speaker");
  toy->add_option("--corpus-seed", toy_opts.seed, "corpus seed");

  // pipe-vocode
  int pipe_iterations = 60;
  auto* pipe = app.add_subcommand(
      "pipe-vocode",
      "read a mel container on stdin, write a PCM16 WAV to stdout");
  pipe->add_option("--iterations", pipe_iterations,
                   "phase-reconstruction iterations");

  try {
    app.parse(argc, argv);
    seed_set = seed_opt->count() > 0;

    if (*prepare) return cmd_prepare(load_cfg(), force);
    if (*train) return cmd_train(load_cfg(), stage, base_ckpt);
    if (*synth) return cmd_synthesize(load_cfg(), req, acoustic_ckpt, synth_out);
    if (*convert)
      return cmd_convert(load_cfg(), src_wav, tgt_wav, conv_out, conv_seed,
                         acoustic_ckpt);
    if (*evaluate)
      return cmd_evaluate(load_cfg(), trials_path, hyp_path, acoustic_ckpt);
    if (*toy) {
      toycorpus::ToyCorpus c = toycorpus::make_toy_corpus(toy_out, toy_opts);
      std::cout << "toy-corpus: " << c.train_manifest_path << "\n";
      return 0;
    }
    if (*pipe) return cmd_pipe_vocode(pipe_iterations);
    throw ValidationError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace utts::cli
