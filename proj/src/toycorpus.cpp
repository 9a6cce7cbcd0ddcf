// utts/toycorpus.cpp

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

#include "utts/toycorpus.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "utts/alignment.hpp"

namespace utts::toycorpus {

namespace fs = std::filesystem;

namespace {

constexpr int kHop = 256;
constexpr int kSampleRate = 16000;

struct ToyPhone {
  std::string symbol;
  double f1 = 0.0, f2 = 0.0;  // formant-like sinusoid pair; 0 = noise band
  double noise_lo = 0.0, noise_hi = 0.0;
  double gain = 0.25;
};

const std::vector<ToyPhone>& toy_phones() {
  static const std::vector<ToyPhone> phones{
      {"AA1", 700, 1220, 0, 0, 0.28},  {"IY1", 310, 2300, 0, 0, 0.26},
      {"UW1", 370, 870, 0, 0, 0.27},   {"EH1", 580, 1800, 0, 0, 0.26},
      {"OW1", 500, 1000, 0, 0, 0.27},  {"M", 260, 1100, 0, 0, 0.18},
      {"S", 0, 0, 4500, 7000, 0.12},   {"T", 0, 0, 2800, 5200, 0.12},
  };
  return phones;
}

struct ToySpeaker {
  double f0;
  double tilt;   // relative strength of the upper formant
  double voice;  // strength of the fundamental
};

ToySpeaker speaker_profile(int idx) {
  const double f0s[] = {105.0, 145.0, 195.0, 255.0, 120.0, 170.0, 220.0, 90.0};
  const double tilts[] = {0.55, 0.8, 1.05, 1.35, 0.65, 0.95, 1.2, 0.5};
  const double voices[] = {0.32, 0.26, 0.2, 0.15, 0.3, 0.22, 0.18, 0.34};
  const int i = idx % 8;
  return {f0s[i], tilts[i], voices[i]};
}

class PhaseBank {
 public:
  double advance(double freq) {
    double& phase = phases_[freq];
    phase += 2.0 * M_PI * freq / kSampleRate;
    if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
    return phase;
  }

 private:
  std::map<double, double> phases_;
};

}  // namespace

const std::vector<std::string>& toy_words() {
  static const std::vector<std::string> words{"AA", "EE", "OO", "EH",
                                              "OH", "MM", "SS", "TT"};
  return words;
}

ToyCorpus make_toy_corpus(const fs::path& dir, const ToyCorpusOptions& opts) {
  require(opts.speakers >= 2, "toy corpus: need at least 2 speakers");
  fs::create_directories(dir / "wavs");
  fs::create_directories(dir / "fa");

  // Lexicon: toy word -> one monophone each.
  const auto& phones = toy_phones();
  const auto& words = toy_words();
  require(words.size() == phones.size(), "toy corpus: word/phone mismatch");
  std::map<std::string, std::vector<std::string>> entries;
  for (size_t i = 0; i < words.size(); ++i)
    entries[words[i]] = {phones[i].symbol};
  frontend::Lexicon lexicon(frontend::default_phoneme_symbols(), entries);

  ToyCorpus out;
  out.root = dir;
  out.lexicon_path = (dir / "lexicon.txt").string();
  out.symbols_path = (dir / "phones.txt").string();
  lexicon.save(out.lexicon_path, out.symbols_path);

  const int sil_id = lexicon.symbol_id("SIL");
  Rng rng(opts.seed);

  features::DatasetManifest train_manifest, test_manifest;
  for (int s = 0; s < opts.speakers; ++s) {
    const ToySpeaker spk = speaker_profile(s);
    const std::string speaker_id = str_cat("spk", s);
    const int total = opts.train_utts_per_speaker + opts.test_utts_per_speaker;
    for (int u = 0; u < total; ++u) {
      const bool is_test = u >= opts.train_utts_per_speaker;
      const std::string utt_id = str_cat(speaker_id, "_u", u);

      // Word sequence and frame-exact phone durations.
      const int n_words = opts.min_words +
                          static_cast<int>(rng.uniform_int(
                              opts.max_words - opts.min_words + 1));
      std::vector<size_t> word_idx(n_words);
      std::string sentence;
      for (int w = 0; w < n_words; ++w) {
        word_idx[w] = rng.uniform_int(words.size());
        sentence += (w ? " " : "") + words[word_idx[w]];
      }
      alignment::PhonemeDurations pd;
      pd.phonemes.push_back(sil_id);
      pd.durations.push_back(4 + static_cast<int>(rng.uniform_int(4)));
      for (int w = 0; w < n_words; ++w) {
        pd.phonemes.push_back(
            lexicon.symbol_id(phones[word_idx[w]].symbol));
        pd.durations.push_back(8 + static_cast<int>(rng.uniform_int(9)));
      }
      pd.phonemes.push_back(sil_id);
      pd.durations.push_back(4 + static_cast<int>(rng.uniform_int(4)));

      // Render: each frame is kHop samples; phases are continuous across
      // frames so there are no clicks at boundaries.
      features::Waveform wav;
      wav.sample_rate = kSampleRate;
      PhaseBank bank;
      Rng noise_rng = rng.fork(u);
      // Fixed noise bank per utterance for the fricative bands.
      std::vector<std::pair<double, double>> noise_bank;
      for (int i = 0; i < 24; ++i)
        noise_bank.emplace_back(2500.0 + noise_rng.uniform() * 5000.0,
                                noise_rng.uniform() * 2.0 * M_PI);
      for (size_t p = 0; p < pd.phonemes.size(); ++p) {
        const std::string& sym = lexicon.symbol(pd.phonemes[p]);
        const ToyPhone* phone = nullptr;
        for (const auto& tp : toy_phones())
          if (tp.symbol == sym) phone = &tp;
        const int n_samples = pd.durations[p] * kHop;
        for (int i = 0; i < n_samples; ++i) {
          double v = 0.0;
          if (phone == nullptr) {
            // Silence: faint hiss well below the speech level.
            v = 0.002 * std::sin(bank.advance(6100.0)) *
                std::sin(bank.advance(37.0));
          } else if (phone->f1 > 0) {
            v += phone->gain * std::sin(bank.advance(phone->f1));
            v += phone->gain * spk.tilt * std::sin(bank.advance(phone->f2));
            v += spk.voice * std::sin(bank.advance(spk.f0));
            v += 0.5 * spk.voice * std::sin(bank.advance(2.0 * spk.f0));
          } else {
            for (const auto& [freq, phase0] : noise_bank) {
              if (freq >= phone->noise_lo && freq <= phone->noise_hi)
                v += phone->gain / 3.0 *
                     std::sin(phase0 + bank.advance(freq));
            }
            v += 0.3 * spk.voice * std::sin(bank.advance(spk.f0));
          }
          wav.samples.push_back(v);
        }
      }

      const std::string wav_rel = str_cat("wavs/", utt_id, ".wav");
      const std::string fa_rel = str_cat("fa/", utt_id, ".fa");
      features::save_wav_pcm16((dir / wav_rel).string(), wav);
      alignment::save_fa_file((dir / fa_rel).string(), pd);

      features::ManifestEntry e;
      e.utterance_id = utt_id;
      e.speaker_id = speaker_id;
      e.audio_path = wav_rel;
      e.fa_path = fa_rel;
      e.transcript = sentence;
      (is_test ? test_manifest : train_manifest).entries.push_back(e);
      if (is_test) out.test_sentences.push_back(sentence);
    }
  }

  out.train_manifest_path = (dir / "train_manifest.jsonl").string();
  out.test_manifest_path = (dir / "test_manifest.jsonl").string();
  features::save_manifest(out.train_manifest_path, train_manifest);
  features::save_manifest(out.test_manifest_path, test_manifest);
  return out;
}

}  // namespace utts::toycorpus
