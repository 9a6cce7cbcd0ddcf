// utts/features.cpp

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

#include "utts/features.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "utts/dsp.hpp"

namespace utts::features {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 2);
}

float read_f32(std::istream& in) {
  uint32_t u = read_u32(in);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_f32(std::ostream& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  write_u32(out, u);
}

}  // namespace

Waveform load_audio(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_audio: cannot open " + path);

  char riff[4], wave[4];
  in.read(riff, 4);
  if (!in || std::strncmp(riff, "RIFF", 4) != 0)
    throw ValidationError("load_audio: not a RIFF file: " + path);
  read_u32(in);  // chunk size
  in.read(wave, 4);
  if (!in || std::strncmp(wave, "WAVE", 4) != 0)
    throw ValidationError("load_audio: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<double> mono;
  bool got_fmt = false, got_data = false;
  while (in && !got_data) {
    char tag[4];
    in.read(tag, 4);
    if (!in) break;
    uint32_t size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      require(got_fmt, "load_audio: data chunk before fmt in " + path);
      require(channels > 0, "load_audio: zero channels in " + path);
      uint32_t frame_bytes = channels * (bits / 8);
      require(frame_bytes > 0, "load_audio: bad sample size in " + path);
      uint32_t frames = size / frame_bytes;
      mono.resize(frames);
      for (uint32_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
          double v = 0.0;
          if (format == 1 && bits == 16) {
            int16_t s = static_cast<int16_t>(read_u16(in));
            v = s / 32768.0;
          } else if (format == 3 && bits == 32) {
            v = read_f32(in);
          } else {
            throw ValidationError(
                str_cat("load_audio: unsupported format (fmt=", format,
                        ", bits=", bits, ") in ", path));
          }
          acc += v;
        }
        mono[f] = acc / channels;
      }
      got_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  require(got_data, "load_audio: no data chunk in " + path);
  require(!mono.empty(), "load_audio: zero-length audio in " + path);

  Waveform w;
  w.sample_rate = 16000;
  w.samples = rate == 16000 ? std::move(mono)
                            : dsp::resample(mono, rate, 16000.0);
  require(!w.samples.empty(), "load_audio: empty after resampling " + path);
  for (double s : w.samples)
    if (!std::isfinite(s))
      throw ValidationError("load_audio: non-finite sample in " + path);
  return w;
}

void save_wav_pcm16(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_wav: cannot open " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : w.samples) {
    double clamped = std::clamp(s, -1.0, 1.0);
    int16_t q = static_cast<int16_t>(std::lround(clamped * 32767.0));
    write_u16(out, static_cast<uint16_t>(q));
  }
  if (!out) throw IoError("save_wav: write failed for " + path);
}

MelSpectrogram compute_mel(const Waveform& w, const MelConfig& cfg) {
  require(w.sample_rate == cfg.sample_rate,
          str_cat("compute_mel: expected ", cfg.sample_rate, " Hz, got ",
                  w.sample_rate));
  require(!w.samples.empty(), "compute_mel: empty waveform");

  dsp::StftConfig sc{cfg.n_fft, cfg.hop};
  dsp::Stft s = dsp::stft(w.samples, sc);
  static thread_local Mat fb;  // cache: config is fixed per process in practice
  if (fb.rows() != cfg.n_mels || fb.cols() != cfg.n_fft / 2 + 1)
    fb = dsp::mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin,
                             cfg.fmax);
  Mat power = s.magnitude.cwiseProduct(s.magnitude);
  Mat mel_power = power * fb.transpose();  // T x n_mels
  MelSpectrogram mel;
  mel.hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;
  mel.window_seconds = static_cast<double>(cfg.n_fft) / cfg.sample_rate;
  mel.frames = mel_power.unaryExpr(
      [](double p) { return std::log(std::max(p, kMelPowerFloor)); });
  return mel;
}

FeatureMatrix cepstral_proxy(const MelSpectrogram& mel) {
  const int n_mels = static_cast<int>(mel.frames.cols());
  Mat dct = dsp::dct_matrix(14, n_mels);
  Mat coeffs = mel.frames * dct.transpose();  // T x 14
  FeatureMatrix fm;
  fm.frames = coeffs.rightCols(13);  // drop the energy component
  fm.frame_rate = mel.frame_rate();
  return fm;
}

FeatureMatrix load_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_feature_matrix: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "UFM1", 4) != 0)
    throw ValidationError("load_feature_matrix: bad magic in " + path);
  const uint32_t rows = read_u32(in);
  const uint32_t cols = read_u32(in);
  const float rate = read_f32(in);
  require(rows > 0 && cols > 0,
          "load_feature_matrix: empty matrix in " + path);
  require(rate > 0, "load_feature_matrix: frame_rate must be positive");
  FeatureMatrix fm;
  fm.frame_rate = rate;
  fm.frames.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      float v = read_f32(in);
      if (!in)
        throw ValidationError("load_feature_matrix: truncated payload in " +
                              path);
      if (!std::isfinite(v))
        throw ValidationError(
            str_cat("load_feature_matrix: non-finite value at (", r, ",", c,
                    ") in ", path));
      fm.frames(r, c) = v;
    }
  return fm;
}

void save_feature_matrix(const std::string& path, const FeatureMatrix& fm) {
  require(all_finite(fm.frames), "save_feature_matrix: non-finite entries");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_feature_matrix: cannot open " + path);
  out.write("UFM1", 4);
  write_u32(out, static_cast<uint32_t>(fm.frames.rows()));
  write_u32(out, static_cast<uint32_t>(fm.frames.cols()));
  write_f32(out, static_cast<float>(fm.frame_rate));
  for (Eigen::Index r = 0; r < fm.frames.rows(); ++r)
    for (Eigen::Index c = 0; c < fm.frames.cols(); ++c)
      write_f32(out, static_cast<float>(fm.frames(r, c)));
  if (!out) throw IoError("save_feature_matrix: write failed for " + path);
}

void save_mel(const std::string& path, const MelSpectrogram& mel) {
  FeatureMatrix fm;
  fm.frames = mel.frames;
  fm.frame_rate = mel.frame_rate();
  save_feature_matrix(path, fm);
}

MelSpectrogram load_mel(const std::string& path) {
  FeatureMatrix fm = load_feature_matrix(path);
  require(fm.dim() == 80, "load_mel: expected 80 mel bins");
  MelSpectrogram mel;
  mel.frames = fm.frames;
  mel.hop_seconds = 1.0 / fm.frame_rate;
  return mel;
}

const ManifestEntry& DatasetManifest::find(
    const std::string& utterance_id) const {
  for (const auto& e : entries)
    if (e.utterance_id == utterance_id) return e;
  throw ValidationError("manifest: unknown utterance " + utterance_id);
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).string();
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  std::vector<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(
          str_cat("load_manifest: line ", lineno, ": ", e.what()));
    }
    ManifestEntry e;
    e.utterance_id = j.at("utterance_id").get<std::string>();
    e.speaker_id = j.at("speaker_id").get<std::string>();
    e.audio_path = resolve(base, j.at("audio_path").get<std::string>());
    if (j.contains("fa_path"))
      e.fa_path = resolve(base, j.at("fa_path").get<std::string>());
    if (j.contains("ssl_feature_path"))
      e.ssl_feature_path =
          resolve(base, j.at("ssl_feature_path").get<std::string>());
    if (j.contains("transcript"))
      e.transcript = j.at("transcript").get<std::string>();

    if (std::find(seen_ids.begin(), seen_ids.end(), e.utterance_id) !=
        seen_ids.end())
      throw ValidationError("load_manifest: duplicate utterance_id " +
                            e.utterance_id);
    seen_ids.push_back(e.utterance_id);
    require(fs::exists(e.audio_path),
            "load_manifest: missing audio " + e.audio_path);
    if (e.fa_path)
      require(fs::exists(*e.fa_path), "load_manifest: missing FA " + *e.fa_path);
    if (e.ssl_feature_path)
      require(fs::exists(*e.ssl_feature_path),
              "load_manifest: missing features " + *e.ssl_feature_path);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("save_manifest: cannot open " + path);
  for (const auto& e : manifest.entries) {
    json j;
    j["utterance_id"] = e.utterance_id;
    j["speaker_id"] = e.speaker_id;
    j["audio_path"] = e.audio_path;
    if (e.fa_path) j["fa_path"] = *e.fa_path;
    if (e.ssl_feature_path) j["ssl_feature_path"] = *e.ssl_feature_path;
    if (e.transcript) j["transcript"] = *e.transcript;
    out << j.dump() << "\n";
  }
}

CropResult crop_segment(const MelSpectrogram& mel, int length, Rng& rng) {
  require(length >= 1, "crop_segment: length must be >= 1");
  const int t = mel.num_frames();
  CropResult res;
  res.mel.hop_seconds = mel.hop_seconds;
  res.mel.window_seconds = mel.window_seconds;
  if (t >= length) {
    res.start = t == length
                    ? 0
                    : static_cast<int>(rng.uniform_int(
                          static_cast<uint64_t>(t - length) + 1));
    res.valid_frames = length;
    res.mel.frames = mel.frames.middleRows(res.start, length);
  } else {
    res.start = 0;
    res.valid_frames = t;
    res.mel.frames =
        Mat::Constant(length, mel.frames.cols(), log_floor());
    res.mel.frames.topRows(t) = mel.frames;
  }
  return res;
}

}  // namespace utts::features
