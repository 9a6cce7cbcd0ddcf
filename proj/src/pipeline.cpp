// utts/pipeline.cpp

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

#include "utts/pipeline.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "utts/dsp.hpp"

namespace utts::pipeline {

using nlohmann::json;

VocoderHandle VocoderHandle::internal(int iterations) {
  VocoderHandle v;
  v.kind = VocoderKind::internal_spectral_inversion;
  v.iterations = iterations;
  return v;
}

VocoderHandle VocoderHandle::external_http(const std::string& endpoint,
                                           int timeout_ms) {
  VocoderHandle v;
  v.kind = VocoderKind::external_service;
  v.http_endpoint = endpoint;
  v.timeout_ms = timeout_ms;
  return v;
}

VocoderHandle VocoderHandle::external_pipe(const std::string& command,
                                           int timeout_ms) {
  VocoderHandle v;
  v.kind = VocoderKind::external_service;
  v.pipe_command = command;
  v.timeout_ms = timeout_ms;
  return v;
}

namespace {

void append_u32(std::string& s, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  s.append(b, 4);
}

void append_f32(std::string& s, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  append_u32(s, u);
}

uint32_t take_u32(const std::string& s, size_t& at) {
  require(at + 4 <= s.size(), "mel container: truncated");
  uint32_t v = static_cast<uint8_t>(s[at]) |
               (static_cast<uint8_t>(s[at + 1]) << 8) |
               (static_cast<uint8_t>(s[at + 2]) << 16) |
               (static_cast<uint32_t>(static_cast<uint8_t>(s[at + 3])) << 24);
  at += 4;
  return v;
}

float take_f32(const std::string& s, size_t& at) {
  uint32_t u = take_u32(s, at);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

std::string serialize_mel_request(const features::MelSpectrogram& mel) {
  std::string out;
  out.reserve(20 + 4 * mel.frames.size());
  out.append("UMC1", 4);
  append_u32(out, static_cast<uint32_t>(mel.frames.rows()));
  append_u32(out, static_cast<uint32_t>(mel.frames.cols()));
  append_f32(out, static_cast<float>(mel.frame_rate()));
  append_f32(out, static_cast<float>(mel.window_seconds));
  for (Eigen::Index r = 0; r < mel.frames.rows(); ++r)
    for (Eigen::Index c = 0; c < mel.frames.cols(); ++c)
      append_f32(out, static_cast<float>(mel.frames(r, c)));
  return out;
}

features::MelSpectrogram parse_mel_request(const std::string& bytes) {
  require(bytes.size() >= 20 && bytes.compare(0, 4, "UMC1") == 0,
          "mel container: bad magic");
  size_t at = 4;
  const uint32_t rows = take_u32(bytes, at);
  const uint32_t cols = take_u32(bytes, at);
  const float rate = take_f32(bytes, at);
  const float window = take_f32(bytes, at);
  require(rows > 0 && cols > 0 && rate > 0, "mel container: bad header");
  features::MelSpectrogram mel;
  mel.hop_seconds = 1.0 / rate;
  mel.window_seconds = window;
  mel.frames.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) mel.frames(r, c) = take_f32(bytes, at);
  return mel;
}

namespace {

// Iterative phase reconstruction of a log-mel through the pseudo-inverse
// filterbank.
features::Waveform invert_mel(const features::MelSpectrogram& mel,
                              int iterations) {
  const features::MelConfig mc;  // matches the analysis configuration
  require(mel.frames.cols() == mc.n_mels,
          "vocode: expected 80-bin log-mel input");
  static thread_local Mat pinv;  // cached across calls
  if (pinv.rows() == 0) {
    Mat fb = dsp::mel_filterbank(mc.n_mels, mc.n_fft, mc.sample_rate, mc.fmin,
                                 mc.fmax);
    pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  }
  Mat mel_power = mel.frames.array().exp().matrix();
  Mat power = (mel_power * pinv.transpose()).cwiseMax(0.0);  // T x bins
  Mat magnitude = power.cwiseSqrt();

  dsp::StftConfig sc{mc.n_fft, mc.hop};
  Mat phase = Mat::Zero(magnitude.rows(), magnitude.cols());
  std::vector<double> wav;
  for (int it = 0; it < std::max(1, iterations); ++it) {
    wav = dsp::istft(magnitude, phase, sc);
    dsp::Stft s = dsp::stft(wav, sc);
    phase = s.phase;
  }
  wav = dsp::istft(magnitude, phase, sc);

  features::Waveform w;
  w.sample_rate = mc.sample_rate;
  w.samples = std::move(wav);
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : w.samples) s /= peak;
  return w;
}

features::Waveform parse_wav_bytes(const std::string& bytes,
                                   const std::string& backend) {
  // Round-trip through the WAV reader via a temp buffer file.
  const std::string tmp =
      (std::filesystem::temp_directory_path() /
       str_cat("utts_vocoder_", ::getpid(), "_",
               fnv1a64(bytes.substr(0, std::min<size_t>(64, bytes.size()))),
               ".wav"))
          .string();
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    features::Waveform w = features::load_audio(tmp);
    std::filesystem::remove(tmp);
    return w;
  } catch (const std::exception& e) {
    std::filesystem::remove(tmp);
    throw RuntimeFailure(str_cat("vocode(", backend,
                                 "): invalid WAV response: ", e.what()));
  }
}

features::Waveform vocode_http(const features::MelSpectrogram& mel,
                               const VocoderHandle& v) {
  httplib::Client client(v.http_endpoint);
  client.set_connection_timeout(0, v.timeout_ms * 1000);
  client.set_read_timeout(v.timeout_ms / 1000, (v.timeout_ms % 1000) * 1000);
  const std::string body = serialize_mel_request(mel);
  auto res = client.Post("/vocode", body, "application/octet-stream");
  if (!res)
    throw RuntimeFailure(
        str_cat("vocode(external http ", v.http_endpoint,
                "): request failed: ", httplib::to_string(res.error())));
  if (res->status != 200)
    throw RuntimeFailure(str_cat("vocode(external http ", v.http_endpoint,
                                 "): status ", res->status));
  return parse_wav_bytes(res->body, "external http");
}

features::Waveform vocode_pipe(const features::MelSpectrogram& mel,
                               const VocoderHandle& v) {
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0)
    throw RuntimeFailure("vocode(external pipe): cannot create pipes");
  const pid_t pid = fork();
  if (pid < 0) throw RuntimeFailure("vocode(external pipe): fork failed");
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", v.pipe_command.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);

  const std::string body = serialize_mel_request(mel);
  size_t written = 0;
  while (written < body.size()) {
    ssize_t n = write(to_child[1], body.data() + written,
                      body.size() - written);
    if (n <= 0) break;
    written += static_cast<size_t>(n);
  }
  close(to_child[1]);

  std::string response;
  char buf[65536];
  ssize_t n;
  while ((n = read(from_child[0], buf, sizeof(buf))) > 0)
    response.append(buf, static_cast<size_t>(n));
  close(from_child[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw RuntimeFailure(str_cat("vocode(external pipe \"", v.pipe_command,
                                 "\"): command failed with status ",
                                 WIFEXITED(status) ? WEXITSTATUS(status) : -1));
  if (written < body.size())
    throw RuntimeFailure("vocode(external pipe): request not fully written");
  return parse_wav_bytes(response, "external pipe");
}

}  // namespace

features::Waveform vocode(const features::MelSpectrogram& mel,
                          const VocoderHandle& v) {
  require(mel.num_frames() >= 1, "vocode: empty mel");
  require(all_finite(mel.frames), "vocode: non-finite mel");
  if (v.kind == VocoderKind::internal_spectral_inversion)
    return invert_mel(mel, v.iterations);
  require(!v.http_endpoint.empty() || !v.pipe_command.empty(),
          "vocode: external backend has no endpoint or command");
  // No silent fallback: an unreachable external backend is an error.
  return v.http_endpoint.empty() ? vocode_pipe(mel, v) : vocode_http(mel, v);
}

features::MelSpectrogram voice_convert(const features::MelSpectrogram& src_mel,
                                       const features::MelSpectrogram& tgt_mel,
                                       const cdsvae::Model& model, Rng& rng,
                                       bool speaker_sample) {
  Mat tgt_shared = model.encode_shared(tgt_mel);
  cdsvae::GaussianSeq q_s = model.encode_speaker(tgt_shared);
  cdsvae::LatentSample zs;
  if (speaker_sample) {
    zs = cdsvae::reparameterize(q_s, rng, cdsvae::LatentSource::posterior_speaker);
  } else {
    zs.values = q_s.mean;
    zs.source = cdsvae::LatentSource::posterior_speaker;
  }
  Mat src_shared = model.encode_shared(src_mel);
  cdsvae::GaussianSeq q_c = model.encode_content(src_shared);
  cdsvae::LatentSample zc =
      cdsvae::reparameterize(q_c, rng, cdsvae::LatentSource::posterior_content);
  features::MelSpectrogram out = model.decode(zs, zc);
  out.hop_seconds = src_mel.hop_seconds;
  out.window_seconds = src_mel.window_seconds;
  return out;
}

features::MelSpectrogram generate_from_alignment(
    const alignment::AlignmentSequence& a,
    const features::MelSpectrogram& tgt_mel, const cdsvae::Model& model,
    Rng& rng, bool speaker_sample) {
  require(a.length() >= 1, "generate_from_alignment: empty alignment");
  Mat tgt_shared = model.encode_shared(tgt_mel);
  cdsvae::GaussianSeq q_s = model.encode_speaker(tgt_shared);
  cdsvae::LatentSample zs;
  if (speaker_sample) {
    zs = cdsvae::reparameterize(q_s, rng, cdsvae::LatentSource::posterior_speaker);
  } else {
    zs.values = q_s.mean;
    zs.source = cdsvae::LatentSource::posterior_speaker;
  }
  cdsvae::PriorOutput prior = model.encode_prior(a, {});
  cdsvae::LatentSample zc = cdsvae::reparameterize(
      prior.gaussian, rng, cdsvae::LatentSource::prior_content);
  features::MelSpectrogram out = model.decode(zs, zc);
  out.hop_seconds = tgt_mel.hop_seconds;
  out.window_seconds = tgt_mel.window_seconds;
  return out;
}

SynthesisResult synthesize(const SynthesisRequest& req, const Models& models,
                           const VocoderHandle& vocoder) {
  require(models.acoustic && models.duration && models.fa2ua &&
              models.lexicon && models.speaker_pool,
          "synthesize: all models must be provided");
  require(!req.text.empty(), "synthesize: empty text");

  Rng rng(req.seed);
  SynthesisResult res;
  res.phonemes =
      frontend::text_to_phonemes(req.text, *models.lexicon,
                                 req.word_boundary_sil);

  Vec dur_speaker;
  if (req.duration_speaker == "random") {
    dur_speaker = models.speaker_pool->random(rng);
  } else {
    dur_speaker = models.speaker_pool->get(req.duration_speaker);
  }
  Mat spk_row = dur_speaker.transpose();
  res.log_durations =
      frontend::predict_durations(res.phonemes, spk_row, *models.duration);
  res.durations.phonemes = res.phonemes.ids;
  res.durations.durations = frontend::durations_to_frames(res.log_durations);

  res.fa = alignment::expand_phonemes(res.durations);
  res.ua = frontend::fa2ua_predict(res.fa, *models.fa2ua);

  features::Waveform ref = features::load_audio(req.reference_audio_path);
  features::MelSpectrogram ref_mel = features::compute_mel(ref);
  res.mel = generate_from_alignment(res.ua, ref_mel, *models.acoustic, rng,
                                    req.speaker_sample);
  try {
    res.waveform = vocode(res.mel, vocoder);
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(str_cat("synthesize[vocoder stage]: ", e.what()));
  }
  return res;
}

void save_alignment(const std::string& path,
                    const alignment::AlignmentSequence& a) {
  std::ofstream out(path);
  if (!out) throw IoError("save_alignment: cannot open " + path);
  out << (a.kind == alignment::Kind::FA ? "FA" : "UA") << " " << a.vocab_size
      << "\n";
  for (int i = 0; i < a.length(); ++i)
    out << a.tokens[static_cast<size_t>(i)]
        << (i + 1 == a.length() ? "\n" : " ");
}

alignment::AlignmentSequence load_alignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_alignment: cannot open " + path);
  std::string kind;
  int vocab = 0;
  in >> kind >> vocab;
  require(kind == "FA" || kind == "UA", "load_alignment: bad header in " + path);
  alignment::AlignmentSequence a;
  a.kind = kind == "FA" ? alignment::Kind::FA : alignment::Kind::UA;
  a.vocab_size = vocab;
  int tok;
  while (in >> tok) a.tokens.push_back(tok);
  a.validate();
  return a;
}

void write_bundle(const std::filesystem::path& dir, const SynthesisResult& res,
                  const SynthesisRequest& req, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  save_alignment((dir / "fa.txt").string(), res.fa);
  save_alignment((dir / "ua.txt").string(), res.ua);
  features::save_mel((dir / "mel.ufm").string(), res.mel);
  features::save_wav_pcm16((dir / "synth.wav").string(), res.waveform);
  alignment::save_fa_file((dir / "durations.txt").string(), res.durations);

  json meta;
  meta["text"] = req.text;
  meta["reference_audio"] = req.reference_audio_path;
  meta["duration_speaker"] = req.duration_speaker;
  meta["seed"] = req.seed;
  meta["speaker_sample"] = req.speaker_sample;
  meta["phoneme_ids"] = res.phonemes.ids;
  meta["mel_frames"] = res.mel.num_frames();
  meta["wav_samples"] = res.waveform.samples.size();
  if (!config_hash.empty()) meta["config_hash"] = config_hash;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace utts::pipeline
