#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "utts/dsp.hpp"
#include "utts/features.hpp"

using namespace utts;
using namespace utts::features;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  fs::path d = fs::temp_directory_path() / "utts_test_features";
  fs::create_directories(d);
  return d;
}

Waveform sine(double freq, double seconds, int rate = 16000,
              double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  for (int i = 0; i < n; ++i)
    w.samples.push_back(amp * std::sin(2.0 * M_PI * freq * i / rate));
  return w;
}

// Minimal WAV writer with explicit rate/channels/format for loader tests.
void write_wav(const std::string& path, const std::vector<float>& interleaved,
               int rate, int channels, bool float32) {
  std::ofstream out(path, std::ios::binary);
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  auto w16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
  const uint32_t bytes_per = float32 ? 4 : 2;
  const uint32_t data_bytes =
      static_cast<uint32_t>(interleaved.size()) * bytes_per;
  out.write("RIFF", 4);
  w32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  w32(16);
  w16(float32 ? 3 : 1);
  w16(static_cast<uint16_t>(channels));
  w32(static_cast<uint32_t>(rate));
  w32(static_cast<uint32_t>(rate) * channels * bytes_per);
  w16(static_cast<uint16_t>(channels * bytes_per));
  w16(static_cast<uint16_t>(bytes_per * 8));
  out.write("data", 4);
  w32(data_bytes);
  for (float v : interleaved) {
    if (float32) {
      out.write(reinterpret_cast<char*>(&v), 4);
    } else {
      int16_t q = static_cast<int16_t>(std::lround(v * 32767.0));
      out.write(reinterpret_cast<char*>(&q), 2);
    }
  }
}

}  // namespace

TEST_CASE("load_audio: 16 kHz mono identity") {
  const auto p = (tmp_dir() / "mono16k.wav").string();
  Waveform w = sine(440.0, 1.0);
  save_wav_pcm16(p, w);
  Waveform r = load_audio(p);
  CHECK(r.sample_rate == 16000);
  CHECK(r.samples.size() == 16000);
}

TEST_CASE("load_audio: 48 kHz stereo resamples to one third length") {
  const auto p = (tmp_dir() / "stereo48k.wav").string();
  std::vector<float> interleaved;
  for (int i = 0; i < 48000; ++i) {
    float v = 0.4f * std::sin(2.0 * M_PI * 300.0 * i / 48000.0);
    interleaved.push_back(v);
    interleaved.push_back(v);
  }
  write_wav(p, interleaved, 48000, 2, false);
  Waveform r = load_audio(p);
  CHECK(r.sample_rate == 16000);
  CHECK(r.samples.size() == 16000);  // exactly length / 3
}

TEST_CASE("load_audio: float32 files are accepted") {
  const auto p = (tmp_dir() / "f32.wav").string();
  std::vector<float> samples(8000, 0.0f);
  for (int i = 0; i < 8000; ++i)
    samples[i] = 0.3f * std::sin(2.0 * M_PI * 200.0 * i / 16000.0);
  write_wav(p, samples, 16000, 1, true);
  Waveform r = load_audio(p);
  CHECK(r.samples.size() == 8000);
  CHECK(r.samples[100] == doctest::Approx(samples[100]).epsilon(1e-6));
}

TEST_CASE("load_audio error paths") {
  CHECK_THROWS_AS(load_audio("/nonexistent/file.wav"), IoError);
  const auto p = (tmp_dir() / "empty.wav").string();
  write_wav(p, {}, 16000, 1, false);
  CHECK_THROWS_AS(load_audio(p), ValidationError);
}

TEST_CASE("compute_mel frame-count formula") {
  // T = ceil(len / 256) with center padding.
  CHECK(compute_mel(sine(440, 1.0)).num_frames() == 63);  // ceil(16000/256)
  Waveform w256 = sine(440, 1.0);
  w256.samples.resize(256);
  CHECK(compute_mel(w256).num_frames() == 1);
  Waveform w257 = sine(440, 1.0);
  w257.samples.resize(257);
  CHECK(compute_mel(w257).num_frames() == 2);
  for (int len : {1, 100, 255, 511, 1000, 4097}) {
    Waveform w = sine(300, 1.0);
    w.samples.resize(static_cast<size_t>(len));
    CHECK(compute_mel(w).num_frames() == (len + 255) / 256);
  }
}

TEST_CASE("compute_mel rejects wrong sample rate and empty input") {
  Waveform w = sine(440, 0.5, 22050);
  CHECK_THROWS_AS(compute_mel(w), ValidationError);
  Waveform empty;
  CHECK_THROWS_AS(compute_mel(empty), ValidationError);
}

TEST_CASE("compute_mel: silence hits the log floor everywhere") {
  Waveform w;
  w.samples.assign(4096, 0.0);
  MelSpectrogram mel = compute_mel(w);
  CHECK(mel.frames.rows() == 16);
  CHECK(mel.frames.cols() == 80);
  CHECK((mel.frames.array() == log_floor()).all());
}

TEST_CASE("compute_mel determinism is bitwise") {
  Waveform w = sine(523.25, 0.7);
  MelSpectrogram a = compute_mel(w);
  MelSpectrogram b = compute_mel(w);
  CHECK(a.frames == b.frames);
}

TEST_CASE("compute_mel energy monotonicity under gain") {
  Waveform w = sine(440, 0.4, 16000, 0.2);
  MelSpectrogram a = compute_mel(w);
  Waveform w2 = w;
  for (double& s : w2.samples) s *= 3.0;
  MelSpectrogram b = compute_mel(w2);
  CHECK((b.frames.array() >= a.frames.array()).all());
}

TEST_CASE("mel peak lands in the right band") {
  MelSpectrogram mel = compute_mel(sine(1000.0, 0.5));
  Eigen::Index peak_bin;
  mel.frames.row(15).maxCoeff(&peak_bin);
  // Centers of the triangular filters around the peak must bracket 1 kHz
  // within one bin.
  const Mat fb = dsp::mel_filterbank(80, 1024, 16000, 0.0, 8000.0);
  Eigen::Index fft_peak;
  fb.row(peak_bin).maxCoeff(&fft_peak);
  const double center_hz = fft_peak * 16000.0 / 1024.0;
  CHECK(std::abs(center_hz - 1000.0) < 120.0);
}

TEST_CASE("cepstral proxy shape and rate") {
  FeatureMatrix fm = cepstral_proxy(compute_mel(sine(440, 1.0)));
  CHECK(fm.num_frames() == 63);
  CHECK(fm.dim() == 13);
  CHECK(fm.frame_rate == doctest::Approx(62.5));
}

TEST_CASE("feature matrix container round-trip and validation") {
  const auto p = (tmp_dir() / "feat.ufm").string();
  FeatureMatrix fm;
  fm.frames = Mat::Random(100, 768);
  fm.frame_rate = 50.0;
  save_feature_matrix(p, fm);
  FeatureMatrix r = load_feature_matrix(p);
  CHECK(r.num_frames() == 100);
  CHECK(r.dim() == 768);
  CHECK(r.frame_rate == doctest::Approx(50.0));
  CHECK((r.frames - fm.frames).cwiseAbs().maxCoeff() < 1e-6);  // f32 payload

  SUBCASE("NaN payload is rejected") {
    std::ofstream out(p, std::ios::binary);
    out.write("UFM1", 4);
    uint32_t rows = 1, cols = 2;
    float rate = 50.0f, nan = std::nanf(""), one = 1.0f;
    out.write(reinterpret_cast<char*>(&rows), 4);
    out.write(reinterpret_cast<char*>(&cols), 4);
    out.write(reinterpret_cast<char*>(&rate), 4);
    out.write(reinterpret_cast<char*>(&one), 4);
    out.write(reinterpret_cast<char*>(&nan), 4);
    out.close();
    CHECK_THROWS_AS(load_feature_matrix(p), ValidationError);
  }
  SUBCASE("truncated payload is rejected") {
    std::ofstream out(p, std::ios::binary);
    out.write("UFM1", 4);
    uint32_t rows = 10, cols = 10;
    float rate = 50.0f;
    out.write(reinterpret_cast<char*>(&rows), 4);
    out.write(reinterpret_cast<char*>(&cols), 4);
    out.write(reinterpret_cast<char*>(&rate), 4);
    out.close();
    CHECK_THROWS_AS(load_feature_matrix(p), ValidationError);
  }
}

TEST_CASE("crop_segment") {
  Rng rng(5);
  MelSpectrogram mel;
  mel.frames = Mat::Random(200, 80);

  SUBCASE("long input: random contiguous window") {
    for (int i = 0; i < 20; ++i) {
      CropResult r = crop_segment(mel, 100, rng);
      CHECK(r.mel.frames.rows() == 100);
      CHECK(r.valid_frames == 100);
      CHECK(r.start >= 0);
      CHECK(r.start <= 100);
      CHECK(r.mel.frames == mel.frames.middleRows(r.start, 100));
    }
  }
  SUBCASE("exact length: identity") {
    MelSpectrogram m2;
    m2.frames = mel.frames.topRows(100);
    CropResult r = crop_segment(m2, 100, rng);
    CHECK(r.start == 0);
    CHECK(r.mel.frames == m2.frames);
  }
  SUBCASE("short input: right padding at the log floor") {
    MelSpectrogram m2;
    m2.frames = mel.frames.topRows(60);
    CropResult r = crop_segment(m2, 100, rng);
    CHECK(r.mel.frames.rows() == 100);
    CHECK(r.valid_frames == 60);
    CHECK(r.mel.frames.topRows(60) == m2.frames);
    CHECK((r.mel.frames.bottomRows(40).array() == log_floor()).all());
  }
  SUBCASE("zero length rejected") {
    CHECK_THROWS_AS(crop_segment(mel, 0, rng), ValidationError);
  }
}

TEST_CASE("manifest round-trip and validation") {
  const fs::path d = tmp_dir();
  save_wav_pcm16((d / "a.wav").string(), sine(440, 0.1));
  DatasetManifest m;
  ManifestEntry e;
  e.utterance_id = "utt_a";
  e.speaker_id = "spk0";
  e.audio_path = "a.wav";
  e.transcript = "AA EE";
  m.entries.push_back(e);
  const auto mp = (d / "manifest.jsonl").string();
  save_manifest(mp, m);
  DatasetManifest r = load_manifest(mp);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].utterance_id == "utt_a");
  CHECK(r.entries[0].transcript == "AA EE");
  CHECK(fs::path(r.entries[0].audio_path).is_absolute() ||
        fs::exists(r.entries[0].audio_path));

  SUBCASE("duplicate ids rejected") {
    m.entries.push_back(e);
    save_manifest(mp, m);
    CHECK_THROWS_AS(load_manifest(mp), ValidationError);
  }
  SUBCASE("missing audio rejected") {
    m.entries[0].audio_path = "missing.wav";
    save_manifest(mp, m);
    CHECK_THROWS_AS(load_manifest(mp), ValidationError);
  }
}

TEST_CASE("resample length arithmetic") {
  std::vector<double> x(48000, 0.1);
  CHECK(dsp::resample(x, 48000, 16000).size() == 16000);
  CHECK(dsp::resample(x, 44100, 16000).size() ==
        static_cast<size_t>(std::llround(48000.0 * 16000.0 / 44100.0)));
  // Tone survives resampling.
  std::vector<double> tone(44100);
  for (int i = 0; i < 44100; ++i)
    tone[i] = std::sin(2.0 * M_PI * 440.0 * i / 44100.0);
  std::vector<double> y = dsp::resample(tone, 44100, 16000);
  double energy = 0.0;
  for (double v : y) energy += v * v;
  CHECK(energy / y.size() == doctest::Approx(0.5).epsilon(0.05));
}
