// utts/dsp.cpp

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

#include "utts/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace utts::dsp {

namespace {

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

// Sample index of the first window tap for frame t.
inline int frame_start(int t, const StftConfig& cfg) {
  return t * cfg.hop - (cfg.win - cfg.hop) / 2;
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  require(is_pow2(n), "fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

Stft stft(const std::vector<double>& samples, const StftConfig& cfg) {
  require(!samples.empty(), "stft: empty signal");
  require(is_pow2(cfg.win), "stft: window must be a power of two");
  const int len = static_cast<int>(samples.size());
  const int frames = (len + cfg.hop - 1) / cfg.hop;
  const int bins = cfg.win / 2 + 1;
  const std::vector<double> window = hann_window(cfg.win);

  Stft out;
  out.magnitude.resize(frames, bins);
  out.phase.resize(frames, bins);
  std::vector<std::complex<double>> buf(cfg.win);
  for (int t = 0; t < frames; ++t) {
    const int start = frame_start(t, cfg);
    for (int i = 0; i < cfg.win; ++i) {
      const int s = start + i;
      const double x = (s >= 0 && s < len) ? samples[s] : 0.0;
      buf[i] = std::complex<double>(x * window[i], 0.0);
    }
    fft(buf, false);
    for (int b = 0; b < bins; ++b) {
      out.magnitude(t, b) = std::abs(buf[b]);
      out.phase(t, b) = std::arg(buf[b]);
    }
  }
  return out;
}

std::vector<double> istft(const Mat& magnitude, const Mat& phase,
                          const StftConfig& cfg) {
  require(magnitude.rows() == phase.rows() &&
              magnitude.cols() == phase.cols(),
          "istft: magnitude/phase shape mismatch");
  const int frames = static_cast<int>(magnitude.rows());
  const int bins = cfg.win / 2 + 1;
  require(static_cast<int>(magnitude.cols()) == bins,
          "istft: bin count does not match window");
  const std::vector<double> window = hann_window(cfg.win);

  const int total = frames * cfg.hop;
  const int lead = (cfg.win - cfg.hop) / 2;
  std::vector<double> acc(total + cfg.win, 0.0);
  std::vector<double> norm(total + cfg.win, 0.0);
  std::vector<std::complex<double>> buf(cfg.win);
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < bins; ++b) {
      const std::complex<double> v =
          std::polar(magnitude(t, b), phase(t, b));
      buf[b] = v;
      if (b > 0 && b < cfg.win / 2) buf[cfg.win - b] = std::conj(v);
    }
    fft(buf, true);
    const int start = frame_start(t, cfg) + lead;  // offset into padded acc
    for (int i = 0; i < cfg.win; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  std::vector<double> out(total);
  for (int i = 0; i < total; ++i) {
    const double n = norm[i + lead];
    out[i] = n > 1e-9 ? acc[i + lead] / n : 0.0;
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Mat mel_filterbank(int n_mels, int n_fft, double sample_rate, double fmin,
                   double fmax) {
  const int bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  Mat fb = Mat::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * sample_rate / n_fft;
      if (f <= lo || f >= hi) continue;
      fb(m, b) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Mat dct_matrix(int n_out, int n_in) {
  Mat d(n_out, n_in);
  const double scale0 = std::sqrt(1.0 / n_in);
  const double scale = std::sqrt(2.0 / n_in);
  for (int k = 0; k < n_out; ++k)
    for (int n = 0; n < n_in; ++n)
      d(k, n) = (k == 0 ? scale0 : scale) *
                std::cos(M_PI * (n + 0.5) * k / n_in);
  return d;
}

std::vector<double> resample(const std::vector<double>& x, double src_rate,
                             double dst_rate) {
  require(src_rate > 0 && dst_rate > 0, "resample: rates must be positive");
  if (src_rate == dst_rate) return x;
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t out_n =
      std::llround(static_cast<double>(n) * dst_rate / src_rate);
  const double ratio = src_rate / dst_rate;
  // Low-pass at the narrower Nyquist when downsampling.
  const double cutoff = 0.45 * std::min(1.0, dst_rate / src_rate);
  const int taps = 32;
  std::vector<double> out(out_n, 0.0);
  for (int64_t i = 0; i < out_n; ++i) {
    const double center = i * ratio;
    const int64_t lo = static_cast<int64_t>(std::floor(center)) - taps + 1;
    const int64_t hi = static_cast<int64_t>(std::floor(center)) + taps;
    double acc = 0.0, wsum = 0.0;
    for (int64_t j = lo; j <= hi; ++j) {
      const double d = center - j;
      const double sinc =
          d == 0.0 ? 2.0 * cutoff
                   : std::sin(2.0 * M_PI * cutoff * d) / (M_PI * d);
      // Hann taper over the tap span.
      const double w = 0.5 + 0.5 * std::cos(M_PI * d / taps);
      acc += sinc * w * (j >= 0 && j < n ? x[j] : 0.0);
      wsum += sinc * w;
    }
    out[i] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

}  // namespace utts::dsp
