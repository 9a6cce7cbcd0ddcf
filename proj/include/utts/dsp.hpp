// utts/dsp.hpp

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

#ifndef UTTS_DSP_HPP_
#define UTTS_DSP_HPP_

#include <complex>
#include <vector>

#include "utts/common.hpp"

namespace utts::dsp {

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Frame t covers the hop cell [t*hop, (t+1)*hop); its analysis window of
// `win` samples is centered on that cell, with zero padding past the signal
// edges. Frame count is ceil(len / hop).
struct StftConfig {
  int win = 1024;
  int hop = 256;
};

// Magnitudes and phases are T x (win/2 + 1).
struct Stft {
  Mat magnitude;
  Mat phase;
};

Stft stft(const std::vector<double>& samples, const StftConfig& cfg);

// Overlap-add inverse; output is exactly frames*hop samples.
std::vector<double> istft(const Mat& magnitude, const Mat& phase,
                          const StftConfig& cfg);

// Triangular mel filterbank, n_mels x (n_fft/2 + 1), HTK mel scale.
Mat mel_filterbank(int n_mels, int n_fft, double sample_rate, double fmin,
                   double fmax);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Orthonormal DCT-II basis, n_out x n_in (applied to rows of a spectrogram).
Mat dct_matrix(int n_out, int n_in);

// Windowed-sinc rational resampler; output length is round(n*dst/src).
std::vector<double> resample(const std::vector<double>& x, double src_rate,
                             double dst_rate);

}  // namespace utts::dsp

#endif  // UTTS_DSP_HPP_
