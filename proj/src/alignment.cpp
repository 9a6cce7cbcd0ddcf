// utts/alignment.cpp

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

#include "utts/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace utts::alignment {

void AlignmentSequence::validate() const {
  require(vocab_size > 0, "alignment: vocab_size must be positive");
  for (int t : tokens)
    require(t >= 0 && t < vocab_size,
            str_cat("alignment: token ", t, " outside vocabulary of ",
                    vocab_size));
}

AlignmentSequence make_fa(std::vector<int> tokens) {
  AlignmentSequence a;
  a.tokens = std::move(tokens);
  a.kind = Kind::FA;
  a.vocab_size = kFaVocabSize;
  a.validate();
  return a;
}

AlignmentSequence make_ua(std::vector<int> tokens, int num_clusters) {
  require(num_clusters >= 1, "alignment: num_clusters must be >= 1");
  AlignmentSequence a;
  a.tokens = std::move(tokens);
  a.kind = Kind::UA;
  a.vocab_size = num_clusters + 1;  // + mask symbol
  a.validate();
  return a;
}

void PhonemeDurations::validate() const {
  require(phonemes.size() == durations.size(),
          "phoneme_durations: length mismatch");
  for (int d : durations)
    require(d >= 1, "phoneme_durations: durations must be >= 1");
}

int PhonemeDurations::total_frames() const {
  int sum = 0;
  for (int d : durations) sum += d;
  return sum;
}

namespace {

// Squared distance from every row of x to one centroid row.
int nearest_centroid(const Mat& centroids, const Eigen::RowVectorXd& frame,
                     double* best_dist_out) {
  int best = 0;
  double best_dist = (centroids.row(0) - frame).squaredNorm();
  for (int k = 1; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - frame).squaredNorm();
    if (d < best_dist) {  // strict: ties keep the lowest index
      best_dist = d;
      best = k;
    }
  }
  if (best_dist_out) *best_dist_out = best_dist;
  return best;
}

int count_distinct_rows(const Mat& m) {
  std::vector<int> idx(m.rows());
  for (int i = 0; i < m.rows(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int c = 0; c < m.cols(); ++c) {
      if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
    }
    return false;
  });
  int distinct = m.rows() > 0 ? 1 : 0;
  for (size_t i = 1; i < idx.size(); ++i)
    if (m.row(idx[i]) != m.row(idx[i - 1])) ++distinct;
  return distinct;
}

}  // namespace

Codebook fit_codebook(const std::vector<features::FeatureMatrix>& features,
                      int k, Rng& rng, const KmeansOptions& opts) {
  require(k >= 2, "fit_codebook: K must be >= 2");
  require(!features.empty(), "fit_codebook: no feature matrices");
  const int dim = features[0].dim();
  Eigen::Index total = 0;
  for (const auto& f : features) {
    require(f.dim() == dim, "fit_codebook: inconsistent feature dims");
    total += f.frames.rows();
  }
  require(total >= k, "fit_codebook: fewer frames than clusters");
  Mat data(total, dim);
  Eigen::Index at = 0;
  for (const auto& f : features) {
    data.middleRows(at, f.frames.rows()) = f.frames;
    at += f.frames.rows();
  }
  require(count_distinct_rows(data) >= k,
          "fit_codebook: fewer distinct frames than clusters");

  const int n = static_cast<int>(total);

  // k-means++ seeding.
  Mat centroids(k, dim);
  centroids.row(0) = data.row(static_cast<int>(rng.uniform_int(n)));
  Eigen::VectorXd d2(n);
  for (int i = 0; i < n; ++i)
    d2(i) = (data.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double sum = d2.sum();
    int pick;
    if (sum <= 0.0) {
      pick = static_cast<int>(rng.uniform_int(n));
    } else {
      double r = rng.uniform() * sum;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        r -= d2(i);
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(c) = data.row(pick);
    for (int i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (data.row(i) - centroids.row(c)).squaredNorm());
  }

  // Lloyd iterations; inertia must never increase.
  std::vector<int> assign(n, -1);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      double d;
      assign[i] = nearest_centroid(centroids, data.row(i), &d);
      inertia += d;
    }
    if (inertia > prev_inertia * (1.0 + 1e-12) + 1e-12)
      throw RuntimeFailure(
          str_cat("fit_codebook: inertia increased at iteration ", iter, " (",
                  prev_inertia, " -> ", inertia, ")"));

    Mat sums = Mat::Zero(k, dim);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += data.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an emptied cluster at the point farthest from its centroid.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              (data.row(i) - centroids.row(assign[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.row(c) = data.row(far);
      }
    }
    if (std::isfinite(prev_inertia) &&
        std::abs(prev_inertia - inertia) <=
            opts.rel_tolerance * std::max(prev_inertia, 1e-30)) {
      prev_inertia = inertia;
      break;
    }
    prev_inertia = inertia;
  }

  Codebook cb;
  cb.centroids = std::move(centroids);
  return cb;
}

AlignmentSequence assign_units(const features::FeatureMatrix& features,
                               const Codebook& cb) {
  require(features.dim() == cb.dim(),
          str_cat("assign_units: feature dim ", features.dim(),
                  " != codebook dim ", cb.dim()));
  std::vector<int> tokens(features.num_frames());
  for (int i = 0; i < features.num_frames(); ++i)
    tokens[i] = nearest_centroid(cb.centroids, features.frames.row(i), nullptr);
  return make_ua(std::move(tokens), cb.k());
}

AlignmentSequence expand_phonemes(const PhonemeDurations& pd) {
  pd.validate();
  std::vector<int> tokens;
  tokens.reserve(pd.total_frames());
  for (size_t i = 0; i < pd.phonemes.size(); ++i)
    tokens.insert(tokens.end(), pd.durations[i], pd.phonemes[i]);
  return make_fa(std::move(tokens));
}

AlignmentSequence resample_alignment(const AlignmentSequence& a,
                                     double src_rate, double dst_rate) {
  require(src_rate > 0 && dst_rate > 0,
          "resample_alignment: rates must be positive");
  if (src_rate == dst_rate) return a;
  const int src_len = a.length();
  const int dst_len = static_cast<int>(
      std::llround(static_cast<double>(src_len) * dst_rate / src_rate));
  AlignmentSequence out;
  out.kind = a.kind;
  out.vocab_size = a.vocab_size;
  out.tokens.resize(dst_len);
  const double ratio = src_rate / dst_rate;
  for (int i = 0; i < dst_len; ++i) {
    // Nearest source frame to the center of destination cell i.
    int j = static_cast<int>(std::llround((i + 0.5) * ratio - 0.5));
    j = std::clamp(j, 0, src_len - 1);
    out.tokens[i] = a.tokens[j];
  }
  return out;
}

PhonemeDurations durations_from_alignment(const AlignmentSequence& a) {
  require(a.length() >= 1, "durations_from_alignment: empty alignment");
  PhonemeDurations pd;
  int cur = a.tokens[0];
  int run = 1;
  for (int i = 1; i < a.length(); ++i) {
    if (a.tokens[i] == cur) {
      ++run;
    } else {
      pd.phonemes.push_back(cur);
      pd.durations.push_back(run);
      cur = a.tokens[i];
      run = 1;
    }
  }
  pd.phonemes.push_back(cur);
  pd.durations.push_back(run);
  return pd;
}

PhonemeDurations load_fa_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_fa_file: cannot open " + path);
  PhonemeDurations pd;
  int ph, dur;
  while (in >> ph >> dur) {
    pd.phonemes.push_back(ph);
    pd.durations.push_back(dur);
  }
  pd.validate();
  for (int p : pd.phonemes)
    require(p >= 0 && p < kNumMonophones,
            str_cat("load_fa_file: phoneme id ", p, " out of range in ", path));
  return pd;
}

void save_fa_file(const std::string& path, const PhonemeDurations& pd) {
  pd.validate();
  std::ofstream out(path);
  if (!out) throw IoError("save_fa_file: cannot open " + path);
  for (size_t i = 0; i < pd.phonemes.size(); ++i)
    out << pd.phonemes[i] << " " << pd.durations[i] << "\n";
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_codebook: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "UCB1", 4) != 0)
    throw ValidationError("load_codebook: bad magic in " + path);
  uint32_t k = 0, d = 0;
  unsigned char b[4];
  auto rd_u32 = [&]() {
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  };
  k = rd_u32();
  d = rd_u32();
  require(k >= 1 && d >= 1, "load_codebook: bad dimensions");
  Codebook cb;
  cb.centroids.resize(k, d);
  for (uint32_t r = 0; r < k; ++r)
    for (uint32_t c = 0; c < d; ++c) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      if (!in) throw ValidationError("load_codebook: truncated " + path);
      cb.centroids(r, c) = f;
    }
  return cb;
}

void save_codebook(const std::string& path, const Codebook& cb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_codebook: cannot open " + path);
  out.write("UCB1", 4);
  auto wr_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  wr_u32(static_cast<uint32_t>(cb.k()));
  wr_u32(static_cast<uint32_t>(cb.dim()));
  for (int r = 0; r < cb.k(); ++r)
    for (int c = 0; c < cb.dim(); ++c) {
      float f = static_cast<float>(cb.centroids(r, c));
      out.write(reinterpret_cast<char*>(&f), 4);
    }
  if (!out) throw IoError("save_codebook: write failed for " + path);
}

}  // namespace utts::alignment
