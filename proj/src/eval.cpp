// utts/eval.cpp

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

#include "utts/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "utts/autodiff.hpp"
#include "utts/nn.hpp"

namespace utts::eval {

EmbeddingMap embed_utterances(
    const std::vector<std::pair<std::string, features::MelSpectrogram>>& utts,
    const cdsvae::Model& model, EmbeddingKind which) {
  EmbeddingMap out;
  for (const auto& [id, mel] : utts) {
    require(out.count(id) == 0, "embed_utterances: duplicate utterance " + id);
    Mat shared = model.encode_shared(mel);
    Vec e;
    if (which == EmbeddingKind::speaker) {
      e = model.encode_speaker(shared).mean.row(0);
    } else {
      Mat mean = model.encode_content(shared).mean;
      e = mean.colwise().mean();
    }
    out[id] = e;
  }
  return out;
}

ScoredTrials score_trials(const EmbeddingMap& embeds, const TrialList& trials) {
  ScoredTrials out;
  out.reserve(trials.trials.size());
  for (const auto& t : trials.trials) {
    auto a = embeds.find(t.utt_a);
    auto b = embeds.find(t.utt_b);
    if (a == embeds.end())
      throw ValidationError("score_trials: missing embedding for " + t.utt_a);
    if (b == embeds.end())
      throw ValidationError("score_trials: missing embedding for " + t.utt_b);
    const double na = a->second.norm();
    const double nb = b->second.norm();
    double score = 0.0;
    if (na > 0 && nb > 0) score = a->second.dot(b->second) / (na * nb);
    score = std::clamp(score, -1.0, 1.0);
    out.push_back({score, t.is_target});
  }
  return out;
}

double compute_eer(const ScoredTrials& st) {
  int64_t n_target = 0, n_nontarget = 0;
  for (const auto& t : st) (t.is_target ? n_target : n_nontarget)++;
  require(n_target > 0 && n_nontarget > 0,
          "compute_eer: need both target and non-target trials");

  // Sweep thresholds downward over the sorted unique scores. At threshold
  // theta, accept score >= theta. FAR rises as theta falls, FRR falls.
  std::vector<ScoredTrial> sorted(st.begin(), st.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredTrial& a, const ScoredTrial& b) {
              return a.score > b.score;
            });

  // Above every score: FAR = 0, FRR = 1.
  double prev_far = 0.0, prev_frr = 1.0;
  int64_t accepted_targets = 0, accepted_nontargets = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    // Admit the whole tie group at once.
    const double theta = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == theta) {
      (sorted[i].is_target ? accepted_targets : accepted_nontargets)++;
      ++i;
    }
    const double far = static_cast<double>(accepted_nontargets) / n_nontarget;
    const double frr =
        1.0 - static_cast<double>(accepted_targets) / n_target;
    if (frr <= far) {
      // Crossing happened between the previous operating point and this one.
      const double d_prev = prev_frr - prev_far;  // > 0
      const double d_cur = frr - far;             // <= 0
      if (d_prev == d_cur) return far;
      const double t = d_prev / (d_prev - d_cur);
      return prev_far + t * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  // Accepting everything gives FAR=1, FRR=0, so the sweep always crosses.
  throw RuntimeFailure("compute_eer: sweep did not cross");
}

TrialList generate_trials(
    const std::vector<std::pair<std::string, std::string>>& utt_speaker,
    int max_trials, Rng& rng) {
  require(utt_speaker.size() >= 2, "generate_trials: need >= 2 utterances");
  std::vector<std::pair<size_t, size_t>> targets, nontargets;
  for (size_t i = 0; i < utt_speaker.size(); ++i)
    for (size_t j = i + 1; j < utt_speaker.size(); ++j)
      (utt_speaker[i].second == utt_speaker[j].second ? targets : nontargets)
          .emplace_back(i, j);
  require(!targets.empty() && !nontargets.empty(),
          "generate_trials: need both same- and cross-speaker pairs");
  rng.shuffle(targets);
  rng.shuffle(nontargets);
  const size_t per_class = std::min<size_t>(
      {targets.size(), nontargets.size(),
       static_cast<size_t>(std::max(1, max_trials / 2))});
  TrialList out;
  for (size_t k = 0; k < per_class; ++k) {
    out.trials.push_back({utt_speaker[targets[k].first].first,
                          utt_speaker[targets[k].second].first, true});
    out.trials.push_back({utt_speaker[nontargets[k].first].first,
                          utt_speaker[nontargets[k].second].first, false});
  }
  return out;
}

TrialList load_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_trials: cannot open " + path);
  TrialList out;
  std::string a, b;
  int label;
  while (in >> a >> b >> label) out.trials.push_back({a, b, label != 0});
  require(!out.trials.empty(), "load_trials: empty trial list " + path);
  return out;
}

void save_trials(const std::string& path, const TrialList& trials) {
  std::ofstream out(path);
  if (!out) throw IoError("save_trials: cannot open " + path);
  for (const auto& t : trials.trials)
    out << t.utt_a << " " << t.utt_b << " " << (t.is_target ? 1 : 0) << "\n";
}

double phoneme_probe(const Mat& features, const std::vector<int>& labels,
                     const ProbeOptions& opts) {
  require(static_cast<size_t>(features.rows()) == labels.size(),
          "phoneme_probe: label/feature length mismatch");
  require(features.rows() >= 4, "phoneme_probe: too few frames");
  for (int l : labels)
    require(l >= 0 && l < opts.num_classes,
            "phoneme_probe: label outside class range");

  Rng rng(opts.seed);
  std::vector<size_t> order(labels.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const size_t n_train =
      std::max<size_t>(1, static_cast<size_t>(order.size() *
                                              opts.train_fraction));
  require(n_train < order.size(), "phoneme_probe: empty test split");

  Mat x_train(n_train, features.cols());
  std::vector<int> y_train(n_train);
  for (size_t i = 0; i < n_train; ++i) {
    x_train.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(order[i]));
    y_train[i] = labels[order[i]];
  }

  nn::ParamStore ps;
  ad::Tensor w = ps.create("probe.w", static_cast<int>(features.cols()),
                           opts.num_classes, rng, 0.01);
  ad::Tensor b = ps.create_zeros("probe.b", 1, opts.num_classes);
  nn::AdamOptimizer opt(ps, opts.lr);
  std::vector<int> all_rows(n_train);
  for (size_t i = 0; i < n_train; ++i) all_rows[i] = static_cast<int>(i);
  ad::Tensor x_t = ad::constant(x_train);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    ad::Tensor logits = ad::add_rowvec(ad::matmul(x_t, w), b);
    ad::Tensor loss = ad::masked_nll(logits, y_train, all_rows);
    ad::Gradients g = ad::backward(loss);
    std::vector<Mat> grads{g.get_or_zero(w), g.get_or_zero(b)};
    opt.step(grads);
  }

  int64_t correct = 0, total = 0;
  for (size_t i = n_train; i < order.size(); ++i) {
    Eigen::RowVectorXd logits =
        features.row(static_cast<Eigen::Index>(order[i])) * w->val +
        b->val.row(0);
    Eigen::Index best;
    logits.maxCoeff(&best);
    correct += best == labels[order[i]];
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

Mat pca_project(const Mat& x) {
  Mat centered = x.rowwise() - x.colwise().mean();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return centered * svd.matrixV().leftCols(2);
}

// Exact symmetric SNE on small point sets; O(N^2) per iteration.
Mat sne_project(const Mat& x, double perplexity, int iterations,
                uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  Mat d2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();

  // Per-point bandwidths via binary search on the entropy.
  const double target_entropy =
      std::log(std::min<double>(perplexity, std::max(2, n - 1)));
  Mat p = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = 1e12;
    Eigen::VectorXd pi(n);
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        pi(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += pi(j);
      }
      if (sum <= 0) sum = 1e-12;
      double entropy = 0.0;
      for (int j = 0; j < n; ++j) {
        const double q = pi(j) / sum;
        if (q > 1e-12) entropy -= q * std::log(q);
      }
      if (std::abs(entropy - target_entropy) < 1e-5) break;
      if (entropy > target_entropy) {
        beta_lo = beta;
        beta = beta_hi > 1e11 ? beta * 2 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = 0.5 * (beta + beta_lo);
      }
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      pi(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
      sum += pi(j);
    }
    if (sum <= 0) sum = 1e-12;
    p.row(i) = (pi / sum).transpose();
  }
  Mat pj = (p + p.transpose()) / (2.0 * n);
  pj = pj.cwiseMax(1e-12);

  Rng rng(seed);
  Mat y = 1e-2 * rng.normal_mat(n, 2);
  Mat dy = Mat::Zero(n, 2);
  const double momentum = 0.8, lr = 100.0;
  for (int it = 0; it < iterations; ++it) {
    // Student-t affinities in the plane.
    Mat num(n, n);
    double qsum = 0.0;
    for (int i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (int j = i + 1; j < n; ++j) {
        const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = q;
        num(j, i) = q;
        qsum += 2.0 * q;
      }
    }
    if (qsum <= 0) qsum = 1e-12;
    Mat grad = Mat::Zero(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coef =
            4.0 * (pj(i, j) - num(i, j) / qsum) * num(i, j);
        grad.row(i) += coef * (y.row(i) - y.row(j));
      }
    dy = momentum * dy - lr * grad;
    y += dy;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

}  // namespace

std::vector<ProjectedPoint> project_embeddings(
    const EmbeddingMap& embeds, const std::map<std::string, std::string>& labels,
    const ProjectionOptions& opts) {
  require(embeds.size() >= 10, "project_embeddings: need at least 10 points");
  std::vector<std::string> ids;
  for (const auto& [id, e] : embeds) ids.push_back(id);
  const int n = static_cast<int>(ids.size());
  const int d = static_cast<int>(embeds.begin()->second.size());
  Mat x(n, d);
  for (int i = 0; i < n; ++i) {
    const Vec& e = embeds.at(ids[static_cast<size_t>(i)]);
    require(static_cast<int>(e.size()) == d,
            "project_embeddings: inconsistent dimensions");
    x.row(i) = e.transpose();
  }
  Mat y = opts.method == ProjectionMethod::pca
              ? pca_project(x)
              : sne_project(x, opts.perplexity, opts.iterations, opts.seed);
  require(all_finite(y), "project_embeddings: non-finite projection");

  std::vector<ProjectedPoint> out;
  for (int i = 0; i < n; ++i) {
    ProjectedPoint p;
    p.id = ids[static_cast<size_t>(i)];
    auto it = labels.find(p.id);
    p.label = it == labels.end() ? "" : it->second;
    p.x = y(i, 0);
    p.y = y(i, 1);
    out.push_back(std::move(p));
  }
  return out;
}

void export_projection(const std::string& path,
                       const std::vector<ProjectedPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("export_projection: cannot open " + path);
  out.precision(10);
  for (const auto& p : points)
    out << p.id << "\t" << p.label << "\t" << p.x << "\t" << p.y << "\n";
}

int edit_distance(const std::vector<std::string>& a,
                  const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::vector<std::string> split_chars(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s)
    if (c != ' ') out.emplace_back(1, c);
  return out;
}

}  // namespace

ErrorRates cer_wer(const std::string& ref, const std::string& hyp) {
  require(!ref.empty(), "cer_wer: empty reference");
  const auto ref_w = split_words(ref);
  const auto hyp_w = split_words(hyp);
  const auto ref_c = split_chars(ref);
  const auto hyp_c = split_chars(hyp);
  require(!ref_w.empty() && !ref_c.empty(), "cer_wer: blank reference");
  ErrorRates rates;
  rates.wer = static_cast<double>(edit_distance(ref_w, hyp_w)) / ref_w.size();
  rates.cer = static_cast<double>(edit_distance(ref_c, hyp_c)) / ref_c.size();
  return rates;
}

}  // namespace utts::eval
