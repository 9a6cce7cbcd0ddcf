// utts/nn.cpp

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

#include "utts/nn.hpp"

#include <cmath>

namespace utts::nn {

using namespace ad;

Tensor ParamStore::create(const std::string& name, int rows, int cols, Rng& rng,
                          double init_scale) {
  for (const auto& [n, t] : items_)
    if (n == name) throw ValidationError("duplicate parameter name: " + name);
  Tensor t = leaf(rng.uniform_mat(rows, cols, -init_scale, init_scale));
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, int rows, int cols) {
  for (const auto& [n, t] : items_)
    if (n == name) throw ValidationError("duplicate parameter name: " + name);
  Tensor t = leaf(Mat::Zero(rows, cols));
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ValidationError("parameter not found: " + name);
}

Dense::Dense(ParamStore& ps, const std::string& prefix, int in, int out,
             Rng& rng) {
  const double s = std::sqrt(6.0 / (in + out));
  w = ps.create(prefix + ".w", in, out, rng, s);
  b = ps.create_zeros(prefix + ".b", 1, out);
}

Tensor Dense::forward(const Tensor& x) const {
  return add_rowvec(matmul(x, w), b);
}

Lstm::Lstm(ParamStore& ps, const std::string& prefix, int in, int hidden,
           Rng& rng)
    : hidden(hidden) {
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx = ps.create(prefix + ".wx", in, 4 * hidden, rng, s);
  wh = ps.create(prefix + ".wh", hidden, 4 * hidden, rng, s);
  Mat bias = Mat::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setOnes();  // forget gate bias
  Tensor bt = ps.create_zeros(prefix + ".b", 1, 4 * hidden);
  bt->val = bias;
  b = bt;
}

Tensor Lstm::forward(const Tensor& x) const {
  const int t_len = static_cast<int>(x->rows());
  // Input projection for all frames at once.
  Tensor xp = add_rowvec(matmul(x, wx), b);
  Tensor h = constant(Mat::Zero(1, hidden));
  Tensor c = constant(Mat::Zero(1, hidden));
  std::vector<Tensor> outs;
  outs.reserve(t_len);
  for (int t = 0; t < t_len; ++t) {
    Tensor gates = add(slice_rows(xp, t, 1), matmul(h, wh));
    Tensor i = sigmoid(slice_cols(gates, 0, hidden));
    Tensor f = sigmoid(slice_cols(gates, hidden, hidden));
    Tensor g = tanh_op(slice_cols(gates, 2 * hidden, hidden));
    Tensor o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_op(c));
    outs.push_back(h);
  }
  return concat_rows(outs);
}

BiLstm::BiLstm(ParamStore& ps, const std::string& prefix, int in, int hidden,
               int layers, Rng& rng) {
  int d = in;
  for (int l = 0; l < layers; ++l) {
    fwd.emplace_back(ps, str_cat(prefix, ".l", l, ".fwd"), d, hidden, rng);
    bwd.emplace_back(ps, str_cat(prefix, ".l", l, ".bwd"), d, hidden, rng);
    d = 2 * hidden;
  }
}

Tensor BiLstm::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t l = 0; l < fwd.size(); ++l) {
    Tensor f = fwd[l].forward(h);
    Tensor b = reverse_rows(bwd[l].forward(reverse_rows(h)));
    h = concat_cols({f, b});
  }
  return h;
}

Rnn::Rnn(ParamStore& ps, const std::string& prefix, int in, int hidden,
         Rng& rng)
    : hidden(hidden) {
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx = ps.create(prefix + ".wx", in, hidden, rng, s);
  wh = ps.create(prefix + ".wh", hidden, hidden, rng, s);
  b = ps.create_zeros(prefix + ".b", 1, hidden);
}

Tensor Rnn::forward(const Tensor& x) const {
  const int t_len = static_cast<int>(x->rows());
  Tensor xp = add_rowvec(matmul(x, wx), b);
  Tensor h = constant(Mat::Zero(1, hidden));
  std::vector<Tensor> outs;
  outs.reserve(t_len);
  for (int t = 0; t < t_len; ++t) {
    h = tanh_op(add(slice_rows(xp, t, 1), matmul(h, wh)));
    outs.push_back(h);
  }
  return concat_rows(outs);
}

Conv1d::Conv1d(ParamStore& ps, const std::string& prefix, int in, int out,
               int kernel, int padding, Rng& rng)
    : in(in), out(out), kernel(kernel), padding(padding) {
  const double s = std::sqrt(6.0 / (kernel * in + out));
  w = ps.create(prefix + ".w", kernel * in, out, rng, s);
  b = ps.create_zeros(prefix + ".b", 1, out);
}

Tensor Conv1d::forward(const Tensor& x) const {
  if (x->cols() != in)
    throw ValidationError(str_cat("conv1d: expected ", in, " channels, got ",
                                  x->cols()));
  const int t_len = static_cast<int>(x->rows());
  const int out_len = t_len + 2 * padding - kernel + 1;
  require(out_len >= 1, "conv1d: sequence too short for kernel");
  Tensor padded = padding > 0 ? pad_rows(x, padding, padding) : x;
  std::vector<Tensor> taps;
  taps.reserve(kernel);
  for (int k = 0; k < kernel; ++k)
    taps.push_back(slice_rows(padded, k, out_len));
  return add_rowvec(matmul(concat_cols(taps), w), b);
}

Tensor instance_norm(const Tensor& x, double eps) {
  Tensor mu = mean_over_rows(x);
  Tensor centered = sub(x, repeat_row(mu, static_cast<int>(x->rows())));
  Tensor var = mean_over_rows(square(centered));
  Tensor scale = repeat_row(inv_sqrt(var, eps), static_cast<int>(x->rows()));
  return mul(centered, scale);
}

Embedding::Embedding(ParamStore& ps, const std::string& prefix, int vocab,
                     int dim, Rng& rng) {
  table = ps.create(prefix + ".table", vocab, dim, rng, 0.1);
}

Tensor Embedding::forward(const std::vector<int>& ids) const {
  return matmul(constant(one_hot(ids, static_cast<int>(table->rows()))), table);
}

MhaBlock::MhaBlock(ParamStore& ps, const std::string& prefix, int model_dim,
                   int key_dim, int value_dim, int heads, Rng& rng)
    : heads(heads), key_dim(key_dim), value_dim(value_dim) {
  require(key_dim % heads == 0 && value_dim % heads == 0,
          "mha: key/value dims must divide by heads");
  wq = Dense(ps, prefix + ".wq", model_dim, key_dim, rng);
  wk = Dense(ps, prefix + ".wk", model_dim, key_dim, rng);
  wv = Dense(ps, prefix + ".wv", model_dim, value_dim, rng);
  wo = Dense(ps, prefix + ".wo", value_dim, model_dim, rng);
}

Tensor MhaBlock::forward(const Tensor& x) const {
  const int dk = key_dim / heads;
  const int dv = value_dim / heads;
  Tensor q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, dk);
    Tensor kh = slice_cols(k, h * dk, dk);
    Tensor vh = slice_cols(v, h * dv, dv);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(dk));
    ctx.push_back(matmul(row_softmax(scores), vh));
  }
  return add(x, wo.forward(concat_cols(ctx)));
}

Mat one_hot(const std::vector<int>& ids, int vocab) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(ids.size()), vocab);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab)
      throw ValidationError(str_cat("one_hot: token ", ids[i],
                                    " outside vocabulary of ", vocab));
    m(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  }
  return m;
}

AdamOptimizer::AdamOptimizer(ParamStore& ps, double lr, double beta1,
                             double beta2, double eps)
    : ps_(ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : ps.items()) {
    m_.push_back(Mat::Zero(t->rows(), t->cols()));
    v_.push_back(Mat::Zero(t->rows(), t->cols()));
  }
}

void AdamOptimizer::step(const std::vector<Mat>& grads) {
  require(grads.size() == ps_.items().size(), "adam: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < grads.size(); ++i) {
    const Mat& g = grads[i];
    Tensor p = ps_.items()[i].second;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square())
                .matrix();
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    p->val.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

}  // namespace utts::nn
