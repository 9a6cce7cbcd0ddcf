// utts/nn.hpp

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

// Sequence-model building blocks on top of the autodiff engine. Everything
// works on T x F matrices (time along rows).

#ifndef UTTS_NN_HPP_
#define UTTS_NN_HPP_

#include <memory>
#include <string>
#include <vector>

#include "utts/autodiff.hpp"
#include "utts/rng.hpp"

namespace utts::nn {

using ad::Tensor;

// Named parameter registry. Creation order is fixed by construction order,
// which pins the rng draw sequence and the checkpoint layout.
class ParamStore {
 public:
  Tensor create(const std::string& name, int rows, int cols, Rng& rng,
                double init_scale);
  Tensor create_zeros(const std::string& name, int rows, int cols);

  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  size_t size() const { return items_.size(); }
  Tensor find(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct Dense {
  Tensor w, b;
  Dense() = default;
  Dense(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// Gate layout along columns: [input, forget, cell, output].
struct Lstm {
  Tensor wx, wh, b;
  int hidden = 0;
  Lstm() = default;
  Lstm(ParamStore& ps, const std::string& prefix, int in, int hidden, Rng& rng);
  // x is T x in; returns T x hidden.
  Tensor forward(const Tensor& x) const;
};

struct BiLstm {
  std::vector<Lstm> fwd, bwd;
  BiLstm() = default;
  // `layers` stacked bidirectional layers; output is T x 2*hidden.
  BiLstm(ParamStore& ps, const std::string& prefix, int in, int hidden,
         int layers, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct Rnn {
  Tensor wx, wh, b;
  int hidden = 0;
  Rnn() = default;
  Rnn(ParamStore& ps, const std::string& prefix, int in, int hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;  // tanh recurrence
};

// 1-D convolution along time with zero padding; stride is 1.
struct Conv1d {
  Tensor w, b;  // w is (kernel*in) x out
  int in = 0, out = 0, kernel = 0, padding = 0;
  Conv1d() = default;
  Conv1d(ParamStore& ps, const std::string& prefix, int in, int out, int kernel,
         int padding, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// Per-channel normalization over the time axis (rows), no affine terms.
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

struct Embedding {
  Tensor table;  // vocab x dim
  Embedding() = default;
  Embedding(ParamStore& ps, const std::string& prefix, int vocab, int dim,
            Rng& rng);
  Tensor forward(const std::vector<int>& ids) const;
};

// Self-attention block with a residual connection:
// y = x + Wo(concat_h softmax(Q K^T / sqrt(dk)) V).
struct MhaBlock {
  Dense wq, wk, wv, wo;
  int heads = 0, key_dim = 0, value_dim = 0;
  MhaBlock() = default;
  MhaBlock(ParamStore& ps, const std::string& prefix, int model_dim,
           int key_dim, int value_dim, int heads, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// One-hot rows; ids must be in [0, vocab).
Mat one_hot(const std::vector<int>& ids, int vocab);

class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore& ps, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // Applies accumulated gradients; `grads` must be indexed like the store.
  void step(const std::vector<Mat>& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t t() const { return t_; }

  std::vector<Mat>& moment1() { return m_; }
  std::vector<Mat>& moment2() { return v_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  ParamStore& ps_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace utts::nn

#endif  // UTTS_NN_HPP_
