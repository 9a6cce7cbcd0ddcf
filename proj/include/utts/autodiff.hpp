// utts/autodiff.hpp

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

// Reverse-mode automatic differentiation over Eigen matrices. Graphs are
// built forward by the op functions below; backward(loss) returns gradients
// in a side table so several threads can differentiate disjoint graphs that
// share the same parameter leaves.

#ifndef UTTS_AUTODIFF_HPP_
#define UTTS_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "utts/common.hpp"

namespace utts::ad {

class Node;
using Tensor = std::shared_ptr<Node>;
class Gradients;

class Node {
 public:
  Mat val;
  bool needs_grad = false;
  int64_t id = 0;
  std::vector<Tensor> parents;
  // Receives dL/d(this) and accumulates dL/d(parent) into the table.
  std::function<void(const Mat& gout, Gradients& g)> backward;

  double scalar() const { return val(0, 0); }
  Eigen::Index rows() const { return val.rows(); }
  Eigen::Index cols() const { return val.cols(); }
};

class Gradients {
 public:
  void accumulate(const Tensor& t, const Mat& m) {
    if (!t->needs_grad) return;
    auto it = table_.find(t.get());
    if (it == table_.end())
      table_.emplace(t.get(), m);
    else
      it->second += m;
  }
  const Mat* find(const Tensor& t) const { return find_raw(t.get()); }
  const Mat* find_raw(const Node* n) const {
    auto it = table_.find(n);
    return it == table_.end() ? nullptr : &it->second;
  }
  Mat get_or_zero(const Tensor& t) const {
    const Mat* g = find(t);
    return g ? *g : Mat::Zero(t->rows(), t->cols());
  }
  size_t size() const { return table_.size(); }

 private:
  std::unordered_map<const Node*, Mat> table_;
};

// Leaf with no gradient tracking.
Tensor constant(Mat m);
// Leaf that participates in backward (a parameter or probed input).
Tensor leaf(Mat m);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
// a is T x F, row is 1 x F, broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor div(const Tensor& a, const Tensor& b);  // elementwise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor square(const Tensor& a);
// 1 / sqrt(a + eps), elementwise.
Tensor inv_sqrt(const Tensor& a, double eps);

Tensor sum_all(const Tensor& a);   // 1x1
Tensor mean_all(const Tensor& a);  // 1x1
Tensor sum_over_rows(const Tensor& a);   // T x F -> 1 x F
Tensor mean_over_rows(const Tensor& a);  // T x F -> 1 x F

Tensor slice_rows(const Tensor& a, int r0, int n);
Tensor slice_cols(const Tensor& a, int c0, int n);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reverse_rows(const Tensor& a);
Tensor repeat_row(const Tensor& row, int times);
Tensor pad_rows(const Tensor& a, int top, int bottom);  // zero padding

// Softmax along each row.
Tensor row_softmax(const Tensor& a);

// Mean negative log-likelihood of targets[r] under row-softmax of
// logits.row(r), averaged over r in rows. Empty rows yields an exact
// constant zero that is disconnected from the graph.
Tensor masked_nll(const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<int>& rows);

// dL/dx for every tracked node reachable from loss (loss must be 1x1).
Gradients backward(const Tensor& loss);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace utts::ad

#endif  // UTTS_AUTODIFF_HPP_
