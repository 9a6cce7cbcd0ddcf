// utts/autodiff.cpp

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

#include "utts/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace utts::ad {

namespace {

std::atomic<int64_t> g_next_id{1};

Tensor make_node(Mat val, std::vector<Tensor> parents,
                 std::function<void(const Mat&, Gradients&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->needs_grad;
  n->needs_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    throw ValidationError(str_cat(op, ": shape mismatch ", a->rows(), "x",
                                  a->cols(), " vs ", b->rows(), "x",
                                  b->cols()));
}

}  // namespace

Tensor constant(Mat m) {
  auto n = std::make_shared<Node>();
  n->val = std::move(m);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  n->needs_grad = false;
  return n;
}

Tensor leaf(Mat m) {
  auto n = std::make_shared<Node>();
  n->val = std::move(m);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  n->needs_grad = true;
  return n;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_node(a->val + b->val, {a, b}, [a, b](const Mat& g, Gradients& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_node(a->val - b->val, {a, b}, [a, b](const Mat& g, Gradients& t) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Tensor neg(const Tensor& a) {
  return make_node(-a->val, {a},
                   [a](const Mat& g, Gradients& t) { t.accumulate(a, -g); });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  if (row->rows() != 1 || row->cols() != a->cols())
    throw ValidationError("add_rowvec: row must be 1 x cols(a)");
  Mat v = a->val;
  v.rowwise() += row->val.row(0);
  return make_node(std::move(v), {a, row},
                   [a, row](const Mat& g, Gradients& t) {
                     t.accumulate(a, g);
                     t.accumulate(row, g.colwise().sum());
                   });
}

Tensor scale(const Tensor& a, double c) {
  return make_node(a->val * c, {a}, [a, c](const Mat& g, Gradients& t) {
    t.accumulate(a, g * c);
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_node(a->val.array() + c, {a},
                   [a](const Mat& g, Gradients& t) { t.accumulate(a, g); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_node(a->val.cwiseProduct(b->val), {a, b},
                   [a, b](const Mat& g, Gradients& t) {
                     t.accumulate(a, g.cwiseProduct(b->val));
                     t.accumulate(b, g.cwiseProduct(a->val));
                   });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  return make_node(a->val.cwiseQuotient(b->val), {a, b},
                   [a, b](const Mat& g, Gradients& t) {
                     t.accumulate(a, g.cwiseQuotient(b->val));
                     t.accumulate(b, (-g.array() * a->val.array() /
                                      (b->val.array() * b->val.array()))
                                         .matrix());
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a->cols() != b->rows())
    throw ValidationError(str_cat("matmul: inner dims ", a->cols(), " vs ",
                                  b->rows()));
  return make_node(a->val * b->val, {a, b},
                   [a, b](const Mat& g, Gradients& t) {
                     t.accumulate(a, g * b->val.transpose());
                     t.accumulate(b, a->val.transpose() * g);
                   });
}

Tensor transpose(const Tensor& a) {
  return make_node(a->val.transpose(), {a}, [a](const Mat& g, Gradients& t) {
    t.accumulate(a, g.transpose());
  });
}

Tensor sigmoid(const Tensor& a) {
  Mat y = (1.0 / (1.0 + (-a->val.array()).exp())).matrix();
  return make_node(y, {a}, [a, y](const Mat& g, Gradients& t) {
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Tensor tanh_op(const Tensor& a) {
  Mat y = a->val.array().tanh().matrix();
  return make_node(y, {a}, [a, y](const Mat& g, Gradients& t) {
    t.accumulate(a, (g.array() * (1.0 - y.array() * y.array())).matrix());
  });
}

Tensor relu(const Tensor& a) {
  Mat y = a->val.cwiseMax(0.0);
  return make_node(y, {a}, [a](const Mat& g, Gradients& t) {
    t.accumulate(a, (g.array() * (a->val.array() > 0.0).cast<double>()).matrix());
  });
}

Tensor softplus(const Tensor& a) {
  // log(1 + e^x), computed as max(x,0) + log1p(e^-|x|) for stability.
  Mat y = a->val.unaryExpr([](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  return make_node(y, {a}, [a](const Mat& g, Gradients& t) {
    Mat s = (1.0 / (1.0 + (-a->val.array()).exp())).matrix();
    t.accumulate(a, g.cwiseProduct(s));
  });
}

Tensor exp_op(const Tensor& a) {
  Mat y = a->val.array().exp().matrix();
  return make_node(y, {a}, [a, y](const Mat& g, Gradients& t) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

Tensor log_op(const Tensor& a) {
  return make_node(a->val.array().log().matrix(), {a},
                   [a](const Mat& g, Gradients& t) {
                     t.accumulate(a, g.cwiseQuotient(a->val));
                   });
}

Tensor square(const Tensor& a) {
  return make_node(a->val.cwiseProduct(a->val), {a},
                   [a](const Mat& g, Gradients& t) {
                     t.accumulate(a, 2.0 * g.cwiseProduct(a->val));
                   });
}

Tensor inv_sqrt(const Tensor& a, double eps) {
  Mat y = (a->val.array() + eps).rsqrt().matrix();
  return make_node(y, {a}, [a, y](const Mat& g, Gradients& t) {
    t.accumulate(a, (-0.5 * g.array() * y.array().pow(3.0)).matrix());
  });
}

Tensor sum_all(const Tensor& a) {
  Mat y(1, 1);
  y(0, 0) = a->val.sum();
  return make_node(y, {a}, [a](const Mat& g, Gradients& t) {
    t.accumulate(a, Mat::Constant(a->rows(), a->cols(), g(0, 0)));
  });
}

Tensor mean_all(const Tensor& a) {
  const double n = static_cast<double>(a->rows() * a->cols());
  Mat y(1, 1);
  y(0, 0) = a->val.sum() / n;
  return make_node(y, {a}, [a, n](const Mat& g, Gradients& t) {
    t.accumulate(a, Mat::Constant(a->rows(), a->cols(), g(0, 0) / n));
  });
}

Tensor sum_over_rows(const Tensor& a) {
  Mat y = a->val.colwise().sum();
  return make_node(y, {a}, [a](const Mat& g, Gradients& t) {
    t.accumulate(a, g.replicate(a->rows(), 1));
  });
}

Tensor mean_over_rows(const Tensor& a) {
  const double n = static_cast<double>(a->rows());
  Mat y = a->val.colwise().sum() / n;
  return make_node(y, {a}, [a, n](const Mat& g, Gradients& t) {
    t.accumulate(a, (g / n).replicate(a->rows(), 1));
  });
}

Tensor slice_rows(const Tensor& a, int r0, int n) {
  if (r0 < 0 || n < 0 || r0 + n > a->rows())
    throw ValidationError("slice_rows: out of range");
  return make_node(a->val.middleRows(r0, n), {a},
                   [a, r0, n](const Mat& g, Gradients& t) {
                     Mat full = Mat::Zero(a->rows(), a->cols());
                     full.middleRows(r0, n) = g;
                     t.accumulate(a, full);
                   });
}

Tensor slice_cols(const Tensor& a, int c0, int n) {
  if (c0 < 0 || n < 0 || c0 + n > a->cols())
    throw ValidationError("slice_cols: out of range");
  return make_node(a->val.middleCols(c0, n), {a},
                   [a, c0, n](const Mat& g, Gradients& t) {
                     Mat full = Mat::Zero(a->rows(), a->cols());
                     full.middleCols(c0, n) = g;
                     t.accumulate(a, full);
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0]->cols();
  for (const auto& p : parts) {
    if (p->cols() != cols) throw ValidationError("concat_rows: column mismatch");
    rows += p->rows();
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    y.middleRows(at, p->rows()) = p->val;
    at += p->rows();
  }
  return make_node(std::move(y), parts, [parts](const Mat& g, Gradients& t) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleRows(at, p->rows()));
      at += p->rows();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0]->rows();
  for (const auto& p : parts) {
    if (p->rows() != rows) throw ValidationError("concat_cols: row mismatch");
    cols += p->cols();
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    y.middleCols(at, p->cols()) = p->val;
    at += p->cols();
  }
  return make_node(std::move(y), parts, [parts](const Mat& g, Gradients& t) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleCols(at, p->cols()));
      at += p->cols();
    }
  });
}

Tensor reverse_rows(const Tensor& a) {
  return make_node(a->val.colwise().reverse(), {a},
                   [a](const Mat& g, Gradients& t) {
                     t.accumulate(a, g.colwise().reverse());
                   });
}

Tensor repeat_row(const Tensor& row, int times) {
  if (row->rows() != 1) throw ValidationError("repeat_row: expects 1 x F");
  return make_node(row->val.replicate(times, 1), {row},
                   [row](const Mat& g, Gradients& t) {
                     t.accumulate(row, g.colwise().sum());
                   });
}

Tensor pad_rows(const Tensor& a, int top, int bottom) {
  Mat y = Mat::Zero(a->rows() + top + bottom, a->cols());
  y.middleRows(top, a->rows()) = a->val;
  return make_node(std::move(y), {a}, [a, top](const Mat& g, Gradients& t) {
    t.accumulate(a, g.middleRows(top, a->rows()));
  });
}

Tensor row_softmax(const Tensor& a) {
  Mat y(a->rows(), a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r) {
    Eigen::ArrayXd row = a->val.row(r).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  return make_node(y, {a}, [a, y](const Mat& g, Gradients& t) {
    Mat gx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      gx.row(r) = (g.row(r).array() - dot) * y.row(r).array();
    }
    t.accumulate(a, gx);
  });
}

Tensor masked_nll(const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<int>& rows) {
  if (rows.empty()) return constant(Mat::Zero(1, 1));
  if (static_cast<Eigen::Index>(targets.size()) != logits->rows())
    throw ValidationError("masked_nll: targets length must equal rows(logits)");
  const int vocab = static_cast<int>(logits->cols());
  double total = 0.0;
  for (int r : rows) {
    if (r < 0 || r >= logits->rows())
      throw ValidationError("masked_nll: row index out of range");
    const int tgt = targets[static_cast<size_t>(r)];
    if (tgt < 0 || tgt >= vocab)
      throw ValidationError(str_cat("masked_nll: target ", tgt,
                                    " outside vocabulary of ", vocab));
    Eigen::ArrayXd row = logits->val.row(r).array();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row - mx).exp().sum());
    total += lse - row(tgt);
  }
  Mat y(1, 1);
  y(0, 0) = total / static_cast<double>(rows.size());
  return make_node(y, {logits}, [logits, targets, rows](const Mat& g,
                                                        Gradients& t) {
    Mat gx = Mat::Zero(logits->rows(), logits->cols());
    const double w = g(0, 0) / static_cast<double>(rows.size());
    for (int r : rows) {
      Eigen::ArrayXd row = logits->val.row(r).array();
      row -= row.maxCoeff();
      Eigen::ArrayXd sm = row.exp();
      sm /= sm.sum();
      gx.row(r) = (w * sm).matrix().transpose();
      gx(r, targets[static_cast<size_t>(r)]) -= w;
    }
    t.accumulate(logits, gx);
  });
}

Gradients backward(const Tensor& loss) {
  if (loss->rows() != 1 || loss->cols() != 1)
    throw ValidationError("backward: loss must be 1x1");
  if (!loss->needs_grad) return {};

  // Collect the reachable differentiable subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Creation ids are a topological order of any forward-built graph.
  std::sort(order.begin(), order.end(),
            [](Node* a, Node* b) { return a->id > b->id; });

  Gradients table;
  table.accumulate(loss, Mat::Ones(1, 1));
  for (Node* n : order) {
    const Mat* g = table.find_raw(n);
    if (g == nullptr || !n->backward) continue;
    Mat gout = *g;  // copy: table may rehash while accumulating parents
    n->backward(gout, table);
  }
  return table;
}

}  // namespace utts::ad
