#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "utts/autodiff.hpp"
#include "utts/nn.hpp"
#include "utts/rng.hpp"

using namespace utts;
using namespace utts::ad;

namespace {

// Random scalar-valued composite touching most primitive ops.
Tensor composite(const Tensor& a, const Tensor& b, const Tensor& c) {
  Tensor h = add(matmul(a, b), repeat_row(c, static_cast<int>(a->rows())));
  h = tanh_op(h);
  Tensor s = sigmoid(slice_cols(h, 0, 2));
  Tensor r = relu(slice_cols(h, 1, 2));
  Tensor joined = concat_cols({s, r, softplus(h)});
  Tensor normed = mul(joined, inv_sqrt(square(joined), 0.3));
  Tensor pooled = mean_over_rows(concat_rows({normed, scale(normed, -0.5)}));
  Tensor lo = log_op(add_scalar(square(pooled), 1.0));
  return mean_all(add(lo, exp_op(neg(lo))));
}

}  // namespace

TEST_CASE("elementwise and matmul gradients match finite differences") {
  Rng rng(7);
  nn::ParamStore ps;
  Tensor a = ps.create("a", 3, 4, rng, 0.8);
  Tensor b = ps.create("b", 4, 4, rng, 0.8);
  Tensor c = ps.create("c", 1, 4, rng, 0.8);

  Tensor loss = composite(a, b, c);
  Gradients g = backward(loss);
  auto report = testing::check_gradients(
      ps, [&]() { return composite(a, b, c)->scalar(); }, g);
  // The composite includes a relu kink, so allow ordinary FD truncation noise.
  CHECK(report.max_rel_err < 2e-5);
}

TEST_CASE("division, reverse and transpose gradients") {
  Rng rng(11);
  nn::ParamStore ps;
  Tensor a = ps.create("a", 3, 3, rng, 0.5);
  Tensor b = ps.create("b", 3, 3, rng, 0.5);

  auto f = [&]() {
    Tensor d = div(a, add_scalar(square(b), 0.7));
    Tensor t = matmul(transpose(d), reverse_rows(a));
    return sum_all(square(t));
  };
  Gradients g = backward(f());
  auto report = testing::check_gradients(ps, [&]() { return f()->scalar(); }, g);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("row softmax gradient") {
  Rng rng(13);
  nn::ParamStore ps;
  Tensor a = ps.create("a", 4, 5, rng, 1.0);
  Tensor w = ps.create("w", 5, 3, rng, 1.0);
  auto f = [&]() { return mean_all(square(matmul(row_softmax(a), w))); };
  Gradients g = backward(f());
  auto report = testing::check_gradients(ps, [&]() { return f()->scalar(); }, g);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("masked_nll value and gradient") {
  Rng rng(17);
  nn::ParamStore ps;
  Tensor logits = ps.create("logits", 6, 5, rng, 1.2);
  std::vector<int> targets{0, 1, 2, 3, 4, 0};
  std::vector<int> rows{1, 3, 4};

  SUBCASE("uniform logits give ln(V)") {
    Tensor uniform = constant(Mat::Zero(4, 50));
    Tensor l = masked_nll(uniform, {7, 7, 7, 7}, {0, 2});
    CHECK(l->scalar() == doctest::Approx(std::log(50.0)).epsilon(1e-12));
  }

  SUBCASE("empty mask is exactly zero and disconnected") {
    Tensor l = masked_nll(logits, targets, {});
    CHECK(l->scalar() == 0.0);
    CHECK_FALSE(l->needs_grad);
  }

  SUBCASE("gradient matches finite differences") {
    auto f = [&]() { return masked_nll(logits, targets, rows); };
    Gradients g = backward(f());
    auto report =
        testing::check_gradients(ps, [&]() { return f()->scalar(); }, g);
    CHECK(report.max_rel_err < 1e-6);
  }

  SUBCASE("gradient is zero at unmasked rows") {
    Gradients g = backward(masked_nll(logits, targets, rows));
    const Mat* gl = g.find(logits);
    REQUIRE(gl != nullptr);
    CHECK(gl->row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(gl->row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(gl->row(5).cwiseAbs().maxCoeff() == 0.0);
    CHECK(gl->row(1).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("lstm / bilstm / conv / mha / instance norm gradients") {
  Rng rng(23);
  nn::ParamStore ps;
  nn::Lstm lstm(ps, "lstm", 3, 4, rng);
  nn::BiLstm bi(ps, "bi", 4, 3, 2, rng);
  nn::Conv1d conv(ps, "conv", 6, 5, 3, 1, rng);
  nn::MhaBlock mha(ps, "mha", 5, 4, 4, 2, rng);
  nn::Rnn rnn(ps, "rnn", 5, 4, rng);
  nn::Dense head(ps, "head", 4, 2, rng);
  Tensor x = ps.create("x", 5, 3, rng, 0.9);

  auto f = [&]() {
    Tensor h = lstm.forward(x);
    h = bi.forward(h);
    h = nn::instance_norm(conv.forward(h));
    h = mha.forward(h);
    h = rnn.forward(h);
    return mean_all(square(head.forward(h)));
  };
  Gradients g = backward(f());
  auto report = testing::check_gradients(ps, [&]() { return f()->scalar(); }, g);
  CAPTURE(report.worst_param);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("embedding gradient flows only through used rows") {
  Rng rng(31);
  nn::ParamStore ps;
  nn::Embedding emb(ps, "emb", 7, 3, rng);
  std::vector<int> ids{2, 2, 5};
  Gradients g = backward(sum_all(square(emb.forward(ids))));
  const Mat* gt = g.find(emb.table);
  REQUIRE(gt != nullptr);
  CHECK(gt->row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(gt->row(2).cwiseAbs().maxCoeff() > 0.0);
  CHECK(gt->row(5).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rng determinism and serialization round-trip") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

  Rng c(7);
  c.normal();
  c.uniform();
  Rng d = Rng::deserialize(c.serialize());
  for (int i = 0; i < 50; ++i) {
    CHECK(c.normal() == d.normal());
    CHECK(c.uniform_int(1000) == d.uniform_int(1000));
  }
}

TEST_CASE("adam applies deterministic updates") {
  Rng rng(3);
  nn::ParamStore ps;
  Tensor w = ps.create("w", 2, 2, rng, 1.0);
  const Mat w0 = w->val;
  nn::AdamOptimizer opt(ps, 0.1);
  std::vector<Mat> grads{Mat::Ones(2, 2)};
  opt.step(grads);
  // First Adam step moves every coordinate by exactly -lr (bias-corrected).
  CHECK((w->val - w0).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.1).epsilon(1e-6));
}
