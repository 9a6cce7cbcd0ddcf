#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_support.hpp"
#include "utts/cdsvae.hpp"

using namespace utts;
using namespace utts::cdsvae;

namespace {

// Tiny model for gradient checks: T <= 4, latent dims <= 8.
ArchConfig tiny_arch() {
  ArchConfig a;
  a.mel_bins = 6;
  a.latent_dim = 4;
  a.share_channels = 5;
  a.share_layers = 1;
  a.share_kernel = 3;
  a.spk_hidden = 4;
  a.spk_layers = 1;
  a.con_hidden = 4;
  a.con_layers = 1;
  a.con_rnn_hidden = 5;
  a.prior_hidden = 4;
  a.prior_layers = 1;
  a.dec_channels = 6;
  a.dec_conv_layers = 1;
  a.dec_lstm1_hidden = 5;
  a.dec_lstm2_hidden = 6;
  a.dec_lstm2_layers = 1;
  a.post_channels = 5;
  a.post_layers = 1;
  return a;
}

features::MelSpectrogram random_mel(int t, int bins, uint64_t seed) {
  Rng rng(seed);
  features::MelSpectrogram mel;
  mel.frames = rng.uniform_mat(t, bins, -4.0, 1.0);
  return mel;
}

alignment::AlignmentSequence random_ua(int t, int k, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> tokens(static_cast<size_t>(t));
  for (auto& tok : tokens) tok = static_cast<int>(rng.uniform_int(k));
  return alignment::make_ua(std::move(tokens), k);
}

}  // namespace

TEST_CASE("closed-form gaussian KLD cases") {
  SUBCASE("q == p gives zero") {
    GaussianSeq q{Mat::Constant(3, 4, 0.7), Mat::Constant(3, 4, 1.3)};
    CHECK(std::abs(kld_diag_gaussian(q, q)) < 1e-12);
  }
  SUBCASE("unit shift: 0.5") {
    GaussianSeq q{Mat::Constant(1, 1, 1.0), Mat::Ones(1, 1)};
    GaussianSeq p{Mat::Zero(1, 1), Mat::Ones(1, 1)};
    CHECK(kld_diag_gaussian(q, p) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("sigma 2 vs 1: 0.5*(4 - 1 - ln 4)") {
    GaussianSeq q{Mat::Zero(1, 1), Mat::Constant(1, 1, 2.0)};
    GaussianSeq p{Mat::Zero(1, 1), Mat::Ones(1, 1)};
    const double expected = 0.5 * (4.0 - 1.0 - std::log(4.0));
    CHECK(std::abs(kld_diag_gaussian(q, p) - expected) < 1e-9);
  }
  SUBCASE("non-negative, zero iff equal") {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      GaussianSeq q{rng.uniform_mat(2, 3, -2, 2),
                    rng.uniform_mat(2, 3, 0.1, 3.0)};
      GaussianSeq p{rng.uniform_mat(2, 3, -2, 2),
                    rng.uniform_mat(2, 3, 0.1, 3.0)};
      CHECK(kld_diag_gaussian(q, p) >= 0.0);
    }
  }
  SUBCASE("shape mismatch rejected") {
    GaussianSeq q{Mat::Zero(2, 3), Mat::Ones(2, 3)};
    GaussianSeq p{Mat::Zero(3, 3), Mat::Ones(3, 3)};
    CHECK_THROWS_AS(kld_diag_gaussian(q, p), ValidationError);
  }
}

TEST_CASE("reparameterize") {
  GaussianSeq g{Mat::Constant(2, 4, 3.0), Mat::Constant(2, 4, 1e-12)};
  Rng rng(8);
  SUBCASE("std -> 0 limit collapses to the mean") {
    LatentSample s = reparameterize(g, rng, LatentSource::posterior_content);
    CHECK((s.values.array() - 3.0).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("fixed seed is deterministic") {
    GaussianSeq g2{Mat::Zero(1, 4), Mat::Ones(1, 4)};
    Rng r1(5), r2(5);
    CHECK(reparameterize(g2, r1, LatentSource::posterior_speaker).values ==
          reparameterize(g2, r2, LatentSource::posterior_speaker).values);
  }
  SUBCASE("Monte Carlo mean within 3 std / sqrt(n)") {
    GaussianSeq g2{Mat::Constant(1, 1, 0.25), Mat::Constant(1, 1, 2.0)};
    Rng r(123);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
      sum += reparameterize(g2, r, LatentSource::posterior_content).values(0, 0);
    CHECK(std::abs(sum / n - 0.25) < 3.0 * 2.0 / std::sqrt(n));
  }
}

TEST_CASE("sample_mask") {
  SUBCASE("start probability zero: empty") {
    Rng rng(1);
    MaskConfig cfg;
    cfg.start_prob = 0.0;
    CHECK(sample_mask(500, rng, cfg).empty());
  }
  SUBCASE("start probability one with T=5 covers everything") {
    Rng rng(1);
    MaskConfig cfg;
    cfg.start_prob = 1.0;
    cfg.span = 10;
    MaskSet m = sample_mask(5, rng, cfg);
    CHECK(m == MaskSet{0, 1, 2, 3, 4});
  }
  SUBCASE("masked fraction matches 1 - (1-p)^span") {
    Rng rng(77);
    MaskConfig cfg;  // p = 0.08, span = 10
    int64_t masked = 0, total = 0;
    for (int rep = 0; rep < 10; ++rep) {
      MaskSet m = sample_mask(1000, rng, cfg);
      masked += static_cast<int64_t>(m.size());
      total += 1000;
    }
    const double expected = 1.0 - std::pow(1.0 - 0.08, 10);
    CHECK(std::abs(static_cast<double>(masked) / total - expected) < 0.05);
  }
  SUBCASE("indices strictly increasing and in range") {
    Rng rng(9);
    MaskSet m = sample_mask(300, rng);
    for (size_t i = 1; i < m.size(); ++i) CHECK(m[i] > m[i - 1]);
    if (!m.empty()) {
      CHECK(m.front() >= 0);
      CHECK(m.back() < 300);
    }
  }
}

TEST_CASE("mup_loss") {
  alignment::AlignmentSequence targets = random_ua(8, 50, 3);
  SUBCASE("empty mask is exactly zero") {
    CHECK(mup_loss(Mat::Random(8, 50), targets, {}) == 0.0);
  }
  SUBCASE("uniform logits give ln V") {
    CHECK(std::abs(mup_loss(Mat::Zero(8, 50), targets, {1, 4, 6}) -
                   std::log(50.0)) < 1e-9);
  }
  SUBCASE("saturated correct logit drives loss to zero") {
    Mat logits = Mat::Zero(8, 50);
    for (int t = 0; t < 8; ++t) logits(t, targets.tokens[t]) = 100.0;
    CHECK(mup_loss(logits, targets, {0, 2, 7}) < 1e-6);
  }
  SUBCASE("exactly invariant to unmasked logits") {
    Rng rng(12);
    Mat logits = rng.uniform_mat(8, 50, -2, 2);
    MaskSet mask{2, 5};
    const double base = mup_loss(logits, targets, mask);
    for (int trial = 0; trial < 50; ++trial) {
      Mat perturbed = logits;
      for (int t = 0; t < 8; ++t) {
        if (t == 2 || t == 5) continue;
        perturbed.row(t) = rng.uniform_mat(1, 50, -10, 10);
      }
      CHECK(mup_loss(perturbed, targets, mask) == base);
    }
  }
}

TEST_CASE("encoder and decoder shape contracts") {
  ArchConfig arch = tiny_arch();
  Model model(arch, alignment::Kind::UA, 8, 7, 99);

  SUBCASE("shared encoder preserves length") {
    for (int t : {1, 4, 9}) {
      Mat out = model.encode_shared(random_mel(t, arch.mel_bins, 5));
      CHECK(out.rows() == t);
      CHECK(out.cols() == arch.share_channels);
    }
  }
  SUBCASE("speaker head: single positive-std row for any length") {
    for (int t : {1, 7}) {
      Mat shared = model.encode_shared(random_mel(t, arch.mel_bins, 6));
      GaussianSeq g = model.encode_speaker(shared);
      CHECK(g.mean.rows() == 1);
      CHECK(g.mean.cols() == arch.latent_dim);
      CHECK((g.std.array() > 0).all());
    }
  }
  SUBCASE("content head: per-frame with positive stds") {
    Mat shared = model.encode_shared(random_mel(5, arch.mel_bins, 7));
    GaussianSeq g = model.encode_content(shared);
    CHECK(g.mean.rows() == 5);
    CHECK((g.std.array() > 0).all());
  }
  SUBCASE("content output at t reacts to a distant frame (non-streaming)") {
    features::MelSpectrogram mel = random_mel(12, arch.mel_bins, 8);
    GaussianSeq a = model.encode_content(model.encode_shared(mel));
    features::MelSpectrogram mel2 = mel;
    mel2.frames.row(11).array() += 1.0;  // far from frame 0
    GaussianSeq b = model.encode_content(model.encode_shared(mel2));
    CHECK((a.mean.row(0) - b.mean.row(0)).cwiseAbs().maxCoeff() > 1e-12);
  }
  SUBCASE("prior encoder shapes, mask handling, vocabulary errors") {
    alignment::AlignmentSequence ua = random_ua(6, 7, 9);
    PriorOutput clean = model.encode_prior(ua, {});
    CHECK(clean.gaussian.mean.rows() == 6);
    REQUIRE(clean.unit_logits.has_value());
    CHECK(clean.unit_logits->rows() == 6);
    CHECK(clean.unit_logits->cols() == 7);

    MaskSet all{0, 1, 2, 3, 4, 5};
    PriorOutput masked = model.encode_prior(ua, all);
    CHECK(masked.gaussian.mean.rows() == 6);

    alignment::AlignmentSequence bad = ua;
    bad.tokens[2] = 42;  // outside vocab of 8
    CHECK_THROWS_AS(model.encode_prior(bad, {}), ValidationError);
  }
  SUBCASE("decoder shape, determinism, and a live speaker pathway") {
    Rng rng(10);
    LatentSample zs{rng.normal_mat(1, arch.latent_dim),
                    LatentSource::posterior_speaker};
    LatentSample zc{rng.normal_mat(9, arch.latent_dim),
                    LatentSource::posterior_content};
    features::MelSpectrogram a = model.decode(zs, zc);
    CHECK(a.frames.rows() == 9);
    CHECK(a.frames.cols() == arch.mel_bins);
    features::MelSpectrogram b = model.decode(zs, zc);
    CHECK(a.frames == b.frames);

    LatentSample zs2{zs.values.array() + 0.5, LatentSource::posterior_speaker};
    features::MelSpectrogram c = model.decode(zs2, zc);
    CHECK((a.frames - c.frames).cwiseAbs().maxCoeff() > 1e-12);
  }
}

TEST_CASE("loss breakdown recombination identity") {
  ArchConfig arch = tiny_arch();
  Model model(arch, alignment::Kind::UA, 8, 7, 31);
  Rng cfg_rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    LossConfig cfg;
    cfg.alpha = cfg_rng.uniform() * 2.0;
    cfg.beta = cfg_rng.uniform() * 12.0;
    cfg.gamma = cfg_rng.uniform() < 0.3 ? 0.0 : cfg_rng.uniform() * 2.0;
    const int t = 2 + static_cast<int>(cfg_rng.uniform_int(3));
    features::MelSpectrogram mel = random_mel(t, arch.mel_bins, 1000 + trial);
    alignment::AlignmentSequence ua = random_ua(t, 7, 2000 + trial);
    Rng rng(3000 + trial);
    const bool dual = cfg_rng.bernoulli(0.5);
    LossBreakdown v = dual ? dual_recon_loss(model, mel, ua, cfg, {}, rng)
                           : cdsvae_loss(model, mel, ua, cfg, {}, rng);
    const double recombined =
        v.recon + cfg.alpha * v.kld_s + cfg.beta * v.kld_c + cfg.gamma * v.mup;
    CHECK(std::abs(v.total - recombined) <=
          1e-9 * std::max(1.0, std::abs(v.total)));
  }
}

TEST_CASE("special weight settings") {
  ArchConfig arch = tiny_arch();
  Model model(arch, alignment::Kind::UA, 8, 7, 77);
  features::MelSpectrogram mel = random_mel(4, arch.mel_bins, 4);
  alignment::AlignmentSequence ua = random_ua(4, 7, 5);

  SUBCASE("gamma = 0 removes the MUP term") {
    LossConfig cfg;
    cfg.gamma = 0.0;
    Rng rng(6);
    LossBreakdown v = cdsvae_loss(model, mel, ua, cfg, {}, rng);
    CHECK(v.mup == 0.0);
    CHECK(v.total == doctest::Approx(v.recon + cfg.alpha * v.kld_s +
                                     cfg.beta * v.kld_c));
  }
  SUBCASE("alpha = beta = gamma = 0 leaves only reconstruction") {
    LossConfig cfg;
    cfg.alpha = cfg.beta = cfg.gamma = 0.0;
    Rng rng(6);
    LossBreakdown v = cdsvae_loss(model, mel, ua, cfg, {}, rng);
    CHECK(v.total == v.recon);
    Rng rng2(6);
    LossBreakdown d = dual_recon_loss(model, mel, ua, cfg, {}, rng2);
    CHECK(d.total == d.recon);
  }
}

TEST_CASE("dual reconstruction is the midpoint of its two halves") {
  // With identical rng, the single-route loss shares the posterior-route
  // reconstruction; the dual value must lie between the two route values.
  ArchConfig arch = tiny_arch();
  Model model(arch, alignment::Kind::UA, 8, 7, 13);
  LossConfig cfg;
  cfg.gamma = 0.0;  // keep rng streams aligned between calls
  for (int trial = 0; trial < 10; ++trial) {
    features::MelSpectrogram mel = random_mel(4, arch.mel_bins, 40 + trial);
    alignment::AlignmentSequence ua = random_ua(4, 7, 50 + trial);
    Rng r1(7 + trial), r2(7 + trial);
    LossBreakdown single = cdsvae_loss(model, mel, ua, cfg, {}, r1);
    LossBreakdown dual = dual_recon_loss(model, mel, ua, cfg, {}, r2);
    // recon_dual = (recon_q + recon_p) / 2  =>  recon_p = 2*dual - single.
    const double recon_p = 2.0 * dual.recon - single.recon;
    CHECK(dual.recon >= std::min(single.recon, recon_p) - 1e-9);
    CHECK(dual.recon <= std::max(single.recon, recon_p) + 1e-9);
  }
}

TEST_CASE("gradient checks: full objective, DSVAE baseline, dual round") {
  ArchConfig arch = tiny_arch();
  features::MelSpectrogram mel = random_mel(3, arch.mel_bins, 21);
  alignment::AlignmentSequence ua = random_ua(3, 7, 22);

  auto check_case = [&](LossConfig cfg, bool dual, uint64_t seed) {
    Model model(arch, alignment::Kind::UA, 8, 7, seed);
    auto loss_value = [&]() {
      Rng rng(seed + 1);
      return cdsvae_loss_graph(model, mel, ua, cfg, {}, rng, dual)
          .total->scalar();
    };
    Rng rng(seed + 1);
    LossGraph lg = cdsvae_loss_graph(model, mel, ua, cfg, {}, rng, dual);
    ad::Gradients g = ad::backward(lg.total);
    auto report = testing::check_gradients(model.params(), loss_value, g);
    CAPTURE(report.worst_param);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CHECK(report.max_rel_err < 1e-4);
  };

  SUBCASE("full conditional objective with masked unit prediction") {
    LossConfig cfg;  // alpha 0.01, beta 10, gamma 1
    MaskConfig mc;
    mc.start_prob = 0.3;
    mc.span = 2;
    Model model(arch, alignment::Kind::UA, 8, 7, 51);
    auto loss_value = [&]() {
      Rng rng(52);
      return cdsvae_loss_graph(model, mel, ua, cfg, mc, rng, false)
          .total->scalar();
    };
    Rng rng(52);
    LossGraph lg = cdsvae_loss_graph(model, mel, ua, cfg, mc, rng, false);
    ad::Gradients g = ad::backward(lg.total);
    CHECK(lg.values.mup > 0.0);  // mask must be non-empty for the check to bite
    auto report = testing::check_gradients(model.params(), loss_value, g);
    CAPTURE(report.worst_param);
    CHECK(report.max_rel_err < 1e-4);
  }
  SUBCASE("unconditional prior (DSVAE baseline)") {
    LossConfig cfg;
    cfg.unconditional_prior = true;
    cfg.gamma = 0.0;
    check_case(cfg, false, 61);
  }
  SUBCASE("dual content-encoder reconstruction") {
    LossConfig cfg;
    cfg.gamma = 0.0;
    check_case(cfg, true, 71);
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(scheduled_lr(5e-4, 0.95, 5, 0) == doctest::Approx(5e-4));
  CHECK(scheduled_lr(5e-4, 0.95, 5, 4) == doctest::Approx(5e-4));
  CHECK(scheduled_lr(5e-4, 0.95, 5, 5) == doctest::Approx(5e-4 * 0.95));
  // Decayed twice by epoch 10.
  CHECK(scheduled_lr(5e-4, 0.95, 5, 10) ==
        doctest::Approx(4.5125e-4).epsilon(1e-12));
}

TEST_CASE("training: loss decreases, checkpoints resume bit-exactly") {
  namespace fs = std::filesystem;
  ArchConfig arch = tiny_arch();
  const int k = 5;

  // 12 toy items: mel patterns tied to alignment tokens so there is signal.
  std::vector<TrainItem> items;
  Rng gen(88);
  for (int i = 0; i < 12; ++i) {
    const int t = 12 + static_cast<int>(gen.uniform_int(8));
    alignment::AlignmentSequence ua = random_ua(t, k, 600 + i);
    Mat mel(t, arch.mel_bins);
    for (int f = 0; f < t; ++f)
      for (int b = 0; b < arch.mel_bins; ++b)
        mel(f, b) = -3.0 + std::sin(0.7 * (b + 1) * (1 + ua.tokens[f])) +
                    0.05 * gen.normal();
    items.push_back({str_cat("utt", i), mel, ua});
  }

  TrainSchedule sched;
  sched.epochs = 6;
  sched.batch_size = 4;
  sched.crop_frames = 16;
  sched.workers = 2;
  sched.seed = 4242;
  LossConfig loss_cfg;
  MaskConfig mask_cfg;

  const fs::path dir = fs::temp_directory_path() / "utts_test_train_a";
  fs::remove_all(dir);
  Model model(arch, alignment::Kind::UA, k + 1, k, 1001);
  TrainResult res = train(model, items, loss_cfg, mask_cfg, sched, dir);
  REQUIRE(res.epochs.size() == 6);
  CHECK(res.epochs.back().mean.total < res.epochs.front().mean.total);

  SUBCASE("uninterrupted run == resumed run, bitwise") {
    // Full 6-epoch run from scratch in a second directory.
    const fs::path dir_b = fs::temp_directory_path() / "utts_test_train_b";
    fs::remove_all(dir_b);
    TrainSchedule sched_short = sched;
    sched_short.epochs = 3;
    Model model_b(arch, alignment::Kind::UA, k + 1, k, 1001);
    train(model_b, items, loss_cfg, mask_cfg, sched_short, dir_b);
    Model resumed(arch, alignment::Kind::UA, k + 1, k, 1001);
    TrainResult res_b =
        train(resumed, items, loss_cfg, mask_cfg, sched, dir_b,
              (dir_b / "latest.ckpt").string());
    REQUIRE(!res_b.epochs.empty());
    // Epochs 3..5 of the resumed run match the uninterrupted run exactly.
    for (size_t i = 0; i < res_b.epochs.size(); ++i) {
      const auto& full = res.epochs[3 + i];
      CHECK(res_b.epochs[i].mean.total == full.mean.total);
      CHECK(res_b.epochs[i].mean.recon == full.mean.recon);
    }
    for (const auto& [name, t] : model.params().items())
      CHECK(t->val == resumed.params().find(name)->val);
  }

  SUBCASE("checkpoint round-trip preserves parameters") {
    Checkpoint cp = load_checkpoint((dir / "latest.ckpt").string());
    Model loaded = unpack_model(cp);
    for (const auto& [name, t] : model.params().items())
      CHECK(t->val == loaded.params().find(name)->val);
    CHECK(loaded.alignment_vocab() == k + 1);
    CHECK(loaded.unit_classes() == k);
  }

  SUBCASE("non-finite loss aborts with a diagnostic") {
    std::vector<TrainItem> bad = items;
    bad[0].mel_frames(0, 0) = std::numeric_limits<double>::quiet_NaN();
    Model m2(arch, alignment::Kind::UA, k + 1, k, 1001);
    const fs::path dir_c = fs::temp_directory_path() / "utts_test_train_c";
    fs::remove_all(dir_c);
    CHECK_THROWS_AS(train(m2, bad, loss_cfg, mask_cfg, sched, dir_c),
                    RuntimeFailure);
  }
}
