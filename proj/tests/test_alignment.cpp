#include <doctest.h>

#include <map>
#include <set>

#include "utts/alignment.hpp"

using namespace utts;
using namespace utts::alignment;

namespace {

// Four well-separated blobs with ground-truth membership.
struct BlobData {
  std::vector<features::FeatureMatrix> features;
  std::vector<int> truth;
};

BlobData make_blobs(int per_blob, Rng& rng) {
  const double centers[4][2] = {{0, 0}, {20, 0}, {0, 20}, {20, 20}};
  BlobData out;
  features::FeatureMatrix fm;
  fm.frame_rate = 50.0;
  fm.frames.resize(4 * per_blob, 2);
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < per_blob; ++i) {
      const int row = b * per_blob + i;
      fm.frames(row, 0) = centers[b][0] + rng.normal();
      fm.frames(row, 1) = centers[b][1] + rng.normal();
      out.truth.push_back(b);
    }
  out.features.push_back(std::move(fm));
  return out;
}

double purity(const AlignmentSequence& assign, const std::vector<int>& truth,
              int k) {
  // Fraction of frames covered by each cluster's majority true label.
  std::vector<std::map<int, int>> counts(static_cast<size_t>(k));
  for (size_t i = 0; i < truth.size(); ++i)
    counts[static_cast<size_t>(assign.tokens[i])][truth[i]]++;
  int majority = 0;
  for (const auto& c : counts) {
    int best = 0;
    for (const auto& [label, n] : c) best = std::max(best, n);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("kmeans++ separates synthetic blobs with purity 1") {
  int pure_runs = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    BlobData data = make_blobs(40, rng);
    Codebook cb = fit_codebook(data.features, 4, rng);
    AlignmentSequence ua = assign_units(data.features[0], cb);
    if (purity(ua, data.truth, 4) == 1.0) ++pure_runs;
  }
  CHECK(pure_runs >= 19);
}

TEST_CASE("fit_codebook validation") {
  Rng rng(1);
  BlobData data = make_blobs(10, rng);
  CHECK_THROWS_AS(fit_codebook(data.features, 1, rng), ValidationError);

  // K distinct points -> centroids are exactly those points.
  features::FeatureMatrix fm;
  fm.frame_rate = 50;
  fm.frames.resize(3, 2);
  fm.frames << 0, 0, 10, 0, 0, 10;
  Codebook cb = fit_codebook({fm}, 3, rng);
  std::set<std::pair<double, double>> got, want{{0, 0}, {10, 0}, {0, 10}};
  for (int i = 0; i < 3; ++i) got.insert({cb.centroids(i, 0), cb.centroids(i, 1)});
  CHECK(got == want);

  // Fewer distinct frames than K.
  features::FeatureMatrix dup;
  dup.frame_rate = 50;
  dup.frames.resize(5, 2);
  dup.frames << 1, 1, 1, 1, 1, 1, 2, 2, 2, 2;
  CHECK_THROWS_AS(fit_codebook({dup}, 3, rng), ValidationError);
}

TEST_CASE("assign_units identity, tie rule and brute-force oracle") {
  Codebook cb;
  cb.centroids.resize(6, 2);
  cb.centroids << 0, 0, 1, 0, 2, 0, 3, 0, 4, 0, 5, 0;

  SUBCASE("a row equal to a centroid maps to it") {
    features::FeatureMatrix fm;
    fm.frame_rate = 50;
    fm.frames = cb.centroids.row(4);
    CHECK(assign_units(fm, cb).tokens[0] == 4);
  }
  SUBCASE("equidistant ties resolve to the lowest index") {
    features::FeatureMatrix fm;
    fm.frame_rate = 50;
    fm.frames.resize(1, 2);
    fm.frames << 3.5, 0.0;  // equidistant to centroids 3 and 4
    CHECK(assign_units(fm, cb).tokens[0] == 3);
  }
  SUBCASE("matches an exhaustive distance scan on random data") {
    Rng rng(9);
    features::FeatureMatrix fm;
    fm.frame_rate = 50;
    fm.frames = rng.uniform_mat(200, 2, -1.0, 6.0);
    AlignmentSequence ua = assign_units(fm, cb);
    for (int i = 0; i < fm.num_frames(); ++i) {
      int best = 0;
      double best_d = (cb.centroids.row(0) - fm.frames.row(i)).squaredNorm();
      for (int k = 1; k < cb.k(); ++k) {
        const double d = (cb.centroids.row(k) - fm.frames.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      CHECK(ua.tokens[static_cast<size_t>(i)] == best);
    }
  }
  SUBCASE("dimension mismatch rejected") {
    features::FeatureMatrix fm;
    fm.frame_rate = 50;
    fm.frames = Mat::Zero(3, 5);
    CHECK_THROWS_AS(assign_units(fm, cb), ValidationError);
  }
}

TEST_CASE("expand_phonemes worked example") {
  PhonemeDurations pd;
  pd.phonemes = {55, 2, 7};
  pd.durations = {3, 2, 1};
  AlignmentSequence fa = expand_phonemes(pd);
  CHECK(fa.tokens == std::vector<int>{55, 55, 55, 2, 2, 7});
  CHECK(fa.kind == Kind::FA);
  CHECK(fa.vocab_size == kFaVocabSize);

  PhonemeDurations single{{9}, {1}};
  CHECK(expand_phonemes(single).tokens == std::vector<int>{9});

  PhonemeDurations empty;
  CHECK(expand_phonemes(empty).tokens.empty());
}

TEST_CASE("durations_from_alignment inverts expansion") {
  AlignmentSequence fa = make_fa({55, 55, 55, 2, 2, 7});
  PhonemeDurations pd = durations_from_alignment(fa);
  CHECK(pd.phonemes == std::vector<int>{55, 2, 7});
  CHECK(pd.durations == std::vector<int>{3, 2, 1});

  CHECK(durations_from_alignment(make_fa({4})).phonemes ==
        std::vector<int>{4});

  AlignmentSequence empty = make_fa({});
  CHECK_THROWS_AS(durations_from_alignment(empty), ValidationError);
}

TEST_CASE("expand / run-length round-trip on random sequences") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<int> tokens(static_cast<size_t>(n));
    for (auto& t : tokens) t = static_cast<int>(rng.uniform_int(5));
    AlignmentSequence fa = make_fa(tokens);
    CHECK(expand_phonemes(durations_from_alignment(fa)).tokens == tokens);
  }
  // And the other direction: rle(expand(pd)) == pd when runs are merged,
  // which holds whenever adjacent phonemes differ.
  for (int trial = 0; trial < 300; ++trial) {
    PhonemeDurations pd;
    const int n = 1 + static_cast<int>(rng.uniform_int(10));
    int prev = -1;
    for (int i = 0; i < n; ++i) {
      int p;
      do {
        p = static_cast<int>(rng.uniform_int(8));
      } while (p == prev);
      prev = p;
      pd.phonemes.push_back(p);
      pd.durations.push_back(1 + static_cast<int>(rng.uniform_int(6)));
    }
    PhonemeDurations rt = durations_from_alignment(expand_phonemes(pd));
    CHECK(rt.phonemes == pd.phonemes);
    CHECK(rt.durations == pd.durations);
  }
}

TEST_CASE("resample_alignment") {
  SUBCASE("equal rates: identity") {
    AlignmentSequence a = make_ua({1, 2, 3}, 10);
    AlignmentSequence r = resample_alignment(a, 50, 50);
    CHECK(r.tokens == a.tokens);
  }
  SUBCASE("50 to 62.5 fps doubles-and-a-half the index space") {
    AlignmentSequence a = make_ua({1, 2}, 10);
    AlignmentSequence r = resample_alignment(a, 50.0, 62.5);
    CHECK(r.tokens.size() == 3);  // round(2 * 1.25)
    CHECK(r.tokens == std::vector<int>{1, 2, 2});
  }
  SUBCASE("constant stays constant at any rate") {
    AlignmentSequence a = make_ua(std::vector<int>(17, 4), 10);
    for (double dst : {10.0, 62.5, 100.0, 31.25}) {
      AlignmentSequence r = resample_alignment(a, 50.0, dst);
      for (int t : r.tokens) CHECK(t == 4);
    }
  }
  SUBCASE("support never grows") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> tokens(30);
      for (auto& t : tokens) t = static_cast<int>(rng.uniform_int(6));
      AlignmentSequence a = make_ua(tokens, 10);
      std::set<int> support(tokens.begin(), tokens.end());
      AlignmentSequence r = resample_alignment(a, 50.0, 27.0 + rng.uniform() * 80.0);
      for (int t : r.tokens) CHECK(support.count(t) == 1);
    }
  }
}

TEST_CASE("fa file and codebook round-trips") {
  namespace fs = std::filesystem;
  const fs::path d = fs::temp_directory_path() / "utts_test_alignment";
  fs::create_directories(d);

  PhonemeDurations pd;
  pd.phonemes = {3, 41, 70};
  pd.durations = {5, 2, 9};
  save_fa_file((d / "x.fa").string(), pd);
  PhonemeDurations r = load_fa_file((d / "x.fa").string());
  CHECK(r.phonemes == pd.phonemes);
  CHECK(r.durations == pd.durations);

  Codebook cb;
  cb.centroids = Mat::Random(12, 13);
  save_codebook((d / "cb.ucb").string(), cb);
  Codebook rc = load_codebook((d / "cb.ucb").string());
  CHECK(rc.k() == 12);
  CHECK(rc.dim() == 13);
  CHECK((rc.centroids - cb.centroids).cwiseAbs().maxCoeff() < 1e-6);
}
