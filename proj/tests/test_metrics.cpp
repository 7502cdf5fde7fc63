#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "odetex/metrics.hpp"

using namespace odetex;
using ad::Tensor;

namespace {

Tensor rand_frame(int n, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(3) * n * n);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor::constant({3, n, n}, std::move(v));
}

// Final-layer descriptor: global average pool over the last bank layer.
std::vector<double> descriptor(const Tensor& frame,
                               const loss::FeatureBank& bank) {
  auto feats = loss::extract_features(frame, bank);
  const Tensor& f = feats.back();
  const int c = f.shape()[0];
  const int m = f.shape()[1] * f.shape()[2];
  std::vector<double> d(c, 0.0);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < m; ++j) d[i] += f.values()[i * m + j];
    d[i] /= m;
  }
  return d;
}

}  // namespace

TEST_CASE("non-straightness of a collinear descriptor path is zero") {
  // The bank has zero biases, so conv+relu is positively 1-homogeneous and
  // scaling a frame scales its descriptor: ramped copies walk a straight ray.
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(1);
  Tensor base = rand_frame(12, rng);
  std::vector<Tensor> frames;
  for (float s : {0.2f, 0.5f, 0.8f, 1.1f, 1.4f})
    frames.push_back(ad::mul_scalar(base, s));
  bool degenerate = true;
  const double ns = metrics::non_straightness(frames, bank, &degenerate);
  CHECK(!degenerate);
  CHECK(ns == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("alternating frames give turning angle pi") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(2);
  Tensor a = rand_frame(12, rng);
  Tensor b = rand_frame(12, rng);
  std::vector<Tensor> frames{a, b, a, b, a};
  bool degenerate = true;
  const double ns = metrics::non_straightness(frames, bank, &degenerate);
  CHECK(!degenerate);
  CHECK(ns == doctest::Approx(M_PI).epsilon(1e-5));
}

TEST_CASE("non-straightness is invariant to uniform scaling of the video") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(3);
  std::vector<Tensor> frames, scaled;
  for (int i = 0; i < 6; ++i) {
    frames.push_back(rand_frame(12, rng));
    scaled.push_back(ad::mul_scalar(frames.back(), 0.5f));
  }
  const double a = metrics::non_straightness(frames, bank);
  const double b = metrics::non_straightness(scaled, bank);
  CHECK(a == doctest::Approx(b).epsilon(1e-5));
  CHECK(a > 0.0);
}

TEST_CASE("non-straightness matches a direct arccos oracle") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(4);
  std::vector<Tensor> frames;
  for (int i = 0; i < 7; ++i) frames.push_back(rand_frame(12, rng));

  std::vector<std::vector<double>> d;
  for (const auto& f : frames) d.push_back(descriptor(f, bank));
  double sum = 0;
  int count = 0;
  for (std::size_t i = 0; i + 2 < d.size(); ++i) {
    std::vector<double> u(d[i].size()), v(d[i].size());
    double nu = 0, nv = 0, dot = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
      u[j] = d[i + 1][j] - d[i][j];
      v[j] = d[i + 2][j] - d[i + 1][j];
      nu += u[j] * u[j];
      nv += v[j] * v[j];
      dot += u[j] * v[j];
    }
    sum += std::acos(std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0));
    ++count;
  }
  const double want = sum / count;
  CHECK(metrics::non_straightness(frames, bank) ==
        doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("degenerate paths are flagged") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(5);
  Tensor a = rand_frame(12, rng);

  bool degenerate = false;
  metrics::non_straightness({a, a, a, a}, bank, &degenerate);
  CHECK(degenerate);  // zero-length differences

  degenerate = false;
  metrics::non_straightness({a, rand_frame(12, rng)}, bank, &degenerate);
  CHECK(degenerate);  // fewer than three frames
}

TEST_CASE("realism of a video against itself is zero") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(6);
  std::vector<Tensor> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(rand_frame(12, rng));
  Rng mr(7);
  metrics::RealismScores s = metrics::realism(frames, frames, bank, 16, mr);
  CHECK(s.gram == 0.0);
  CHECK(s.swd == 0.0);
  REQUIRE(s.gram_per_frame.size() == 4);
  for (double g : s.gram_per_frame) CHECK(g == 0.0);
  for (double w : s.swd_per_frame) CHECK(w == 0.0);
}

TEST_CASE("realism scores are frame-wise means") {
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});
  Rng rng(8);
  std::vector<Tensor> a, b;
  for (int i = 0; i < 3; ++i) {
    a.push_back(rand_frame(12, rng));
    b.push_back(rand_frame(12, rng));
  }
  Rng mr(9);
  metrics::RealismScores s = metrics::realism(a, b, bank, 16, mr);
  double gm = 0, wm = 0;
  for (double g : s.gram_per_frame) gm += g;
  for (double w : s.swd_per_frame) wm += w;
  CHECK(s.gram == doctest::Approx(gm / 3).epsilon(1e-9));
  CHECK(s.swd == doctest::Approx(wm / 3).epsilon(1e-9));
  CHECK(s.gram > 0.0);
  CHECK(s.swd > 0.0);

  CHECK_THROWS(metrics::realism(a, {b[0]}, bank, 16, mr));
}

TEST_CASE("relighting uses the training light plus three novel ones") {
  auto lightings = metrics::relight_lightings();
  REQUIRE(lightings.size() == 4);
  CHECK(lightings[0].name == "center");
  CHECK(lightings[0].pos == render::Vec3{0.0, 0.0, 1.0});
  for (const auto& l : lightings) CHECK(l.pos[2] > 0.0);
  // all distinct
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      CHECK(lightings[i].pos != lightings[j].pos);
}

TEST_CASE("relight evaluation renders every lighting deterministically") {
  field::FieldConfig fcfg = field::desk_svbrdf_preset();
  Rng rng(10);
  field::FieldParams params = field::init_params(fcfg, rng);
  loss::FeatureBank bank = loss::FeatureBank::builtin(7, {8, 16});

  const std::vector<double> times{0.0, 1.0, 2.0, 3.0};
  auto run = [&] {
    return metrics::relight_eval(params, fcfg, 8, 8, -1.0, times, 1e-2, 21,
                                 bank, 8);
  };
  auto results = run();
  REQUIRE(results.size() == 4);
  for (const auto& r : results) {
    REQUIRE(r.frames.size() == times.size());
    for (const auto& f : r.frames) {
      CHECK(f.shape() == ad::Shape{3, 8, 8});
      for (float v : f.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
    CHECK(!r.has_realism);
  }
  // Same latent trajectory, different shading per lighting.
  CHECK(results[0].frames[1].values() != results[1].frames[1].values());

  auto again = run();
  for (std::size_t i = 0; i < results.size(); ++i)
    for (std::size_t j = 0; j < times.size(); ++j)
      CHECK(results[i].frames[j].values() == again[i].frames[j].values());

  // With references supplied, realism scores appear.
  std::map<std::string, std::vector<Tensor>> refs;
  refs["center"] = results[0].frames;
  auto scored = metrics::relight_eval(params, fcfg, 8, 8, -1.0, times, 1e-2,
                                      21, bank, 8, &refs);
  CHECK(scored[0].has_realism);
  CHECK(scored[0].realism.gram == 0.0);  // identical to its own reference
  CHECK(!scored[1].has_realism);
}
