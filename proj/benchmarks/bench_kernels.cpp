#include <benchmark/benchmark.h>

#include <vector>

#include "odetex/field.hpp"
#include "odetex/loss.hpp"
#include "odetex/ode.hpp"
#include "odetex/tensor.hpp"

using namespace odetex;
using ad::Tensor;

namespace {

void jitter(field::FieldParams& params, Rng& rng, float scale) {
  for (auto& [name, t] : params.named()) {
    Tensor leaf = t;
    for (auto& v : leaf.mutable_values())
      v += static_cast<float>(rng.normal()) * scale;
  }
}

void BM_conv2d_circular(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  Rng rng(1);
  Tensor x = Tensor::randn({c, n, n}, rng);
  Tensor k = ad::mul_scalar(Tensor::randn({c, c, 3, 3}, rng), 0.1f);
  Tensor b = Tensor::zeros({c});
  ad::NoGradGuard ng;
  for (auto _ : state) {
    Tensor y = ad::conv2d_circular(x, k, b);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(c) * c * n * n * 9);
}

void BM_conv2d_backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  Rng rng(2);
  Tensor x = Tensor::randn({c, n, n}, rng);
  Tensor k = Tensor::param({c, c, 3, 3},
                           ad::mul_scalar(Tensor::randn({c, c, 3, 3}, rng),
                                          0.1f)
                               .values());
  Tensor b = Tensor::param({c}, std::vector<float>(c, 0.0f));
  for (auto _ : state) {
    k.zero_grad();
    b.zero_grad();
    ad::backward(ad::sum_all(ad::conv2d_circular(x, k, b)));
    benchmark::DoNotOptimize(k.grad().data());
  }
}

void BM_eval_field(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  field::FieldConfig cfg = field::desk_rgb_preset();
  Rng rng(3);
  field::FieldParams p = field::init_params(cfg, rng);
  jitter(p, rng, 0.3f);
  Tensor z = Tensor::randn({cfg.state_channels, n, n}, rng);
  ad::NoGradGuard ng;
  for (auto _ : state) {
    Tensor f = field::eval_field(p, cfg, z, 0.5);
    benchmark::DoNotOptimize(f.values().data());
  }
}

void BM_solve_adaptive(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  field::FieldConfig cfg = field::desk_rgb_preset();
  Rng rng(4);
  field::FieldParams p = field::init_params(cfg, rng);
  jitter(p, rng, 0.3f);
  const ode::Field f = field::make_field(p, cfg);
  Tensor z0 = Tensor::randn({cfg.state_channels, n, n}, rng);
  ad::NoGradGuard ng;
  long nfe = 0;
  for (auto _ : state) {
    ode::SolveStats stats;
    Tensor z1 = ode::solve_adaptive(f, z0, -1.0, 1.0, 1e-2, &stats);
    nfe += stats.nfe;
    benchmark::DoNotOptimize(z1.values().data());
  }
  state.counters["nfe/solve"] =
      benchmark::Counter(double(nfe) / state.iterations());
}

void BM_swd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  loss::FeatureBank bank = loss::FeatureBank::builtin();
  Rng rng(5);
  Tensor a = Tensor::randn({3, n, n}, rng);
  Tensor b = Tensor::randn({3, n, n}, rng);
  auto fa = loss::extract_features(a, bank);
  auto fb = loss::extract_features(b, bank);
  ad::NoGradGuard ng;
  Rng sr(6);
  for (auto _ : state) {
    Tensor l = loss::swd(fa, fb, 64, sr);
    benchmark::DoNotOptimize(l.item());
  }
}

void BM_gram(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  loss::FeatureBank bank = loss::FeatureBank::builtin();
  Rng rng(7);
  auto fa = loss::extract_features(Tensor::randn({3, n, n}, rng), bank);
  auto fb = loss::extract_features(Tensor::randn({3, n, n}, rng), bank);
  ad::NoGradGuard ng;
  for (auto _ : state) {
    Tensor l = loss::gram_loss(fa, fb);
    benchmark::DoNotOptimize(l.item());
  }
}

}  // namespace

BENCHMARK(BM_conv2d_circular)->Args({16, 32})->Args({32, 32})->Args({32, 64});
BENCHMARK(BM_conv2d_backward)->Args({16, 32})->Args({32, 32});
BENCHMARK(BM_eval_field)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_solve_adaptive)->Arg(16)->Arg(32);
BENCHMARK(BM_swd)->Arg(32)->Arg(64);
BENCHMARK(BM_gram)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
