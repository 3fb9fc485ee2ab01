// OpenMP kernels against the serial reference, plus end-to-end
// certification on the toy transformer. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "maskcert/certifier.hpp"
#include "maskcert/kernels.hpp"
#include "maskcert/model_io.hpp"
#include "maskcert/random.hpp"
#include "maskcert/toy.hpp"

using namespace maskcert;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng{seed};
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = 2.0f * rng.uniform() - 1.0f;
  return t;
}

// ViT-B/16 token count (197) with the width as the argument.
template <Tensor (*Matmul)(const Tensor&, const Tensor&)>
void BM_Matmul(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({197, d}, 1), b = random_tensor({d, 3 * d}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 197 * static_cast<std::int64_t>(d * 3 * d));
}

template <Tensor (*Attention)(const AttentionInput&)>
void BM_Attention(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Tensor qkv = random_tensor({197, 3 * d}, 3);
  std::vector<bool> allowed(197, true);
  for (std::size_t i = 20; i < 40; ++i) allowed[i] = false;
  for (auto _ : state) benchmark::DoNotOptimize(Attention({qkv, d / 64, allowed}));
}

void BM_ToyCertify(benchmark::State& state) {
  const ModelConfig config = toy_config(10);
  const VitModel model(config, random_init(config, 1));
  const Certifier cert(model, build_plan(config, {5, 5}));
  Image img = Image::blank(config);
  Rng rng{4};
  for (float& v : img.pixels.data()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(cert.certify(img));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cert.plan().k() + 1));
}

}  // namespace

BENCHMARK(BM_Matmul<kernels::matmul>)->Name("matmul/omp")->Arg(192)->Arg(384)->Arg(768);
BENCHMARK(BM_Matmul<reference::matmul>)->Name("matmul/reference")->Arg(192)->Arg(384)->Arg(768);
BENCHMARK(BM_Attention<kernels::attention>)->Name("attention/omp")->Arg(192)->Arg(768);
BENCHMARK(BM_Attention<reference::attention>)->Name("attention/reference")->Arg(192)->Arg(768);
BENCHMARK(BM_ToyCertify)->Name("certify/toy");

BENCHMARK_MAIN();
