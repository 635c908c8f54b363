#include <benchmark/benchmark.h>

#include "capture/challenge.hpp"
#include "capture/cppn.hpp"
#include "capture/desk_data.hpp"
#include "capture/patch.hpp"
#include "capture/registry.hpp"

using namespace capture;

namespace {

const ClassifierPool& pool() {
  static const ClassifierPool p = ClassifierPool::load(std::filesystem::path(CAPTURE_DATA_DIR) / "fixtures/models/desk_pool.json");
  return p;
}

ImageTensor desk_image(int size) {
  Rng rng(1);
  return desk::render_object(3, size, size, rng);
}

void BM_RenderCppn(benchmark::State& state) {
  Rng rng(7);
  CPPNGenome g = CPPNGenome::initial(rng, 7);
  for (int i = 0; i < 30; ++i) g = mutate_cppn(g, {}, rng);
  const int size = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(render_cppn(g, size, size));
}
BENCHMARK(BM_RenderCppn)->Arg(32)->Arg(224);

void BM_Predict(benchmark::State& state) {
  const auto model = pool().get(pool().ids()[static_cast<std::size_t>(state.range(0))]);
  const auto img = desk_image(96);
  for (auto _ : state) benchmark::DoNotOptimize(model->predict(img));
  state.SetLabel(model->id());
}
BENCHMARK(BM_Predict)->DenseRange(0, 2);

void BM_InputGradient(benchmark::State& state) {
  const auto model = pool().get(pool().ids()[static_cast<std::size_t>(state.range(0))]);
  const auto img = desk_image(224);
  for (auto _ : state) benchmark::DoNotOptimize(model->input_gradient(img, 5));
  state.SetLabel(model->id());
}
BENCHMARK(BM_InputGradient)->DenseRange(0, 2);

void BM_ApplyPatch(benchmark::State& state) {
  const ImageTensor patch(64, 64, 0.5);
  const auto host = desk_image(96);
  const PatchTransform t{20.0, 0.6, 48.0, 48.0};
  for (auto _ : state) benchmark::DoNotOptimize(apply_patch(patch, MaskShape::disc, host, t));
}
BENCHMARK(BM_ApplyPatch);

void BM_Assemble(benchmark::State& state) {
  const auto root = std::filesystem::temp_directory_path() / "capture-bench-store";
  std::filesystem::remove_all(root);
  auto store = AssetStore::create(root);
  int tag = 0;
  auto tiny = [&tag] {
    ImageTensor img(2, 2);
    img.at(0, 0, 0) = (tag % 256) / 255.0;
    img.at(0, 1, 0) = (tag / 256 % 256) / 255.0;
    ++tag;
    return img;
  };
  for (int c = 0; c < 10; ++c) {
    for (int k = 0; k < 10; ++k) {
      store.add(tiny(), Provenance::clean, c, std::nullopt, {});
      store.add(tiny(), Provenance::unrec_cppn, std::nullopt, c, {});
      for (int p = 0; p < 10; ++p) {
        if (p != c) store.add(tiny(), Provenance::patched, c, p, {});
      }
    }
  }
  const LabelSpace labels(std::vector<std::string>(std::begin(desk::kClassNames), std::end(desk::kClassNames)));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble(ChallengeSpec::defaults(Scheme::combined, seed % 10, seed), store, labels));
    ++seed;
  }
}
BENCHMARK(BM_Assemble);

}  // namespace

BENCHMARK_MAIN();
