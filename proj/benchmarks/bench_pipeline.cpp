#include <benchmark/benchmark.h>

#include <random>

#include "geovid/corpus.hpp"
#include "geovid/dense_flow.hpp"
#include "geovid/eval.hpp"
#include "geovid/inference.hpp"
#include "geovid/segmentation.hpp"

using namespace geovid;

namespace {

const SyntheticVideo& scene() {
  static const SyntheticVideo v = generate_synthetic_video(random_scene_spec(7, 64, 64, 30));
  return v;
}

const PreparedVideo& prepared() {
  static const PreparedVideo v = [] {
    PrepareOptions o;
    o.level_fractions = {0.1, 0.2};
    PreparedVideo p = prepare_video(scene().frames, scene().pixel_gt, o);
    p.id = "bench";
    return p;
  }();
  return v;
}

void BM_Flow(benchmark::State& st) {
  const auto& f = scene().frames;
  for (auto _ : st) benchmark::DoNotOptimize(estimate_flow(f[0], f[1]));
}
BENCHMARK(BM_Flow)->Unit(benchmark::kMillisecond);

void BM_Oversegment(benchmark::State& st) {
  const auto& seq = scene().frames;
  const auto flows = forward_flows(seq, {});
  for (auto _ : st) benchmark::DoNotOptimize(oversegment(seq, flows));
}
BENCHMARK(BM_Oversegment)->Unit(benchmark::kMillisecond);

void BM_Hierarchy(benchmark::State& st) {
  const auto& seq = scene().frames;
  const auto flows = forward_flows(seq, {});
  const auto base = oversegment(seq, flows);
  for (auto _ : st) benchmark::DoNotOptimize(build_hierarchy(base, seq, flows, {0.1, 0.2, 0.3, 0.4, 0.5}));
}
BENCHMARK(BM_Hierarchy)->Unit(benchmark::kMillisecond);

void BM_PrepareVideo(benchmark::State& st) {
  PrepareOptions o;
  o.level_fractions = {0.1, 0.2};
  for (auto _ : st) benchmark::DoNotOptimize(prepare_video(scene().frames, std::nullopt, o));
}
BENCHMARK(BM_PrepareVideo)->Unit(benchmark::kMillisecond);

void BM_TrainBundle(benchmark::State& st) {
  ExampleOptions eo;
  eo.level_fractions = {0.1, 0.2};
  PreparedVideo v = prepared();
  attach_ground_truth(v, annotate_from_pixels(v.hierarchy.base(), *v.pixel_gt, v.id));
  const LabeledSet data = training_examples(v, eo);
  BoostParams p;
  p.rounds = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(train_bundle(data, p));
  st.counters["rows"] = static_cast<double>(data.size());
}
BENCHMARK(BM_TrainBundle)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Fusion(benchmark::State& st) {
  std::mt19937_64 rng(1);
  std::vector<LevelPrediction> lv(static_cast<std::size_t>(st.range(0)));
  for (auto& l : lv) {
    l.main = {0.2, 0.3, 0.5};
    l.subvertical = {0.6, 0.3, 0.1};
    l.homogeneity = std::uniform_real_distribution<double>(0.1, 1)(rng);
  }
  for (auto _ : st) benchmark::DoNotOptimize(fuse_hierarchy_posteriors(lv));
}
BENCHMARK(BM_Fusion)->Arg(2)->Arg(5);

void BM_LabelVideo(benchmark::State& st) {
  const auto& v = prepared();
  PreparedVideo labeled = v;
  attach_ground_truth(labeled, annotate_from_pixels(v.hierarchy.base(), *v.pixel_gt, v.id));
  ExampleOptions eo;
  eo.level_fractions = {0.1, 0.2};
  const ClassifierBundle model = train_bundle(training_examples(labeled, eo), {});
  InferenceConfig ic;
  ic.window = static_cast<int>(st.range(0));
  std::size_t calls = 0;
  for (auto _ : st) {
    const auto l = label_video(v.hierarchy, v.features, model, ic);
    calls = l.classifier_calls;
    benchmark::DoNotOptimize(l);
  }
  st.counters["classifier_calls"] = static_cast<double>(calls);
}
BENCHMARK(BM_LabelVideo)->Arg(1)->Arg(25)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
