#include <benchmark/benchmark.h>

#include "clb/controllers.hpp"
#include "clb/policy_ppo.hpp"
#include "clb/reward_trex.hpp"

namespace clb {
namespace {

void BM_EnvHour(benchmark::State& state) {
  EnvConfig cfg;
  cfg.ticks_per_hour = static_cast<int>(state.range(0));
  LoadBalancingEnv env(cfg, default_scenario(1));
  env.reset(1);
  const ActionVec a = neutral_action();
  int hour = 0;
  for (auto _ : state) {
    if (++hour == cfg.horizon) {
      env.reset(1);
      hour = 0;
    }
    benchmark::DoNotOptimize(env.step(a));
  }
}
BENCHMARK(BM_EnvHour)->Arg(36)->Arg(360)->Unit(benchmark::kMillisecond);

void BM_EnvReset(benchmark::State& state) {
  LoadBalancingEnv env(EnvConfig{}, default_scenario(1));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(env.reset(++seed));
}
BENCHMARK(BM_EnvReset)->Unit(benchmark::kMillisecond);

void BM_MlpForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Mlp net({kStateDim, 64, 64, 1}, {Activation::kLeakyRelu, Activation::kLeakyRelu, Activation::kIdentity});
  net.init_uniform(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(kStateDim, batch);
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, batch);
  std::vector<double> grad(net.parameter_count());
  for (auto _ : state) {
    Mlp::Cache cache;
    benchmark::DoNotOptimize(net.forward(x, &cache));
    std::fill(grad.begin(), grad.end(), 0.0);
    net.backward(cache, up, grad);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(32)->Arg(320);

std::vector<Trajectory> synthetic_demos(int m, int horizon) {
  Rng rng = make_rng(3);
  std::vector<Trajectory> out(static_cast<std::size_t>(m));
  for (auto& t : out) {
    for (int h = 0; h < horizon; ++h) {
      EnvState s;
      for (double& v : s) v = uniform(rng, 0.0, 5.0);
      t.states.push_back(s);
      t.actions.push_back(neutral_action());
    }
  }
  return out;
}

void BM_Sampler(benchmark::State& state) {
  const DemoSet ds = make_demo_set(synthetic_demos(100, 168), KpiConfig{}, 0.7);
  const RankedView view{ds.train(), ds.train_returns()};
  const auto kind = state.range(0) == 0 ? SamplerKind::kTcs : SamplerKind::kContiguous;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_pairs(kind, view, 1000, 10, ++seed));
  state.SetLabel(sampler_name(kind));
}
BENCHMARK(BM_Sampler)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrexLossBatch(benchmark::State& state) {
  const DemoSet ds = make_demo_set(synthetic_demos(20, 168), KpiConfig{}, 0.7);
  const RankedView view{ds.train(), ds.train_returns()};
  const auto pairs = tcs_sample(view, 32, 10, 1);
  RewardModel m = make_reward_model(1, 64);
  m.standardizer = Standardizer::fit(ds.ranked);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(trex_loss(m, pairs, &grad));
}
BENCHMARK(BM_TrexLossBatch)->Unit(benchmark::kMicrosecond);

void BM_PpoLossBatch(benchmark::State& state) {
  const ActorCritic ac = ActorCritic::make(1, 64);
  Rng rng = make_rng(2);
  PpoBatch b;
  for (int i = 0; i < 64; ++i) {
    EnvState s;
    for (double& v : s) v = uniform(rng, 0.0, 3.0);
    b.states.push_back(s);
    b.actions.push_back(sample_action(ac, s, rng, nullptr));
    b.old_log_probs.push_back(-40.0);
    b.advantages.push_back(standard_normal(rng));
    b.returns.push_back(standard_normal(rng));
  }
  std::vector<double> ga, gc;
  for (auto _ : state) benchmark::DoNotOptimize(ppo_loss(ac, b, PpoConfig{}, &ga, &gc));
}
BENCHMARK(BM_PpoLossBatch)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace clb

BENCHMARK_MAIN();
