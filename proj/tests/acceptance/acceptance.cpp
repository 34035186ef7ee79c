// Runs the eight acceptance criteria at their stated tolerances and prints one
// PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clb/controllers.hpp"
#include "clb/io.hpp"
#include "clb/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace clb;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Checker {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  bool pass() const { return pass_; }
  const std::string& failures() const { return failures_; }

 private:
  bool pass_ = true;
  std::string failures_;
};

bool near(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

Outcome closed_form() {
  Checker c;
  c.check(t_min(std::vector<double>{2.0, 3.0, 1.5, 4.0}) == 1.5, "t_min");
  c.check(near(t_std(std::vector<double>{1, 1, 3, 3}), 1.0), "t_std");
  c.check(t_std(std::vector<double>{2, 2, 2, 2}) == 0.0, "t_std constant");
  c.check(t_cc(std::vector<double>{0.5, 2.0, 0.9, 3.0}, 1.0) == 2, "t_cc");
  c.check(t_cc(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 1.0) == 0, "t_cc at threshold");
  c.check(near(pref_prob(1.3, 1.3), 0.5), "pref_prob equal returns");
  c.check(near(pref_prob(0.0, std::log(3.0)), 0.75), "pref_prob ln 3");

  RewardModel m = make_reward_model(11, 16);
  const int last = m.net.layer_count() - 1;
  m.net.weight(last).setZero();
  m.net.bias(last).setZero();
  const DemoSet ds = make_demo_set(test::diurnal_demos(10, 24, 5), KpiConfig{}, 0.7);
  const RankedView view{ds.ranked, ds.returns};
  for (SamplerKind s : {SamplerKind::kTcs, SamplerKind::kContiguous}) {
    c.check(near(trex_loss(m, sample_pairs(s, view, 50, 6, 1)), std::numbers::ln2), "loss ln 2");
  }
  const auto r_pos = pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6});
  const auto r_neg = pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1});
  c.check(r_pos && near(*r_pos, 1.0), "pearson +1");
  c.check(r_neg && near(*r_neg, -1.0), "pearson -1");
  return {c.pass(), c.pass() ? "all closed-form values within 1e-12" : c.failures()};
}

Outcome gradient_fidelity() {
  Rng rng = make_rng(2024);
  double worst_trex = 0.0, worst_ppo = 0.0;
  const int configs = 20;
  for (int trial = 0; trial < configs; ++trial) {
    const DemoSet ds = make_demo_set(test::diurnal_demos(6, 12, rng()), KpiConfig{}, 0.7);
    const RankedView view{ds.ranked, ds.returns};
    const auto pairs = sample_pairs(trial % 2 ? SamplerKind::kTcs : SamplerKind::kContiguous, view,
                                    uniform_int(rng, 1, 6), uniform_int(rng, 1, 5), rng());
    RewardModel m = make_reward_model(rng(), uniform_int(rng, 2, 8));
    m.standardizer = Standardizer::fit(ds.ranked);
    std::vector<double> grad;
    trex_loss(m, pairs, &grad);
    const auto numeric =
        test::central_differences(m.net, [&] { return test::oracle_trex_loss(m, pairs); }, 1e-5);
    worst_trex = std::max(worst_trex, relative_error(grad, numeric));
  }
  for (int trial = 0; trial < configs; ++trial) {
    PpoConfig cfg;
    cfg.entropy_coef = uniform(rng, 0.0, 0.1);
    cfg.value_coef = uniform(rng, 0.1, 1.0);
    cfg.clip_range = uniform(rng, 0.1, 0.3);
    ActorCritic ac = ActorCritic::make(rng(), uniform_int(rng, 2, 5));
    ac.actor.weight(ac.actor.layer_count() - 1) *= 50.0;
    const PpoBatch batch = test::random_ppo_batch(ac, rng, uniform_int(rng, 1, 4), 0.3);
    std::vector<double> ga, gc;
    ppo_loss(ac, batch, cfg, &ga, &gc);
    auto loss = [&] { return test::oracle_ppo_loss(ac, batch, cfg); };
    worst_ppo = std::max(worst_ppo, relative_error(ga, test::central_differences(ac.actor, loss, 1e-6)));
    worst_ppo = std::max(worst_ppo, relative_error(gc, test::central_differences(ac.critic, loss, 1e-6)));
  }
  const bool ok = worst_trex < 1e-4 && worst_ppo < 1e-4;
  return {ok, fmt("%d configs each, max relative error trex %.2e, ppo %.2e (< 1e-4)", configs, worst_trex,
                  worst_ppo)};
}

struct ScenarioData {
  int id = 0;
  std::vector<Trajectory> demos;
  DemoSet set;
};

RunConfig acceptance_config(const fs::path& out) {
  RunConfig cfg;
  cfg.out = out;
  return cfg;
}

ScenarioData collect(const fs::path& out, int scenario) {
  RunConfig cfg = acceptance_config(out);
  cfg.scenarios = {scenario};
  std::ostringstream log;
  cmd_collect_demos(cfg, log);
  ScenarioData d;
  d.id = scenario;
  d.demos = load_demos(cfg, scenario);
  d.set = make_demo_set(d.demos, cfg.kpi, cfg.train_fraction);
  return d;
}

Outcome tcs_consistency(const std::vector<ScenarioData>& data) {
  const RewardTrainConfig rc;
  std::size_t tcs_total = 0, tcs_shared = 0, contig_total = 0, contig_shared = 0;
  for (const auto& d : data) {
    const RankedView view{d.set.train(), d.set.train_returns()};
    for (const auto& p : tcs_sample(view, rc.pairs, rc.sub_length, 1)) {
      ++tcs_total;
      tcs_shared += p.indices_a == p.indices_b;
    }
    for (const auto& p : contiguous_sample(view, rc.pairs, rc.sub_length, 1)) {
      ++contig_total;
      contig_shared += p.indices_a == p.indices_b;
    }
  }
  const double tcs_frac = static_cast<double>(tcs_shared) / static_cast<double>(tcs_total);
  const double contig_frac = static_cast<double>(contig_shared) / static_cast<double>(contig_total);
  return {tcs_shared == tcs_total && contig_shared < contig_total,
          fmt("TCS pairs sharing index sets %.1f%% of %zu, contiguous %.1f%% of %zu", 100 * tcs_frac,
              tcs_total, 100 * contig_frac, contig_total)};
}

Outcome mislabel_reduction(const std::vector<ScenarioData>& data) {
  const RewardTrainConfig rc;
  const KpiConfig kpi;
  std::string detail;
  int scenarios_ok = 0;
  for (const auto& d : data) {
    const RankedView view{d.set.train(), d.set.train_returns()};
    bool all_seeds = true;
    detail += fmt("scenario %d ratios", d.id);
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const std::uint64_t s = pair_sampling_seed(seed);
      const double tcs = mislabel_rate(tcs_sample(view, rc.pairs, rc.sub_length, s), kpi);
      const double contig = mislabel_rate(contiguous_sample(view, rc.pairs, rc.sub_length, s), kpi);
      const double ratio = tcs / contig;
      all_seeds &= ratio <= 0.7;
      detail += fmt(" %.3f (%.3f/%.3f)", ratio, tcs, contig);
    }
    scenarios_ok += all_seeds;
    detail += "; ";
  }
  detail += "need <= 0.70 on every seed of >= 2 scenarios";
  return {scenarios_ok >= 2, detail};
}

struct RewardRuns {
  std::map<int, RewardModel> tcs_seed0;
  Outcome outcome;
};

RewardRuns extrapolation_advantage(const std::vector<ScenarioData>& data) {
  RewardRuns runs;
  std::string detail;
  bool ok = true;
  for (const auto& d : data) {
    double sum[2] = {0.0, 0.0};
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      for (SamplerKind s : {SamplerKind::kTcs, SamplerKind::kContiguous}) {
        RewardTrainConfig rc;
        rc.sampler = s;
        const auto t0 = std::chrono::steady_clock::now();
        const RewardTrainResult r = train_reward(d.set, rc, seed);
        const ExtrapolationReport rep = extrapolation_report(r.model, d.set);
        const double p = rep.pearson_extrap.value_or(0.0);
        sum[s == SamplerKind::kTcs ? 0 : 1] += p;
        std::fprintf(stderr, "  scenario %d seed %llu %s: extrapolation pearson %.3f (%.0fs)\n", d.id,
                     static_cast<unsigned long long>(seed), sampler_name(s).c_str(), p,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (seed == 0 && s == SamplerKind::kTcs) runs.tcs_seed0.emplace(d.id, r.model);
      }
    }
    const double tcs = sum[0] / 3, contig = sum[1] / 3;
    ok &= tcs - contig >= 0.03 && tcs >= 0.7;
    detail += fmt("scenario %d TCS %.3f vs contiguous %.3f; ", d.id, tcs, contig);
  }
  detail += "need TCS - contiguous >= 0.03 and TCS >= 0.70 per scenario";
  runs.outcome = {ok, detail};
  return runs;
}

// Learning curves and KPI reports are kept under `out` for inspection.
Outcome policy_improvement(const fs::path& out, const std::vector<ScenarioData>& data,
                           const std::map<int, RewardModel>& rewards) {
  const RunConfig cfg;
  std::string detail;
  int scenarios_ok = 0;
  for (const auto& d : data) {
    LoadBalancingEnv env = make_env(cfg, d.id);
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyTrainResult trained = train_policy(env, rewards.at(d.id), cfg.ppo, cfg.seed);
    std::fprintf(stderr, "  scenario %d: PPO %d steps in %.0fs\n", d.id, cfg.ppo.total_timesteps,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    PolicyController ours(trained.policy, "ours");
    FixedRuleController fixed;
    const KpiReport demos = kpi_report_from_trajectories(d.demos, cfg.kpi, "demos");
    const KpiReport fix = evaluate_controller(fixed, env, cfg.eval.seeds, cfg.kpi, "fixed").report;
    const KpiReport pol = evaluate_controller(ours, env, cfg.eval.seeds, cfg.kpi, "ours").report;
    const fs::path dir = out / "policy_improvement" / ("scenario" + std::to_string(d.id));
    std::ostringstream curve, ours_csv, fixed_csv, demos_csv;
    write_learning_curve_csv(curve, trained.curve);
    write_kpi_report_csv(ours_csv, pol);
    write_kpi_report_csv(fixed_csv, fix);
    write_kpi_report_csv(demos_csv, demos);
    write_text_file(dir / "learning_curve.csv", curve.str());
    write_text_file(dir / "ours_kpi.csv", ours_csv.str());
    write_text_file(dir / "fixed_kpi.csv", fixed_csv.str());
    write_text_file(dir / "demos_kpi.csv", demos_csv.str());
    write_json_file(dir / "policy.json", trained.policy.to_json());
    const bool ok = pol.t_min.mean > demos.t_min.mean && pol.t_min.mean >= fix.t_min.mean &&
                    pol.t_std.mean < demos.t_std.mean;
    scenarios_ok += ok;
    detail += fmt("scenario %d %s: T_min %.3f (demos %.3f, fixed %.3f), T_std %.3f (demos %.3f); ", d.id,
                  ok ? "ok" : "not met", pol.t_min.mean, demos.t_min.mean, fix.t_min.mean,
                  pol.t_std.mean, demos.t_std.mean);
  }
  detail += "need >= 2 scenarios";
  return {scenarios_ok >= 2, detail};
}

std::map<std::string, std::string> file_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[e.path().lexically_relative(root).generic_string()] = read_text_file(e.path());
  }
  return files;
}

// Runs every stage twice into separate directories and compares all bytes.
Outcome determinism(const fs::path& out) {
  auto run = [](const fs::path& dir) {
    fs::remove_all(dir);
    RunConfig cfg = acceptance_config(dir);
    cfg.scenarios = {1, 2};
    cfg.env.horizon = 24;
    cfg.env.ticks_per_hour = 36;
    cfg.demo_count = 8;
    cfg.reward.pairs = 64;
    cfg.reward.epochs = 2;
    cfg.reward.sub_length = 5;
    cfg.ppo.total_timesteps = 256;
    cfg.ppo.rollout_steps = 128;
    cfg.eval.seeds = {101, 102};
    std::ostringstream log;
    cmd_collect_demos(cfg, log);
    for (SamplerKind s : {SamplerKind::kTcs, SamplerKind::kContiguous}) {
      cfg.sampler = s;
      cmd_train_reward(cfg, log);
      cmd_train_policy(cfg, log);
    }
    cfg.sampler = SamplerKind::kTcs;
    cmd_evaluate(cfg, log);
    cmd_report(cfg, log);
    return file_tree(dir);
  };
  const auto a = run(out / "determinism_a");
  const auto b = run(out / "determinism_b");
  std::size_t same = 0;
  for (const auto& [name, contents] : a) {
    auto it = b.find(name);
    same += it != b.end() && it->second == contents;
  }
  return {same == a.size() && a.size() == b.size() && !a.empty(),
          fmt("%zu of %zu artifacts byte-identical across reruns", same, a.size())};
}

Outcome structural_counts(const ScenarioData& d) {
  const Topology topo = build_topology(TopologyConfig{});
  Checker c;
  c.check(topo.cells.size() == 84, "cells");
  c.check(topo.sector_count() == 21, "sectors");
  c.check(kStateDim == 12, "state length");
  c.check(kActionDim == 16, "action length");
  c.check(d.demos.size() == 100 && d.set.train().size() == 70 && d.set.extrapolation().size() == 30,
          "demo split");
  return {c.pass(), c.pass() ? fmt("%zu cells, %d sectors, state %d, action %d, split %zu/%zu", topo.cells.size(),
                                   topo.sector_count(), kStateDim, kActionDim, d.set.train().size(),
                                   d.set.extrapolation().size())
                             : c.failures()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path out = "acceptance_out";
  std::vector<int> scenarios{1, 3};
  app.add_option("--out", out, "Working directory for demos and determinism runs");
  app.add_option("--scenarios", scenarios, "Scenarios for the empirical criteria")->check(CLI::Range(1, 4));
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  auto timed = [&](int id, const char* name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    const Outcome o = f();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("AC%d %s  %s: %s [%.0fs]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    all &= o.pass;
  };

  timed(1, "closed-form exactness", closed_form);
  timed(2, "gradient fidelity", gradient_fidelity);

  std::vector<ScenarioData> data;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s : scenarios) data.push_back(collect(out, s));
  std::fprintf(stderr, "demonstrations ready in %.0fs\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

  timed(3, "TCS consistency", [&] { return tcs_consistency(data); });
  timed(4, "mislabel reduction", [&] { return mislabel_reduction(data); });
  RewardRuns rewards;
  timed(5, "extrapolation advantage", [&] {
    rewards = extrapolation_advantage(data);
    return rewards.outcome;
  });
  timed(6, "policy improvement", [&] { return policy_improvement(out, data, rewards.tcs_seed0); });
  timed(7, "determinism", [&] { return determinism(out); });
  timed(8, "structural counts", [&] { return structural_counts(data.front()); });

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all ? 0 : 1;
}
