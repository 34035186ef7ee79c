#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clb/env_mdp.hpp"
#include "clb/kpi_rank.hpp"
#include "clb/nn_core.hpp"

namespace clb {

/// Per-feature affine standardisation fitted on the training partition.
struct Standardizer {
  EnvState mean{};
  EnvState scale{};  // std, floored away from zero

  static Standardizer identity();
  static Standardizer fit(std::span<const Trajectory> trajectories);
  EnvState apply(const EnvState& s) const;

  bool operator==(const Standardizer&) const = default;
};

void to_json(nlohmann::json& j, const Standardizer& s);
void from_json(const nlohmann::json& j, Standardizer& s);

/// r_hat(s) = net(standardize(s)); 12 -> 64 -> 64 -> 1 with leaky ReLU on the
/// first two layers.
struct RewardModel {
  Mlp net;
  Standardizer standardizer = Standardizer::identity();

  double reward(const EnvState& s) const;
  std::vector<double> rewards(std::span<const EnvState> states) const;

  nlohmann::json to_json() const;
  static RewardModel from_json(const nlohmann::json& j);

  bool operator==(const RewardModel&) const = default;
};

RewardModel make_reward_model(std::uint64_t seed, int hidden = 64);

/// Sum of per-state predicted rewards.
double predict_return(const RewardModel& model, std::span<const EnvState> states);

/// Demonstrations in ascending order of ranking return.
struct DemoSet {
  std::vector<Trajectory> ranked;
  std::vector<double> returns;
  std::vector<std::size_t> source_index;  // position of each ranked trajectory in the input
  std::size_t train_count = 0;
  KpiConfig kpi;
  bool has_ties = false;

  std::span<const Trajectory> train() const {
    return std::span<const Trajectory>(ranked).first(train_count);
  }
  std::span<const Trajectory> extrapolation() const {
    return std::span<const Trajectory>(ranked).subspan(train_count);
  }
  std::span<const double> train_returns() const {
    return std::span<const double>(returns).first(train_count);
  }
};

/// Ranks and splits: the worst floor(train_fraction * m) trajectories train.
DemoSet make_demo_set(std::vector<Trajectory> trajectories, const KpiConfig& kpi,
                      double train_fraction = 0.7);

enum class SamplerKind { kTcs, kContiguous };

std::string sampler_name(SamplerKind kind);
SamplerKind sampler_from_name(const std::string& name);

struct PreferencePair {
  std::vector<EnvState> a;
  std::vector<EnvState> b;
  int label = 0;  // 0: A's source trajectory ranks higher, 1: B's does
  std::vector<int> indices_a;
  std::vector<int> indices_b;
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
};

/// Ranked trajectories (ascending) with their returns, used as sampling input.
struct RankedView {
  std::span<const Trajectory> trajectories;
  std::span<const double> returns;
};

/// Pair built from ranked trajectories x and y sliced at the given indices.
/// The label points at the higher-ranked source.
PreferencePair make_preference_pair(const RankedView& demos, std::size_t x, std::size_t y,
                                    std::vector<int> indices_a, std::vector<int> indices_b);

std::vector<PreferencePair> tcs_sample(const RankedView& demos, int count, int length,
                                       std::uint64_t seed);
std::vector<PreferencePair> contiguous_sample(const RankedView& demos, int count, int length,
                                              std::uint64_t seed);
std::vector<PreferencePair> sample_pairs(SamplerKind kind, const RankedView& demos, int count,
                                         int length, std::uint64_t seed);

/// Fraction of pairs whose sub-trajectory R_f ordering contradicts the label.
double mislabel_rate(std::span<const PreferencePair> pairs, const KpiConfig& cfg);

/// exp(J_j) / (exp(J_i) + exp(J_j)).
double pref_prob(double j_i, double j_j);

/// Mean over pairs of -log P(worse < better). When `grad` is non-null it is
/// overwritten with the gradient w.r.t. the network parameters.
double trex_loss(const RewardModel& model, std::span<const PreferencePair> batch,
                 std::vector<double>* grad = nullptr);

struct RewardTrainConfig {
  SamplerKind sampler = SamplerKind::kTcs;
  int pairs = 5000;
  int epochs = 200;
  int sub_length = 10;
  int batch_size = 32;
  int hidden = 64;
  AdamConfig adam{.learning_rate = 1e-5, .weight_decay = 1e-4};
};

void to_json(nlohmann::json& j, const RewardTrainConfig& cfg);
void from_json(const nlohmann::json& j, RewardTrainConfig& cfg);

struct RewardEpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;  // fraction of pairs ordered correctly
};

struct RewardTrainResult {
  RewardModel model;
  std::vector<RewardEpochLog> log;
};

/// Seed train_reward hands to the pair sampler for a given training seed.
inline std::uint64_t pair_sampling_seed(std::uint64_t seed) { return seed ^ 0x5eedULL; }

RewardTrainResult train_reward(const DemoSet& demos, const RewardTrainConfig& cfg,
                               std::uint64_t seed);

void write_training_log_csv(std::ostream& os, std::span<const RewardEpochLog> log);

struct ScatterRow {
  double predicted_return = 0.0;
  double rf_return = 0.0;
  std::string partition;  // "train" or "extrapolation"
};

struct ExtrapolationReport {
  std::optional<double> pearson_train;
  std::optional<double> pearson_extrap;
  std::vector<ScatterRow> scatter;
};

ExtrapolationReport extrapolation_report(const RewardModel& model, const DemoSet& demos);

void write_scatter_csv(std::ostream& os, std::span<const ScatterRow> rows);

}  // namespace clb
