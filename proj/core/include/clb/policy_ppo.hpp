#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "clb/env_mdp.hpp"
#include "clb/nn_core.hpp"
#include "clb/reward_trex.hpp"
#include "clb/rng.hpp"

namespace clb {

/// Number of categories of action component k (its integer range).
int head_size(int component);
/// Offset of head k inside the actor's logit vector.
int head_offset(int component);
/// Sum of all head sizes (4 * 11 + 12 * 13).
int total_logits();

/// Factorised categorical policy (one head per action component) and a value
/// network, both reading the standardised state.
struct ActorCritic {
  Mlp actor;
  Mlp critic;
  Standardizer standardizer = Standardizer::identity();

  static ActorCritic make(std::uint64_t seed, int hidden = 256,
                          const Standardizer& standardizer = Standardizer::identity());

  /// Standardised states, one per column.
  Eigen::MatrixXd inputs(std::span<const EnvState> states) const;
  double value(const EnvState& s) const;

  nlohmann::json to_json() const;
  static ActorCritic from_json(const nlohmann::json& j);

  bool operator==(const ActorCritic&) const = default;
};

/// Per-head log-softmax of one logit column.
Eigen::VectorXd head_log_probs(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Action component k maps to category action[k] - lower_bound(k).
double action_log_prob(const Eigen::Ref<const Eigen::VectorXd>& log_probs, const ActionVec& action);

ActionVec greedy_action(const ActorCritic& ac, const EnvState& s);
ActionVec sample_action(const ActorCritic& ac, const EnvState& s, Rng& rng,
                        double* log_prob = nullptr);

struct PpoConfig {
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  int total_timesteps = 50000;
  double gamma = 0.97;
  double clip_range = 0.15;
  int batch_size = 64;
  double gae_lambda = 0.95;
  int epochs = 10;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int rollout_steps = 2048;
  double max_grad_norm = 0.5;
  int hidden = 256;

  void validate() const;
};

void to_json(nlohmann::json& j, const PpoConfig& cfg);
void from_json(const nlohmann::json& j, PpoConfig& cfg);

struct RolloutBuffer {
  std::vector<EnvState> states;
  std::vector<ActionVec> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;      // learned reward of the successor state
  std::vector<double> values;
  std::vector<double> next_values;  // V of the successor state, also at episode ends
  std::vector<char> episode_end;    // the transition closed an episode
  std::vector<EnvState> next_states;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return states.size(); }
};

/// Where a multi-rollout collection stands inside the current episode.
struct RolloutCursor {
  EnvState observation{};
  int step = 0;  // steps taken in the current episode
  bool started = false;
  Rng episode_seeds;
};

RolloutCursor make_rollout_cursor(std::uint64_t seed);

/// Steps the environment n_steps times, resetting it with a fresh seed at every
/// episode boundary (the env's configured horizon).
RolloutBuffer collect_rollout(LoadBalancingEnv& env, RolloutCursor& cursor, const ActorCritic& ac,
                              const RewardModel& reward, int n_steps, Rng& action_rng,
                              bool greedy = false);
RolloutBuffer collect_rollout(LoadBalancingEnv& env, const ActorCritic& ac,
                              const RewardModel& reward, int n_steps, std::uint64_t seed,
                              bool greedy = false);

/// Generalised advantage estimation; episode ends cut the recursion but still
/// bootstrap from next_values (episodes are time-limited, not terminal).
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

struct PpoBatch {
  std::vector<EnvState> states;
  std::vector<ActionVec> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct PpoLossTerms {
  double total = 0.0;
  double policy = 0.0;           // -mean(min(r A, clip(r) A))
  double unclipped_objective = 0.0;  // mean(r A)
  double clipped_objective = 0.0;    // mean(min(r A, clip(r) A))
  double value = 0.0;            // mean((V - R)^2)
  double entropy = 0.0;          // mean over samples of the summed head entropies
  double approx_kl = 0.0;        // mean(old_logp - logp)
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;  // max |r - 1|
};

/// policy + value_coef * value - entropy_coef * entropy. Gradients (when
/// requested) are overwritten, one buffer per network.
PpoLossTerms ppo_loss(const ActorCritic& ac, const PpoBatch& batch, const PpoConfig& cfg,
                      std::vector<double>* actor_grad = nullptr,
                      std::vector<double>* critic_grad = nullptr);

struct PpoOptimizer {
  AdamState actor;
  AdamState critic;
};

PpoOptimizer make_ppo_optimizer(const ActorCritic& ac, const PpoConfig& cfg);

struct PpoUpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double first_pass_max_ratio_deviation = 0.0;
  bool clipped_never_above_unclipped = true;
  int minibatches = 0;
};

/// Advantages are normalised over the whole buffer before the epochs start.
PpoUpdateStats ppo_update(ActorCritic& ac, PpoOptimizer& opt, const RolloutBuffer& buffer,
                          const PpoConfig& cfg, Rng& rng);

struct LearningCurveRow {
  int update = 0;
  int timesteps = 0;
  double mean_learned_reward = 0.0;
  double mean_rank_reward = 0.0;  // R_f of the visited states, for monitoring only
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct PolicyTrainResult {
  ActorCritic policy;
  std::vector<LearningCurveRow> curve;
};

PolicyTrainResult train_policy(LoadBalancingEnv& env, const RewardModel& reward,
                               const PpoConfig& cfg, std::uint64_t seed);

void write_learning_curve_csv(std::ostream& os, std::span<const LearningCurveRow> curve);

}  // namespace clb
