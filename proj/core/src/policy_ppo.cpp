#include "clb/policy_ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "clb/kpi_rank.hpp"

namespace clb {
namespace {

constexpr std::uint64_t kCriticSeedSalt = 0x9e3779b97f4a7c15ULL;
// The last actor layer starts near zero so the first policy is close to
// uniform over every head.
constexpr double kActorOutputInitScale = 0.01;

int category(const ActionVec& action, int k) {
  const int c = action[static_cast<std::size_t>(k)] - action_lower_bound(k);
  if (c < 0 || c >= head_size(k)) throw std::invalid_argument("action component out of bounds");
  return c;
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int head_size(int component) {
  return action_upper_bound(component) - action_lower_bound(component) + 1;
}

int head_offset(int component) {
  int offset = 0;
  for (int k = 0; k < component; ++k) offset += head_size(k);
  return offset;
}

int total_logits() { return head_offset(kActionDim); }

ActorCritic ActorCritic::make(std::uint64_t seed, int hidden, const Standardizer& standardizer) {
  if (hidden <= 0) throw std::invalid_argument("hidden width must be positive");
  ActorCritic ac;
  ac.actor = Mlp({kStateDim, hidden, hidden, total_logits()},
                 {Activation::kTanh, Activation::kTanh, Activation::kIdentity});
  ac.critic = Mlp({kStateDim, hidden, hidden, 1},
                  {Activation::kTanh, Activation::kTanh, Activation::kIdentity});
  ac.actor.init_uniform(seed);
  ac.critic.init_uniform(seed ^ kCriticSeedSalt);
  const int last = ac.actor.layer_count() - 1;
  ac.actor.weight(last) *= kActorOutputInitScale;
  ac.actor.bias(last).setZero();
  ac.standardizer = standardizer;
  return ac;
}

Eigen::MatrixXd ActorCritic::inputs(std::span<const EnvState> states) const {
  Eigen::MatrixXd x(kStateDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t c = 0; c < states.size(); ++c) {
    const EnvState z = standardizer.apply(states[c]);
    for (int k = 0; k < kStateDim; ++k) x(k, static_cast<Eigen::Index>(c)) = z[static_cast<std::size_t>(k)];
  }
  return x;
}

double ActorCritic::value(const EnvState& s) const {
  return critic.forward(inputs(std::span<const EnvState>(&s, 1)))(0, 0);
}

nlohmann::json ActorCritic::to_json() const {
  return nlohmann::json{{"actor", actor.to_json()}, {"critic", critic.to_json()},
                        {"standardization", standardizer}};
}

ActorCritic ActorCritic::from_json(const nlohmann::json& j) {
  ActorCritic ac;
  try {
    ac.actor = Mlp::from_json(j.at("actor"));
    ac.critic = Mlp::from_json(j.at("critic"));
    ac.standardizer = j.at("standardization").get<Standardizer>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed policy JSON: ") + e.what());
  }
  if (ac.actor.input_size() != kStateDim || ac.actor.output_size() != total_logits() ||
      ac.critic.input_size() != kStateDim || ac.critic.output_size() != 1) {
    throw std::invalid_argument("policy networks have the wrong input or output size");
  }
  return ac;
}

Eigen::VectorXd head_log_probs(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (logits.size() != total_logits()) throw std::invalid_argument("logit vector has the wrong size");
  Eigen::VectorXd out(logits.size());
  for (int k = 0; k < kActionDim; ++k) {
    const auto seg = logits.segment(head_offset(k), head_size(k));
    const double m = seg.maxCoeff();
    const double lse = m + std::log((seg.array() - m).exp().sum());
    out.segment(head_offset(k), head_size(k)) = seg.array() - lse;
  }
  return out;
}

double action_log_prob(const Eigen::Ref<const Eigen::VectorXd>& log_probs, const ActionVec& action) {
  double total = 0.0;
  for (int k = 0; k < kActionDim; ++k) total += log_probs(head_offset(k) + category(action, k));
  return total;
}

ActionVec greedy_action(const ActorCritic& ac, const EnvState& s) {
  const Eigen::VectorXd logits = ac.actor.forward(ac.inputs(std::span<const EnvState>(&s, 1))).col(0);
  ActionVec a{};
  for (int k = 0; k < kActionDim; ++k) {
    Eigen::Index best = 0;
    logits.segment(head_offset(k), head_size(k)).maxCoeff(&best);
    a[static_cast<std::size_t>(k)] = action_lower_bound(k) + static_cast<int>(best);
  }
  return a;
}

ActionVec sample_action(const ActorCritic& ac, const EnvState& s, Rng& rng, double* log_prob) {
  const Eigen::VectorXd logits = ac.actor.forward(ac.inputs(std::span<const EnvState>(&s, 1))).col(0);
  const Eigen::VectorXd lp = head_log_probs(logits);
  ActionVec a{};
  for (int k = 0; k < kActionDim; ++k) {
    const int n = head_size(k);
    const int off = head_offset(k);
    const double u = uniform01(rng);
    double cum = 0.0;
    int pick = n - 1;
    for (int c = 0; c < n; ++c) {
      cum += std::exp(lp(off + c));
      if (u < cum) {
        pick = c;
        break;
      }
    }
    a[static_cast<std::size_t>(k)] = action_lower_bound(k) + pick;
  }
  if (log_prob) *log_prob = action_log_prob(lp, a);
  return a;
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(clip_range > 0.0)) throw std::invalid_argument("clip range must be positive");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("GAE lambda must lie in [0, 1]");
  if (!(learning_rate > 0.0) || weight_decay < 0.0) throw std::invalid_argument("invalid optimiser rates");
  if (total_timesteps < 0 || batch_size <= 0 || epochs <= 0 || rollout_steps <= 0 || hidden <= 0) {
    throw std::invalid_argument("invalid PPO sizes");
  }
}

void to_json(nlohmann::json& j, const PpoConfig& cfg) {
  j = nlohmann::json{{"learning_rate", cfg.learning_rate}, {"weight_decay", cfg.weight_decay},
                     {"total_timesteps", cfg.total_timesteps}, {"gamma", cfg.gamma},
                     {"clip_range", cfg.clip_range}, {"batch_size", cfg.batch_size},
                     {"gae_lambda", cfg.gae_lambda}, {"epochs", cfg.epochs},
                     {"entropy_coef", cfg.entropy_coef}, {"value_coef", cfg.value_coef},
                     {"rollout_steps", cfg.rollout_steps}, {"max_grad_norm", cfg.max_grad_norm},
                     {"hidden", cfg.hidden}};
}

void from_json(const nlohmann::json& j, PpoConfig& cfg) {
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.total_timesteps = j.value("total_timesteps", cfg.total_timesteps);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.clip_range = j.value("clip_range", cfg.clip_range);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.gae_lambda = j.value("gae_lambda", cfg.gae_lambda);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.entropy_coef = j.value("entropy_coef", cfg.entropy_coef);
  cfg.value_coef = j.value("value_coef", cfg.value_coef);
  cfg.rollout_steps = j.value("rollout_steps", cfg.rollout_steps);
  cfg.max_grad_norm = j.value("max_grad_norm", cfg.max_grad_norm);
  cfg.hidden = j.value("hidden", cfg.hidden);
}

RolloutCursor make_rollout_cursor(std::uint64_t seed) {
  RolloutCursor cursor;
  cursor.episode_seeds = make_rng(seed, 0x657069736f6465ULL);
  return cursor;
}

RolloutBuffer collect_rollout(LoadBalancingEnv& env, RolloutCursor& cursor, const ActorCritic& ac,
                              const RewardModel& reward, int n_steps, Rng& action_rng, bool greedy) {
  if (n_steps < 0) throw std::invalid_argument("n_steps must be non-negative");
  const int horizon = env.config().horizon;
  RolloutBuffer buf;
  for (int i = 0; i < n_steps; ++i) {
    if (!cursor.started || cursor.step >= horizon) {
      cursor.observation = env.reset(cursor.episode_seeds());
      cursor.step = 0;
      cursor.started = true;
    }
    const EnvState s = cursor.observation;
    double log_prob = 0.0;
    ActionVec action;
    if (greedy) {
      action = greedy_action(ac, s);
      const Eigen::VectorXd logits = ac.actor.forward(ac.inputs(std::span<const EnvState>(&s, 1))).col(0);
      log_prob = action_log_prob(head_log_probs(logits), action);
    } else {
      action = sample_action(ac, s, action_rng, &log_prob);
    }
    const EnvState next = env.step(action);
    ++cursor.step;
    buf.states.push_back(s);
    buf.actions.push_back(action);
    buf.log_probs.push_back(log_prob);
    buf.rewards.push_back(reward.reward(next));
    buf.next_states.push_back(next);
    buf.episode_end.push_back(cursor.step >= horizon ? 1 : 0);
    cursor.observation = next;
  }
  if (!buf.states.empty()) {
    const Eigen::MatrixXd v = ac.critic.forward(ac.inputs(buf.states));
    const Eigen::MatrixXd nv = ac.critic.forward(ac.inputs(buf.next_states));
    buf.values.assign(v.data(), v.data() + v.size());
    buf.next_values.assign(nv.data(), nv.data() + nv.size());
  }
  return buf;
}

RolloutBuffer collect_rollout(LoadBalancingEnv& env, const ActorCritic& ac,
                              const RewardModel& reward, int n_steps, std::uint64_t seed,
                              bool greedy) {
  RolloutCursor cursor = make_rollout_cursor(seed);
  Rng action_rng = make_rng(seed, 0x616374);
  return collect_rollout(env, cursor, ac, reward, n_steps, action_rng, greedy);
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.size();
  if (buffer.rewards.size() != n || buffer.values.size() != n || buffer.next_values.size() != n ||
      buffer.episode_end.size() != n) {
    throw std::invalid_argument("rollout buffer sequences differ in length");
  }
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double delta = buffer.rewards[t] + gamma * buffer.next_values[t] - buffer.values[t];
    const double carry = buffer.episode_end[t] ? 0.0 : gamma * lambda * next_adv;
    buffer.advantages[t] = delta + carry;
    buffer.returns[t] = buffer.advantages[t] + buffer.values[t];
    next_adv = buffer.advantages[t];
  }
}

PpoLossTerms ppo_loss(const ActorCritic& ac, const PpoBatch& batch, const PpoConfig& cfg,
                      std::vector<double>* actor_grad, std::vector<double>* critic_grad) {
  const std::size_t n = batch.states.size();
  if (n == 0) throw std::invalid_argument("ppo_loss needs a non-empty batch");
  if (batch.actions.size() != n || batch.old_log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n) {
    throw std::invalid_argument("PPO batch sequences differ in length");
  }
  const Eigen::MatrixXd x = ac.inputs(batch.states);
  Mlp::Cache actor_cache, critic_cache;
  const Eigen::MatrixXd logits = ac.actor.forward(x, actor_grad ? &actor_cache : nullptr);
  const Eigen::MatrixXd values = ac.critic.forward(x, critic_grad ? &critic_cache : nullptr);

  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = cfg.clip_range;
  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  Eigen::MatrixXd d_values(1, static_cast<Eigen::Index>(n));
  PpoLossTerms t;
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd lp = head_log_probs(logits.col(col));
    const double logp = action_log_prob(lp, batch.actions[i]);
    const double ratio = std::exp(logp - batch.old_log_probs[i]);
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    const double objective = std::min(unclipped, clipped);
    t.unclipped_objective += unclipped * inv_n;
    t.clipped_objective += objective * inv_n;
    t.approx_kl += (batch.old_log_probs[i] - logp) * inv_n;
    if (std::abs(ratio - 1.0) > eps) t.clip_fraction += inv_n;
    t.max_ratio_deviation = std::max(t.max_ratio_deviation, std::abs(ratio - 1.0));
    // Only the unclipped branch depends on the parameters.
    const double d_logp = unclipped <= clipped ? -ratio * adv * inv_n : 0.0;

    double entropy = 0.0;
    for (int k = 0; k < kActionDim; ++k) {
      const int off = head_offset(k);
      const int size = head_size(k);
      const int chosen = category(batch.actions[i], k);
      const Eigen::ArrayXd logp_head = lp.segment(off, size).array();
      const Eigen::ArrayXd p = logp_head.exp();
      const double h = -(p * logp_head).sum();
      entropy += h;
      // d(-coef * H)/dz_j = coef * p_j (log p_j + H)
      Eigen::ArrayXd g = -d_logp * p + cfg.entropy_coef * inv_n * p * (logp_head + h);
      g(chosen) += d_logp;
      d_logits.col(col).segment(off, size) = g.matrix();
    }
    t.entropy += entropy * inv_n;
    const double err = values(0, col) - batch.returns[i];
    t.value += err * err * inv_n;
    d_values(0, col) = 2.0 * cfg.value_coef * err * inv_n;
  }
  t.policy = -t.clipped_objective;
  t.total = t.policy + cfg.value_coef * t.value - cfg.entropy_coef * t.entropy;
  if (!std::isfinite(t.total)) throw NonFiniteError("non-finite PPO loss");
  if (actor_grad) {
    actor_grad->assign(ac.actor.parameter_count(), 0.0);
    ac.actor.backward(actor_cache, d_logits, *actor_grad);
  }
  if (critic_grad) {
    critic_grad->assign(ac.critic.parameter_count(), 0.0);
    ac.critic.backward(critic_cache, d_values, *critic_grad);
  }
  return t;
}

PpoOptimizer make_ppo_optimizer(const ActorCritic& ac, const PpoConfig& cfg) {
  const AdamConfig adam{.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay};
  return PpoOptimizer{AdamState(ac.actor.parameter_count(), adam),
                      AdamState(ac.critic.parameter_count(), adam)};
}

PpoUpdateStats ppo_update(ActorCritic& ac, PpoOptimizer& opt, const RolloutBuffer& buffer,
                          const PpoConfig& cfg, Rng& rng) {
  const std::size_t n = buffer.size();
  if (n == 0) throw std::invalid_argument("ppo_update on an empty buffer");
  if (buffer.advantages.size() != n || buffer.returns.size() != n) {
    throw std::invalid_argument("compute advantages before ppo_update");
  }
  std::vector<double> adv = buffer.advantages;
  const double mean = mean_of(adv);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  PpoUpdateStats stats;
  PpoBatch batch;
  std::vector<double> ga, gc;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      batch = PpoBatch{};
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        batch.states.push_back(buffer.states[i]);
        batch.actions.push_back(buffer.actions[i]);
        batch.old_log_probs.push_back(buffer.log_probs[i]);
        batch.advantages.push_back(adv[i]);
        batch.returns.push_back(buffer.returns[i]);
      }
      const PpoLossTerms t = ppo_loss(ac, batch, cfg, &ga, &gc);
      if (stats.minibatches == 0) stats.first_pass_max_ratio_deviation = t.max_ratio_deviation;
      if (t.clipped_objective > t.unclipped_objective + 1e-12) stats.clipped_never_above_unclipped = false;

      double sq = 0.0;
      for (double g : ga) sq += g * g;
      for (double g : gc) sq += g * g;
      const double norm = std::sqrt(sq);
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        const double scale = cfg.max_grad_norm / norm;
        for (double& g : ga) g *= scale;
        for (double& g : gc) g *= scale;
      }
      adam_update(opt.actor, ac.actor.parameters(), ga);
      adam_update(opt.critic, ac.critic.parameters(), gc);

      ++stats.minibatches;
      stats.policy_loss += t.policy;
      stats.value_loss += t.value;
      stats.entropy += t.entropy;
      stats.approx_kl += t.approx_kl;
      stats.clip_fraction += t.clip_fraction;
    }
  }
  const double m = static_cast<double>(stats.minibatches);
  stats.policy_loss /= m;
  stats.value_loss /= m;
  stats.entropy /= m;
  stats.approx_kl /= m;
  stats.clip_fraction /= m;
  return stats;
}

PolicyTrainResult train_policy(LoadBalancingEnv& env, const RewardModel& reward,
                               const PpoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PolicyTrainResult result;
  result.policy = ActorCritic::make(seed, cfg.hidden, reward.standardizer);
  if (cfg.total_timesteps == 0) return result;

  PpoOptimizer opt = make_ppo_optimizer(result.policy, cfg);
  RolloutCursor cursor = make_rollout_cursor(seed);
  Rng action_rng = make_rng(seed, 0x616374);
  Rng update_rng = make_rng(seed, 0x757064);
  const KpiConfig kpi;
  int done = 0;
  int update = 0;
  while (done < cfg.total_timesteps) {
    const int n = std::min(cfg.rollout_steps, cfg.total_timesteps - done);
    RolloutBuffer buffer = collect_rollout(env, cursor, result.policy, reward, n, action_rng);
    compute_gae(buffer, cfg.gamma, cfg.gae_lambda);
    PpoUpdateStats stats;
    try {
      stats = ppo_update(result.policy, opt, buffer, cfg, update_rng);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("policy training diverged at update " + std::to_string(update + 1) +
                           " (" + std::to_string(done) + " steps): " + e.what());
    }
    done += n;
    ++update;
    LearningCurveRow row;
    row.update = update;
    row.timesteps = done;
    row.mean_learned_reward = mean_of(buffer.rewards);
    double rank = 0.0;
    for (const auto& s : buffer.next_states) rank += rank_reward(s, kpi);
    row.mean_rank_reward = rank / static_cast<double>(buffer.size());
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.entropy = stats.entropy;
    row.approx_kl = stats.approx_kl;
    row.clip_fraction = stats.clip_fraction;
    result.curve.push_back(row);
  }
  return result;
}

void write_learning_curve_csv(std::ostream& os, std::span<const LearningCurveRow> curve) {
  os << "update,timesteps,mean_learned_reward,mean_rank_reward,policy_loss,value_loss,entropy,"
        "approx_kl,clip_fraction\n";
  const auto old = os.precision(17);
  for (const auto& r : curve) {
    os << r.update << ',' << r.timesteps << ',' << r.mean_learned_reward << ',' << r.mean_rank_reward
       << ',' << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ',' << r.approx_kl << ','
       << r.clip_fraction << '\n';
  }
  os.precision(old);
}

}  // namespace clb
