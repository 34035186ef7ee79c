#include "clb/reward_trex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "clb/rng.hpp"

namespace clb {
namespace {

constexpr double kMinScale = 1e-6;
constexpr int kMaxResampleAttempts = 100000;

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_sampling_input(const RankedView& demos, int count, int length) {
  if (demos.trajectories.size() < 2 || demos.returns.size() != demos.trajectories.size()) {
    throw std::invalid_argument("sampling needs at least two ranked trajectories with returns");
  }
  if (count < 0) throw std::invalid_argument("pair count must be non-negative");
  if (length <= 0) throw std::invalid_argument("sub-trajectory length must be positive");
  std::size_t horizon = demos.trajectories.front().states.size();
  for (const auto& t : demos.trajectories) horizon = std::min(horizon, t.states.size());
  if (static_cast<std::size_t>(length) > horizon) {
    throw std::invalid_argument("sub-trajectory length exceeds the trajectory horizon");
  }
  const auto [lo, hi] = std::minmax_element(demos.returns.begin(), demos.returns.end());
  if (*lo == *hi) throw std::invalid_argument("all demonstrations have equal returns");
}

// Uniform pair of distinct-return trajectories.
std::pair<std::size_t, std::size_t> draw_trajectory_pair(const RankedView& demos, Rng& rng) {
  const std::size_t m = demos.trajectories.size();
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    const std::size_t x = uniform_index(rng, m);
    const std::size_t y = uniform_index(rng, m);
    if (x == y || demos.returns[x] == demos.returns[y]) continue;
    return {x, y};
  }
  throw std::runtime_error("could not draw a pair with distinct returns");
}

std::vector<int> draw_index_set(std::size_t horizon, int length, Rng& rng) {
  std::vector<int> pool(horizon);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < length; ++k) {
    const std::size_t j = static_cast<std::size_t>(k) + uniform_index(rng, horizon - static_cast<std::size_t>(k));
    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(length));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<EnvState> slice(const Trajectory& t, std::span<const int> indices) {
  std::vector<EnvState> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(t.states[static_cast<std::size_t>(i)]);
  return out;
}

struct LossDetail {
  double loss = 0.0;
  int correct = 0;
};

LossDetail trex_loss_detail(const RewardModel& model, std::span<const PreferencePair> batch,
                            std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("trex_loss needs a non-empty batch");
  std::size_t total = 0;
  for (const auto& p : batch) total += p.a.size() + p.b.size();
  Eigen::MatrixXd x(kStateDim, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& p : batch) {
    for (const auto* side : {&p.a, &p.b}) {
      for (const auto& s : *side) {
        const EnvState z = model.standardizer.apply(s);
        for (int k = 0; k < kStateDim; ++k) x(k, col) = z[static_cast<std::size_t>(k)];
        ++col;
      }
    }
  }
  Mlp::Cache cache;
  const Eigen::MatrixXd r = model.net.forward(x, grad ? &cache : nullptr);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Eigen::MatrixXd upstream(1, static_cast<Eigen::Index>(total));
  LossDetail out;
  col = 0;
  for (const auto& p : batch) {
    const Eigen::Index na = static_cast<Eigen::Index>(p.a.size());
    const Eigen::Index nb = static_cast<Eigen::Index>(p.b.size());
    const double ja = r.block(0, col, 1, na).sum();
    const double jb = r.block(0, col + na, 1, nb).sum();
    const bool a_better = p.label == 0;
    const double j_better = a_better ? ja : jb;
    const double j_worse = a_better ? jb : ja;
    out.loss += softplus(j_worse - j_better) * inv_n;
    if (j_better > j_worse) ++out.correct;
    // d/dJ_worse = sigmoid(J_worse - J_better) = -d/dJ_better
    const double g = sigmoid(j_worse - j_better) * inv_n;
    upstream.block(0, col, 1, na).setConstant(a_better ? -g : g);
    upstream.block(0, col + na, 1, nb).setConstant(a_better ? g : -g);
    col += na + nb;
  }
  if (!std::isfinite(out.loss)) throw NonFiniteError("non-finite preference loss");
  if (grad) {
    grad->assign(model.net.parameter_count(), 0.0);
    model.net.backward(cache, upstream, *grad);
  }
  return out;
}

}  // namespace

Standardizer Standardizer::identity() {
  Standardizer s;
  s.mean.fill(0.0);
  s.scale.fill(1.0);
  return s;
}

Standardizer Standardizer::fit(std::span<const Trajectory> trajectories) {
  Standardizer s = identity();
  double n = 0.0;
  EnvState sum{}, sq{};
  for (const auto& t : trajectories) {
    for (const auto& st : t.states) {
      for (std::size_t k = 0; k < st.size(); ++k) sum[k] += st[k];
      n += 1.0;
    }
  }
  if (n == 0.0) return s;
  for (std::size_t k = 0; k < sum.size(); ++k) s.mean[k] = sum[k] / n;
  for (const auto& t : trajectories) {
    for (const auto& st : t.states) {
      for (std::size_t k = 0; k < st.size(); ++k) sq[k] += (st[k] - s.mean[k]) * (st[k] - s.mean[k]);
    }
  }
  for (std::size_t k = 0; k < sq.size(); ++k) s.scale[k] = std::max(std::sqrt(sq[k] / n), kMinScale);
  return s;
}

EnvState Standardizer::apply(const EnvState& s) const {
  EnvState out;
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = (s[k] - mean[k]) / scale[k];
  return out;
}

void to_json(nlohmann::json& j, const Standardizer& s) {
  j = nlohmann::json{{"mean", s.mean}, {"scale", s.scale}};
}

void from_json(const nlohmann::json& j, Standardizer& s) {
  s.mean = j.at("mean").get<EnvState>();
  s.scale = j.at("scale").get<EnvState>();
}

double RewardModel::reward(const EnvState& s) const {
  const EnvState z = standardizer.apply(s);
  return net.forward_one(z)(0);
}

std::vector<double> RewardModel::rewards(std::span<const EnvState> states) const {
  Eigen::MatrixXd x(kStateDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t c = 0; c < states.size(); ++c) {
    const EnvState z = standardizer.apply(states[c]);
    for (int k = 0; k < kStateDim; ++k) x(k, static_cast<Eigen::Index>(c)) = z[static_cast<std::size_t>(k)];
  }
  const Eigen::MatrixXd r = net.forward(x);
  return std::vector<double>(r.data(), r.data() + r.size());
}

nlohmann::json RewardModel::to_json() const {
  return nlohmann::json{{"net", net.to_json()}, {"standardizer", standardizer}};
}

RewardModel RewardModel::from_json(const nlohmann::json& j) {
  RewardModel m;
  m.net = Mlp::from_json(j.at("net"));
  m.standardizer = j.at("standardizer").get<Standardizer>();
  if (m.net.input_size() != kStateDim || m.net.output_size() != 1) {
    throw std::invalid_argument("reward model must map 12 inputs to one output");
  }
  return m;
}

RewardModel make_reward_model(std::uint64_t seed, int hidden) {
  RewardModel m;
  m.net = Mlp({kStateDim, hidden, hidden, 1},
              {Activation::kLeakyRelu, Activation::kLeakyRelu, Activation::kIdentity});
  m.net.init_uniform(seed);
  return m;
}

double predict_return(const RewardModel& model, std::span<const EnvState> states) {
  if (states.empty()) throw std::invalid_argument("predict_return of an empty sequence");
  const auto r = model.rewards(states);
  return std::accumulate(r.begin(), r.end(), 0.0);
}

DemoSet make_demo_set(std::vector<Trajectory> trajectories, const KpiConfig& kpi,
                      double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  const DemoRanking ranking = rank_demos(trajectories, kpi);
  DemoSet demos;
  demos.kpi = kpi;
  demos.has_ties = ranking.has_ties;
  demos.returns = ranking.returns;
  demos.source_index = ranking.order;
  for (std::size_t idx : ranking.order) demos.ranked.push_back(std::move(trajectories[idx]));
  demos.train_count = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(demos.ranked.size()) + 1e-9));
  return demos;
}

std::string sampler_name(SamplerKind kind) {
  return kind == SamplerKind::kTcs ? "tcs" : "contiguous";
}

SamplerKind sampler_from_name(const std::string& name) {
  if (name == "tcs") return SamplerKind::kTcs;
  if (name == "contiguous") return SamplerKind::kContiguous;
  throw std::invalid_argument("unknown sampler: " + name);
}

PreferencePair make_preference_pair(const RankedView& demos, std::size_t x, std::size_t y,
                                    std::vector<int> indices_a, std::vector<int> indices_b) {
  if (x >= demos.trajectories.size() || y >= demos.trajectories.size() || x == y) {
    throw std::invalid_argument("pair needs two distinct ranked trajectories");
  }
  if (indices_a.size() != indices_b.size() || indices_a.empty()) {
    throw std::invalid_argument("sub-trajectories must be non-empty and of equal length");
  }
  const auto in_range = [](const Trajectory& t, const std::vector<int>& idx) {
    return std::all_of(idx.begin(), idx.end(), [&](int i) {
      return i >= 0 && static_cast<std::size_t>(i) < t.states.size();
    });
  };
  if (!in_range(demos.trajectories[x], indices_a) || !in_range(demos.trajectories[y], indices_b)) {
    throw std::invalid_argument("sub-trajectory index out of range");
  }
  PreferencePair p;
  p.a = slice(demos.trajectories[x], indices_a);
  p.b = slice(demos.trajectories[y], indices_b);
  p.indices_a = std::move(indices_a);
  p.indices_b = std::move(indices_b);
  p.rank_a = x;
  p.rank_b = y;
  p.label = x > y ? 0 : 1;
  return p;
}

std::vector<PreferencePair> tcs_sample(const RankedView& demos, int count, int length,
                                       std::uint64_t seed) {
  check_sampling_input(demos, count, length);
  Rng rng = make_rng(seed, 0x746373);
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto [x, y] = draw_trajectory_pair(demos, rng);
    const std::size_t horizon =
        std::min(demos.trajectories[x].states.size(), demos.trajectories[y].states.size());
    std::vector<int> idx = draw_index_set(horizon, length, rng);
    pairs.push_back(make_preference_pair(demos, x, y, idx, idx));
  }
  return pairs;
}

std::vector<PreferencePair> contiguous_sample(const RankedView& demos, int count, int length,
                                              std::uint64_t seed) {
  check_sampling_input(demos, count, length);
  Rng rng = make_rng(seed, 0x636f6e);
  const auto block = [&](const Trajectory& t) {
    const std::size_t starts = t.states.size() - static_cast<std::size_t>(length) + 1;
    const int start = static_cast<int>(uniform_index(rng, starts));
    std::vector<int> idx(static_cast<std::size_t>(length));
    std::iota(idx.begin(), idx.end(), start);
    return idx;
  };
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto [x, y] = draw_trajectory_pair(demos, rng);
    std::vector<int> ia = block(demos.trajectories[x]);
    std::vector<int> ib = block(demos.trajectories[y]);
    pairs.push_back(make_preference_pair(demos, x, y, std::move(ia), std::move(ib)));
  }
  return pairs;
}

std::vector<PreferencePair> sample_pairs(SamplerKind kind, const RankedView& demos, int count,
                                         int length, std::uint64_t seed) {
  return kind == SamplerKind::kTcs ? tcs_sample(demos, count, length, seed)
                                   : contiguous_sample(demos, count, length, seed);
}

double mislabel_rate(std::span<const PreferencePair> pairs, const KpiConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("mislabel_rate of an empty pair set");
  std::size_t bad = 0;
  for (const auto& p : pairs) {
    const double ra = trajectory_return(p.a, cfg);
    const double rb = trajectory_return(p.b, cfg);
    if ((p.label == 0 && ra < rb) || (p.label == 1 && rb < ra)) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(pairs.size());
}

double pref_prob(double j_i, double j_j) {
  return sigmoid(j_j - j_i);
}

double trex_loss(const RewardModel& model, std::span<const PreferencePair> batch,
                 std::vector<double>* grad) {
  return trex_loss_detail(model, batch, grad).loss;
}

void to_json(nlohmann::json& j, const RewardTrainConfig& cfg) {
  j = nlohmann::json{{"sampler", sampler_name(cfg.sampler)},
                     {"pairs", cfg.pairs},
                     {"epochs", cfg.epochs},
                     {"sub_length", cfg.sub_length},
                     {"batch_size", cfg.batch_size},
                     {"hidden", cfg.hidden},
                     {"adam", cfg.adam}};
}

void from_json(const nlohmann::json& j, RewardTrainConfig& cfg) {
  if (j.contains("sampler")) cfg.sampler = sampler_from_name(j.at("sampler").get<std::string>());
  cfg.pairs = j.value("pairs", cfg.pairs);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.sub_length = j.value("sub_length", cfg.sub_length);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.hidden = j.value("hidden", cfg.hidden);
  if (j.contains("adam")) cfg.adam = j.at("adam").get<AdamConfig>();
}

RewardTrainResult train_reward(const DemoSet& demos, const RewardTrainConfig& cfg,
                               std::uint64_t seed) {
  if (demos.train_count < 2) throw std::invalid_argument("training partition needs >= 2 trajectories");
  if (cfg.batch_size <= 0 || cfg.epochs < 0 || cfg.pairs <= 0) {
    throw std::invalid_argument("invalid reward training configuration");
  }
  RewardTrainResult result;
  result.model = make_reward_model(seed, cfg.hidden);
  result.model.standardizer = Standardizer::fit(demos.train());
  if (cfg.epochs == 0) return result;

  const RankedView view{demos.train(), demos.train_returns()};
  const auto pairs = sample_pairs(cfg.sampler, view, cfg.pairs, cfg.sub_length, pair_sampling_seed(seed));
  AdamState adam(result.model.net.parameter_count(), cfg.adam);
  Rng rng = make_rng(seed, 0x747261696e);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PreferencePair> batch;
  std::vector<double> grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[uniform_index(rng, k)]);
    }
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);
      const LossDetail d = trex_loss_detail(result.model, batch, &grad);
      adam_update(adam, result.model.net.parameters(), grad);
      loss_sum += d.loss * static_cast<double>(end - start);
      correct += d.correct;
    }
    result.log.push_back(RewardEpochLog{
        .epoch = epoch + 1,
        .mean_loss = loss_sum / static_cast<double>(pairs.size()),
        .accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size())});
  }
  return result;
}

void write_training_log_csv(std::ostream& os, std::span<const RewardEpochLog> log) {
  os << "epoch,mean_loss,accuracy\n";
  const auto old = os.precision(17);
  for (const auto& e : log) os << e.epoch << ',' << e.mean_loss << ',' << e.accuracy << '\n';
  os.precision(old);
}

ExtrapolationReport extrapolation_report(const RewardModel& model, const DemoSet& demos) {
  ExtrapolationReport report;
  std::vector<double> pred_train, rf_train, pred_extrap, rf_extrap;
  for (std::size_t k = 0; k < demos.ranked.size(); ++k) {
    const double predicted = predict_return(model, demos.ranked[k].states);
    const bool train = k < demos.train_count;
    (train ? pred_train : pred_extrap).push_back(predicted);
    (train ? rf_train : rf_extrap).push_back(demos.returns[k]);
    report.scatter.push_back(ScatterRow{predicted, demos.returns[k], train ? "train" : "extrapolation"});
  }
  if (pred_train.size() >= 2) report.pearson_train = pearson(pred_train, rf_train);
  if (pred_extrap.size() >= 2) report.pearson_extrap = pearson(pred_extrap, rf_extrap);
  return report;
}

void write_scatter_csv(std::ostream& os, std::span<const ScatterRow> rows) {
  os << "predicted_return,rf_return,partition\n";
  const auto old = os.precision(17);
  for (const auto& r : rows) os << r.predicted_return << ',' << r.rf_return << ',' << r.partition << '\n';
  os.precision(old);
}

}  // namespace clb
