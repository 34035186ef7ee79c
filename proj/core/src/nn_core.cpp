#include "clb/nn_core.hpp"

#include <algorithm>
#include <cmath>

#include "clb/rng.hpp"

namespace clb {
namespace {

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kLeakyRelu:
      z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakyReluSlope * v; });
      break;
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::kIdentity:
      break;
  }
}

// Derivative expressed through the activation output; valid because both
// leaky ReLU (slope > 0) and tanh are sign/value-recoverable from their output.
void scale_by_derivative(Activation a, const Eigen::MatrixXd& out, Eigen::MatrixXd& delta) {
  switch (a) {
    case Activation::kLeakyRelu:
      delta.array() *= out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakyReluSlope; }).array();
      break;
    case Activation::kTanh:
      delta.array() *= (1.0 - out.array().square());
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

Mlp::Mlp(std::vector<int> sizes, std::vector<Activation> activations)
    : sizes_(std::move(sizes)), activations_(std::move(activations)) {
  if (sizes_.size() < 2 || activations_.size() != sizes_.size() - 1) {
    throw std::invalid_argument("an MLP needs n+1 layer sizes for n activations");
  }
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(sizes_[l] + 1) * static_cast<std::size_t>(sizes_[l + 1]);
  }
  params_.assign(offset, 0.0);
}

std::size_t Mlp::bias_offset(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return offsets_[l] + static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]);
}

void Mlp::init_uniform(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6d6c70);
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = std::sqrt(1.0 / sizes_[static_cast<std::size_t>(l)]);
    auto w = weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform(rng, -bound, bound);
    }
    auto b = bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = uniform(rng, -bound, bound);
  }
}

Eigen::Map<Mlp::RowMajorMatrix> Mlp::weight(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Mlp::RowMajorMatrix> Mlp::weight(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != input_size()) throw std::invalid_argument("input dimension mismatch");
  if (cache) {
    cache->inputs.resize(activations_.size());
    cache->activations.resize(activations_.size());
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    apply_activation(activations_[static_cast<std::size_t>(l)], z);
    if (cache) {
      cache->inputs[static_cast<std::size_t>(l)] = std::move(h);
      cache->activations[static_cast<std::size_t>(l)] = z;
    }
    h = std::move(z);
  }
  return h;
}

Eigen::VectorXd Mlp::forward_one(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward(Eigen::MatrixXd(xv)).col(0);
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& upstream, std::span<double> grad,
                   Eigen::MatrixXd* input_grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  if (cache.activations.size() != activations_.size()) {
    throw std::invalid_argument("backward needs a cache from forward");
  }
  if (upstream.rows() != output_size() ||
      upstream.cols() != cache.activations.back().cols()) {
    throw std::invalid_argument("upstream gradient shape mismatch");
  }
  Eigen::MatrixXd delta = upstream;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    scale_by_derivative(activations_[li], cache.activations[li], delta);
    Eigen::Map<RowMajorMatrix> gw(grad.data() + weight_offset(l), sizes_[li + 1], sizes_[li]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), sizes_[li + 1]);
    gw.noalias() += delta * cache.inputs[li].transpose();
    gb += delta.rowwise().sum();
    if (l > 0 || input_grad) {
      Eigen::MatrixXd next = weight(l).transpose() * delta;
      delta = std::move(next);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["sizes"] = sizes_;
  std::vector<std::string> acts;
  for (auto a : activations_) acts.push_back(activation_name(a));
  j["activations"] = acts;
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < layer_count(); ++l) {
    const auto w = weight(l);
    std::vector<double> flat(w.data(), w.data() + w.size());
    const auto b = bias(l);
    layers.push_back({{"weights", flat}, {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  j["layers"] = layers;
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  try {
    std::vector<Activation> acts;
    for (const auto& name : j.at("activations")) acts.push_back(activation_from_name(name.get<std::string>()));
    Mlp net(j.at("sizes").get<std::vector<int>>(), acts);
    const auto& layers = j.at("layers");
    if (layers.size() != acts.size()) throw std::invalid_argument("layer count mismatch");
    for (int l = 0; l < net.layer_count(); ++l) {
      const auto w = layers[static_cast<std::size_t>(l)].at("weights").get<std::vector<double>>();
      const auto b = layers[static_cast<std::size_t>(l)].at("bias").get<std::vector<double>>();
      auto wm = net.weight(l);
      auto bm = net.bias(l);
      if (static_cast<Eigen::Index>(w.size()) != wm.size() || static_cast<Eigen::Index>(b.size()) != bm.size()) {
        throw std::invalid_argument("parameter array size mismatch");
      }
      std::copy(w.begin(), w.end(), wm.data());
      std::copy(b.begin(), b.end(), bm.data());
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed model JSON: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const AdamConfig& cfg) {
  j = nlohmann::json{{"learning_rate", cfg.learning_rate}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2},
                     {"epsilon", cfg.epsilon}, {"weight_decay", cfg.weight_decay}};
}

void from_json(const nlohmann::json& j, AdamConfig& cfg) {
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
}

void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: length mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient component");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + c.weight_decay * params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<double> params, double h) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f(params);
    params[i] = saved - h;
    const double down = f(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom > 1e-300 ? std::sqrt(diff) / denom : std::sqrt(diff);
}

}  // namespace clb
