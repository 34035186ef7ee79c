#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace clb {

enum class Activation { kLeakyRelu, kTanh, kIdentity };

inline constexpr double kLeakyReluSlope = 0.01;

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully connected network. Parameters live in one flat vector laid out per
/// layer as the row-major weight matrix (fan_out x fan_in) followed by the bias.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;       // input of each layer
    std::vector<Eigen::MatrixXd> activations;  // output of each layer
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, std::vector<Activation> activations);

  /// Uniform in +-sqrt(1/fan_in) for weights and biases.
  void init_uniform(std::uint64_t seed);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(activations_.size()); }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return activations_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Eigen::Map<RowMajorMatrix> weight(int layer);
  Eigen::Map<const RowMajorMatrix> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  Eigen::VectorXd forward_one(std::span<const double> x) const;

  /// Accumulates d(sum(output .* upstream))/d(params) into `grad`. When
  /// `input_grad` is non-null it receives the gradient w.r.t. the input batch.
  void backward(const Cache& cache, const Eigen::MatrixXd& upstream, std::span<double> grad,
                Eigen::MatrixXd* input_grad = nullptr) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t bias_offset(int layer) const;

  std::vector<int> sizes_;
  std::vector<Activation> activations_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

void to_json(nlohmann::json& j, const AdamConfig& cfg);
void from_json(const nlohmann::json& j, AdamConfig& cfg);

struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam step. Throws NonFiniteError, leaving everything
/// untouched, if any gradient component is not finite.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Scales `grads` in place so that its L2 norm is at most max_norm; returns the
/// norm before scaling.
double clip_grad_norm(std::span<double> grads, double max_norm);

/// Central differences of f at params (params are restored afterwards).
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<double> params,
    double h = 1e-5);

/// ||a - b|| / max(||a|| + ||b||, tiny).
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace clb
