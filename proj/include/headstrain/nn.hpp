#pragma once

// Small dense feed-forward networks with manual backpropagation and Adam.
// Batches are stored one sample per column (features x batch).

#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "headstrain/rng.hpp"

namespace headstrain {

enum class Activation { ReLU, Linear, Sigmoid };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  std::size_t width = 1;
  Activation activation = Activation::ReLU;
  double dropout = 0.0;  // inverted dropout applied to this layer's output in training
  bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::ReLU;
  double dropout = 0.0;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  double max_abs() const;
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  std::vector<Eigen::MatrixXd> masks;   // scaled dropout masks (empty when unused)
  Eigen::MatrixXd output;
};

class DenseNet {
 public:
  DenseNet() = default;

  /// Hidden layers from `hidden`, then a final layer of width `output_dim`
  /// with `output_activation`. Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in))
  /// for ReLU layers and U(-sqrt(3/fan_in), sqrt(3/fan_in)) otherwise;
  /// biases start at zero.
  static DenseNet make(std::size_t input_dim, const std::vector<LayerSpec>& hidden, std::size_t output_dim,
                       Activation output_activation, Rng& rng);

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  /// When set, the network computes x + f(x); input and output widths must match.
  bool residual() const noexcept { return residual_; }
  void set_residual(bool r);

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  std::size_t parameter_count() const noexcept;

  /// Inference pass (no dropout).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Training pass; `rng` draws dropout masks, null disables dropout.
  ForwardCache forward_train(const Eigen::MatrixXd& x, Rng* rng) const;

  /// Backpropagates dL/d(output). Returns parameter gradients; writes
  /// dL/d(input) when `grad_input` is non-null.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output,
                     Eigen::MatrixXd* grad_input = nullptr) const;

  /// Adds 2*l2*W to every weight gradient and returns l2 * sum ||W||^2.
  double add_l2(Gradients& g, double l2) const;
  double l2_penalty(double l2) const;

  Gradients zero_gradients() const;

  nlohmann::json to_json() const;
  static DenseNet from_json(const nlohmann::json& j);

 private:
  std::vector<DenseLayer> layers_;
  bool residual_ = false;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet& net, AdamConfig cfg);

  void step(DenseNet& net, const Gradients& g);

 private:
  AdamConfig cfg_;
  Gradients m_, v_;
  std::size_t t_ = 0;
};

}  // namespace headstrain
