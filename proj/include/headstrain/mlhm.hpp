#pragma once

// Machine-learning head model: a dense regressor from kinematic features (or
// a DRCA subspace) to per-element MPS or MPSR.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "headstrain/impact_data.hpp"
#include "headstrain/nn.hpp"

namespace headstrain {

struct MlhmArch {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> hidden;
  std::size_t output_dim = 0;

  /// 64 -> 32 -> 16 ReLU, dropout 0.1 after the first two hidden layers.
  static MlhmArch desk(std::size_t input_dim, std::size_t output_dim);
  /// 500 -> 300 -> 100 ReLU with dropout 0.5 after the first two.
  static MlhmArch large(std::size_t input_dim, std::size_t output_dim);

  void validate() const;
  bool operator==(const MlhmArch&) const = default;
};

/// PerColumn z-scores every input; Isotropic centers each column but divides
/// all of them by the largest column std, keeping relative variances (used
/// for DRCA subspace coordinates, which already share units).
enum class InputScaling { PerColumn, Isotropic };

const char* to_string(InputScaling s) noexcept;
InputScaling input_scaling_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-3;
  double l2_weight = 1e-5;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::size_t early_stop_patience = 20;  // 0 disables early stopping
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
  InputScaling input_scaling = InputScaling::PerColumn;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainHistory {
  std::vector<double> train_loss;  // MSE + L2 on the training split, inference mode
  std::vector<double> val_loss;    // MSE on the validation split
  std::size_t best_epoch = 0;      // 1-based; 0 when no epoch ran
};

/// Network plus the affine maps that standardize inputs and de-standardize
/// outputs (fit on the training split).
struct MlhmModel {
  MlhmArch arch;
  DenseNet net;
  Vector input_center, input_scale;
  Vector output_center, output_scale;
  TrainHistory history;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_rows, val_rows, test_rows;
  std::string input_space = "raw";  // "raw" or "drca:<projection hash>"
  std::uint64_t input_fingerprint = 0;

  nlohmann::json to_json() const;
  static MlhmModel from_json(const nlohmann::json& j);
};

/// Freshly initialized model with identity standardization.
MlhmModel init_mlhm(const MlhmArch& arch, std::uint64_t seed);

/// Seeded split, mini-batch Adam on mean-over-samples of squared error summed
/// over outputs plus l2 * sum ||W||^2; returns the best-validation weights.
/// Throws DivergenceError on a non-finite loss and DimensionError on shape
/// mismatch.
MlhmModel train_mlhm(const Matrix& x, const Matrix& y, const TrainConfig& cfg, const MlhmArch& arch);

/// Inference (dropout disabled); rows are samples.
Matrix predict(const MlhmModel& model, const Matrix& x);

/// One stochastic training-mode forward pass (dropout active).
Matrix predict_train_mode(const MlhmModel& model, const Matrix& x, Rng& rng);

/// Network-space loss and gradients for the batch (rows are samples):
/// (1/B) sum_i ||f(x_i) - y_i||^2 + l2 sum ||W||^2.
double mlhm_loss(const DenseNet& net, const Matrix& x, const Matrix& y, double l2);
Gradients mlhm_gradients(const DenseNet& net, const Matrix& x, const Matrix& y, double l2);

/// Max over parameters of |g_a - g_n| / max(|g_a|, |g_n|, 1e-12) with central
/// differences of step eps (network space, dropout disabled).
double gradient_check(const MlhmModel& model, const Vector& x, const Vector& y, double l2, double eps);

}  // namespace headstrain
