#pragma once

// Cycle-consistent adversarial translation between feature domains and
// kernel mean matching weights for the shift-GAN variant.
//
// Features are standardized by source statistics before training. Generators
// are residual dense maps x + f(x); discriminators end in a sigmoid. Per
// batch the discriminators ascend
//   D_s(x_s) - D_s(G_t(x_t, z')) + D_t(x_t) - D_t(G_s(x_s, z))
// and the generators descend
//   lambda_s |G_t(G_s(x_s, z), z') - x_s| + lambda_t |G_s(G_t(x_t, z'), z) - x_t|
//     - D_s(G_t(x_t, z')) - D_t(G_s(x_s, z)),
// where the noise z, z' zeroes each generator input coordinate with
// probability noise_dropout.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "headstrain/featurize.hpp"
#include "headstrain/nn.hpp"

namespace headstrain {

enum class CycleNorm { L2, L1 };  // mean squared or mean absolute error per coordinate

const char* to_string(CycleNorm n) noexcept;
CycleNorm cycle_norm_from_string(const std::string& s);

struct GanConfig {
  std::vector<std::size_t> generator_widths{64, 64};
  std::vector<std::size_t> discriminator_widths{64, 64};
  double lambda_s = 10.0;
  double lambda_t = 10.0;
  double noise_dropout = 0.1;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  CycleNorm norm = CycleNorm::L2;
  bool identity_init = false;      // zero the generators' last layer so G(x) = x
  bool freeze_generators = false;  // skip generator updates

  void validate() const;
  bool operator==(const GanConfig&) const = default;
};

struct GanEpoch {
  double cycle_s = 0.0;  // mean over batches, training mode
  double cycle_t = 0.0;
  double adv_g = 0.0;   // -D_s(G_t(x_t)) - D_t(G_s(x_s))
  double loss_d = 0.0;  // negated discriminator objective
};

struct CycleGanModel {
  DenseNet g_s;  // source -> target
  DenseNet g_t;  // target -> source
  DenseNet d_s;
  DenseNet d_t;
  GanConfig config;
  Vector center, scale;  // source standardization
  std::uint64_t schema_fingerprint = 0;
  std::vector<GanEpoch> history;

  nlohmann::json to_json() const;
  static CycleGanModel from_json(const nlohmann::json& j);
};

/// Networks and standardization without training (epochs are not run).
CycleGanModel init_cyclegan(const Matrix& xs, const GanConfig& cfg);

CycleGanModel train_cyclegan(const Matrix& xs, const Matrix& xt, const GanConfig& cfg);
CycleGanModel train_cyclegan(const FeatureMatrix& xs, const FeatureMatrix& xt, const GanConfig& cfg);

/// Mean cycle losses of both directions on the given sets (noise disabled).
std::pair<double, double> cycle_losses(const CycleGanModel& model, const Matrix& xs, const Matrix& xt);

/// G_t in raw feature units, noise disabled.
Matrix translate_to_source(const CycleGanModel& model, const Matrix& xt);
/// Same, tagged "translated-target"; checks the schema fingerprint.
FeatureMatrix translate_to_source(const CycleGanModel& model, const FeatureMatrix& xt);

struct KmmConfig {
  std::optional<double> bandwidth;  // RBF sigma; median pairwise distance when unset
  double weight_cap = 10.0;         // B
  double slack = 0.1;               // epsilon_c on |mean(beta) - 1|
  std::size_t iterations = 2000;
  double tolerance = 1e-7;  // max |beta change| that ends the solve

  void validate() const;
  bool operator==(const KmmConfig&) const = default;
};

struct KmmResult {
  Vector weights;
  double objective = 0.0;          // at weights
  double uniform_objective = 0.0;  // at beta = 1
  double bandwidth = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Median of pairwise Euclidean distances over the pooled rows (evenly
/// strided subsample of at most 600 rows).
double median_pairwise_distance(const Matrix& a, const Matrix& b);

/// || mean_j phi(ref_j) - (1/n) sum_i beta_i phi(adj_i) ||^2 in RBF feature space.
double kmm_objective(const Matrix& ref, const Matrix& adj, const Vector& beta, double bandwidth);

/// Accelerated projected gradient on the KMM quadratic over
/// {0 <= beta <= B, |mean(beta) - 1| <= eps}, started from beta = 1. Returns
/// the best iterate; `converged` is false when the iteration cap was hit.
KmmResult kmm_weights(const Matrix& ref, const Matrix& adj, const KmmConfig& cfg);

/// Exact Euclidean projection onto the KMM feasible set.
Vector project_kmm_feasible(const Vector& v, double cap, double slack);

}  // namespace headstrain
