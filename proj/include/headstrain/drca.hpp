#pragma once

// Domain regularized component analysis: a linear projection that keeps the
// within-domain scatter of both domains while suppressing the between-domain
// scatter, obtained from the generalized eigenproblem
//   (S_w^S + alpha S_w^T) p = theta (S_b + ridge I) p.

#include <cstdint>
#include <limits>

#include <nlohmann/json_fwd.hpp>

#include "headstrain/featurize.hpp"
#include "headstrain/linalg.hpp"

namespace headstrain {

struct DrcaConfig {
  std::size_t dim = 128;    // d, 1 <= d < D
  double alpha = 1.0;       // weight on the target-domain scatter
  double epsilon = 1e-6;    // ridge on S_b, relative to trace(S_b)/D
  bool standardize = true;  // z-score by source statistics before fitting

  void validate(std::size_t input_dim) const;
  bool operator==(const DrcaConfig&) const = default;
};

struct ProjectionModel {
  Matrix projection;        // D x d
  Vector theta;             // top-d eigenvalues, descending
  Vector eigenvalues;       // full generalized spectrum, descending
  DrcaConfig config;
  std::uint64_t schema_fingerprint = 0;
  Vector center;            // length D
  Vector scale;             // length D
  double ridge = 0.0;       // the ridge actually added to S_b

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(projection.rows()); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(projection.cols()); }

  /// Applies the stored standardization to raw rows.
  Matrix standardize(const Matrix& x) const;

  nlohmann::json to_json() const;
  static ProjectionModel from_json(const nlohmann::json& j);
};

/// Source-column mean and population std; std floored at `floor`.
std::pair<Vector, Vector> column_standardization(const Matrix& x, double floor = 1e-8);

ProjectionModel fit_drca(const FeatureMatrix& x_s, const FeatureMatrix& x_t, const DrcaConfig& cfg);

/// Matrix variant; `fingerprint` is stored verbatim.
ProjectionModel fit_drca(const Matrix& x_s, const Matrix& x_t, const DrcaConfig& cfg,
                         std::uint64_t fingerprint = 0);

/// ((X - center) / scale) P. Throws SchemaError on fingerprint mismatch.
Matrix drca_transform(const ProjectionModel& model, const FeatureMatrix& x);
Matrix drca_transform(const ProjectionModel& model, const Matrix& x);

/// tr(P^T (S_w^S + alpha S_w^T) P) / tr(P^T (S_b + ridge I) P). Returns +inf
/// (and sets `*zero_denominator`) when the denominator vanishes.
double drca_objective(const Matrix& projection, const ScatterSummary& summary, double alpha, double ridge,
                      bool* zero_denominator = nullptr);
double drca_objective(const ProjectionModel& model, const ScatterSummary& summary);

}  // namespace headstrain
