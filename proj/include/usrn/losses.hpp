// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "usrn/common.hpp"

namespace usrn {

/// Per-coordinate ensemble statistics.
struct PredictionStats {
  Vector mean;      // B
  Vector variance;  // B, unbiased (divides by M - 1)
  Matrix members;   // M x B
};

/// mean = sum_i f_i / M, variance = sum_i (f_i - mean)^2 / (M - 1). Requires M >= 2.
PredictionStats ensemble_stats(const Matrix& members);

/// (1/B) * sum_i sum_b (f_i(x_b) - y_b)^2: summed over members, averaged over the batch.
Scalar member_loss(const Matrix& members, const Vector& targets);
/// d member_loss / d members, M x B.
Matrix member_loss_gradient(const Matrix& members, const Vector& targets);

inline constexpr Scalar kDensityFloor = 1e-12;

/// Divides by (sum + 1e-12), floors every entry at 1e-12 and renormalizes, so
/// all-zero input becomes the uniform density and logs stay finite.
Vector density_normalize(const Vector& values);

struct VarianceRegularization {
  Scalar value = 0;
  Vector d_variances;  // dL/d(variance_b)
  Vector d_sq_errors;  // exactly zero unless the error density is differentiated
  Vector variance_density;
  Vector error_density;
};

/// KL(f_err || f_var) averaged over the batch:
/// (1/B) sum_b f_err(b) ln(f_err(b) / f_var(b)), natural log.
///
/// The error density is a constant for differentiation; the gradient flows into
/// the variances through the variance density and its normalizer.
/// `differentiate_error_density` also differentiates the error density; it exists
/// only as a negative control for tests.
VarianceRegularization variance_regularization_loss(const Vector& variances, const Vector& sq_errors,
                                                    bool differentiate_error_density = false);

/// d variance_b / d f_ib = 2 (f_ib - mean_b) / (M - 1), chained with dL/dvariance.
Matrix variance_gradient_to_members(const PredictionStats& stats, const Vector& d_variances);

struct LambdaSchedule {
  Scalar lambda_min = 0;
  Scalar lambda_max = 10;
  Scalar rate = 500;
  std::int64_t t_max = 2;
};

void validate(const LambdaSchedule& s);

/// lambda_min + (lambda_max - lambda_min) * (r^((t-1)/(t_max-1)) - 1) / (r - 1), t in [1, t_max].
Scalar lambda_at(const LambdaSchedule& s, std::int64_t t);

// ---------------------------------------------------------------------------
// Predicted-variance head

inline constexpr Scalar kVarianceFloor = 1e-6;

Scalar softplus(Scalar x);
Scalar sigmoid(Scalar x);

struct GaussianNllResult {
  Vector mean;
  Vector variance;  // softplus(raw) + floor
  Scalar loss = 0;  // mean_b [0.5 ln(2 pi var) + (y - mu)^2 / (2 var)]
  Matrix d_outputs; // B x 2: dL/d(mu), dL/d(raw variance)
};

/// Gaussian NLL of a two-channel decoder output (mu, raw) against targets.
GaussianNllResult predicted_variance_nll(const Matrix& outputs, const Vector& targets,
                                         Scalar variance_floor = kVarianceFloor);

}  // namespace usrn
