// SPDX-License-Identifier: Apache-2.0
#include "usrn/losses.hpp"

#include <cmath>
#include <numbers>

#include "usrn/errors.hpp"

namespace usrn {

PredictionStats ensemble_stats(const Matrix& members) {
  const Eigen::Index m = members.rows();
  if (m < 2) throw InvalidArgument("ensemble statistics need at least 2 members");
  PredictionStats s;
  s.members = members;
  // Shifted by the first member: identical members give their exact value and zero variance.
  s.mean.resize(members.cols());
  s.variance.resize(members.cols());
  for (Eigen::Index b = 0; b < members.cols(); ++b) {
    const Scalar pivot = members(0, b);
    Scalar shift = 0;
    for (Eigen::Index i = 1; i < m; ++i) shift += members(i, b) - pivot;
    s.mean[b] = pivot + shift / Scalar(m);
    Scalar acc = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Scalar d = members(i, b) - s.mean[b];
      acc += d * d;
    }
    s.variance[b] = acc / Scalar(m - 1);
  }
  return s;
}

namespace {

void check_member_shapes(const Matrix& members, const Vector& targets) {
  if (members.cols() != targets.size() || targets.size() == 0)
    throw InvalidArgument("member predictions and targets disagree on batch size");
}

}  // namespace

Scalar member_loss(const Matrix& members, const Vector& targets) {
  check_member_shapes(members, targets);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < members.rows(); ++i)
    total += (members.row(i).transpose() - targets).squaredNorm();
  return total / Scalar(targets.size());
}

Matrix member_loss_gradient(const Matrix& members, const Vector& targets) {
  check_member_shapes(members, targets);
  Matrix g = members;
  g.rowwise() -= targets.transpose();
  return g * (Scalar(2) / Scalar(targets.size()));
}

namespace {

// Forward pieces of density_normalize kept for the backward pass.
struct DensityTrace {
  Vector scaled;  // u = v / (S + eps)
  Scalar denom = 0;  // S + eps
  Vector floored;  // w = max(u, eps)
  Scalar floored_sum = 0;
  Vector density;  // q = w / sum(w)
};

DensityTrace density_trace(const Vector& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!(values[i] >= 0)) throw InvalidArgument("density_normalize needs non-negative finite input");
  DensityTrace t;
  t.denom = values.sum() + kDensityFloor;
  t.scaled = values / t.denom;
  t.floored = t.scaled.cwiseMax(kDensityFloor);
  t.floored_sum = t.floored.sum();
  t.density = t.floored / t.floored_sum;
  return t;
}

// Pulls dL/dq back to dL/dv through renormalization, the floor and the scaling.
Vector density_backward(const DensityTrace& t, const Vector& d_density) {
  const Scalar dot_q = d_density.dot(t.density);
  Vector d_floored = (d_density.array() - dot_q) / t.floored_sum;
  Vector d_scaled(d_floored.size());
  for (Eigen::Index i = 0; i < d_floored.size(); ++i)
    d_scaled[i] = t.scaled[i] > kDensityFloor ? d_floored[i] : Scalar(0);
  const Scalar dot_u = d_scaled.dot(t.scaled);
  return (d_scaled.array() - dot_u) / t.denom;
}

}  // namespace

Vector density_normalize(const Vector& values) { return density_trace(values).density; }

VarianceRegularization variance_regularization_loss(const Vector& variances, const Vector& sq_errors,
                                                    bool differentiate_error_density) {
  if (variances.size() != sq_errors.size() || variances.size() == 0)
    throw InvalidArgument("variance and error batches differ in size");
  const auto b = static_cast<Scalar>(variances.size());
  const DensityTrace var_t = density_trace(variances);
  const DensityTrace err_t = density_trace(sq_errors);
  const Vector& q = var_t.density;
  const Vector& p = err_t.density;

  VarianceRegularization out;
  out.variance_density = q;
  out.error_density = p;
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  out.value = kl / b;

  const Vector d_q = -(p.array() / q.array()) / b;
  out.d_variances = density_backward(var_t, d_q);

  if (differentiate_error_density) {
    const Vector d_p = ((p.array() / q.array()).log() + Scalar(1)) / b;
    out.d_sq_errors = density_backward(err_t, d_p);
  } else {
    out.d_sq_errors = Vector::Zero(sq_errors.size());
  }
  return out;
}

Matrix variance_gradient_to_members(const PredictionStats& stats, const Vector& d_variances) {
  const Eigen::Index m = stats.members.rows();
  Matrix g = stats.members;
  g.rowwise() -= stats.mean.transpose();
  g.array().rowwise() *= d_variances.transpose().array();
  return g * (Scalar(2) / Scalar(m - 1));
}

void validate(const LambdaSchedule& s) {
  if (!(s.lambda_min >= 0)) throw InvalidArgument("lambda_min must be >= 0");
  if (!(s.lambda_max >= s.lambda_min)) throw InvalidArgument("lambda_max must be >= lambda_min");
  if (!(s.rate > 1)) throw InvalidArgument("lambda growth rate must be > 1");
  if (s.t_max < 2) throw InvalidArgument("lambda schedule needs t_max >= 2");
}

Scalar lambda_at(const LambdaSchedule& s, std::int64_t t) {
  validate(s);
  if (t < 1 || t > s.t_max) throw InvalidArgument("step outside the lambda schedule");
  if (t == 1) return s.lambda_min;
  if (t == s.t_max) return s.lambda_max;
  const Scalar exponent = Scalar(t - 1) / Scalar(s.t_max - 1);
  const Scalar fraction = (std::pow(s.rate, exponent) - Scalar(1)) / (s.rate - Scalar(1));
  // Clamp so rounding of lambda_min + span * fraction never overshoots the endpoint.
  return std::min(s.lambda_max, s.lambda_min + (s.lambda_max - s.lambda_min) * fraction);
}

Scalar softplus(Scalar x) {
  if (x > 30) return x;
  if (x < -30) return std::exp(x);
  return std::log1p(std::exp(x));
}

Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

GaussianNllResult predicted_variance_nll(const Matrix& outputs, const Vector& targets,
                                         Scalar variance_floor) {
  if (outputs.cols() != 2 || outputs.rows() != targets.size() || targets.size() == 0)
    throw InvalidArgument("predicted-variance decoder must emit (mean, raw variance) per row");
  const auto n = outputs.rows();
  const Scalar inv_b = Scalar(1) / Scalar(n);
  const Scalar log_two_pi = std::log(2 * std::numbers::pi_v<Scalar>);
  GaussianNllResult r;
  r.mean = outputs.col(0);
  r.variance.resize(n);
  r.d_outputs.resize(n, 2);
  Scalar total = 0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const Scalar raw = outputs(b, 1);
    const Scalar var = softplus(raw) + variance_floor;
    const Scalar diff = targets[b] - r.mean[b];
    r.variance[b] = var;
    total += Scalar(0.5) * (log_two_pi + std::log(var)) + diff * diff / (2 * var);
    r.d_outputs(b, 0) = -diff / var * inv_b;
    const Scalar d_var = (Scalar(0.5) / var - diff * diff / (2 * var * var)) * inv_b;
    r.d_outputs(b, 1) = d_var * sigmoid(raw);
  }
  r.loss = total * inv_b;
  if (!std::isfinite(r.loss)) throw NumericError("non-finite predicted-variance NLL");
  return r;
}

}  // namespace usrn
