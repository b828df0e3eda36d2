// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "usrn/models.hpp"

namespace usrn {

struct LossReport {
  std::int64_t step = 0;
  Scalar lr = 0;
  Scalar lambda = 0;
  Scalar member = 0;        // L_member (or the NLL for the predicted-variance model)
  Scalar variance_reg = 0;  // L_var on the training batch
  Scalar total = 0;         // member + lambda * variance_reg
};

struct DecoderShape {
  int hidden_layers = 2;
  int width = 64;
  Activation activation = Activation::Relu;
};

struct TrainConfig {
  ModelKind kind = ModelKind::Rmdsrn;
  std::int64_t steps = 50000;
  std::size_t batch_size = std::size_t{1} << 17;
  std::optional<Scalar> learning_rate;  // unset: 5e-3, or 5e-4 for the predicted-variance model
  Scalar lr_floor = 1e-7;
  Scalar lambda_min = 0;
  Scalar lambda_max = 10;
  Scalar lambda_rate = 500;
  std::uint64_t seed = 0;

  EncoderSpec encoder{EncoderKind::Dense, {24, 24, 24, 8}, {}, {}};
  int members = 5;                                   // decoders / ensemble members
  DecoderShape decoder{2, 64, Activation::Relu};     // multi-decoder and ensemble members
  DecoderShape single_decoder{3, 128, Activation::Relu};  // pv and mcd

  Scalar dropout_p = 0.1;
  int mcd_passes = 5;
  Scalar pv_variance_floor = kVarianceFloor;
  std::uint64_t de_seed_stride = 1;  // member i is seeded with seed + i * stride

  Scalar effective_learning_rate() const;
  LambdaSchedule lambda_schedule() const;
};

void validate(const TrainConfig& cfg);

/// Resolves aliases: a plain multi-decoder run has a zero schedule, and a
/// regularized run whose schedule is identically zero is a plain run.
TrainConfig canonical(const TrainConfig& cfg);

struct TrainResult {
  UncertainModel model;
  std::vector<LossReport> history;
};

using StepCallback = std::function<void(const LossReport&)>;

/// Options for the regularized objective that exist for verification only.
struct RegularizationOptions {
  bool differentiate_error_density = false;
};

/// Forward + backward of L_member + lambda * L_var on one batch. Gradients are
/// accumulated into the model; the caller zeroes them. The regularization
/// gradient is skipped entirely when lambda == 0. Non-finite predictions or
/// targets raise NumericError.
LossReport rmdsrn_loss_and_gradients(MultiDecoderModel& model, const TrainingBatch& batch, Scalar lambda,
                                     const RegularizationOptions& options = {});

/// Multi-decoder training, plain or variance-regularized.
TrainResult train_rmdsrn(const VolumeGrid& volume, const TrainConfig& cfg, const StepCallback& on_step = {});
/// M independent encoder+decoder networks trained with squared error.
TrainResult train_deep_ensemble(const VolumeGrid& volume, const TrainConfig& cfg,
                                const StepCallback& on_step = {});
/// Two-output decoder trained with the Gaussian negative log-likelihood.
TrainResult train_predicted_variance(const VolumeGrid& volume, const TrainConfig& cfg,
                                     const StepCallback& on_step = {});
/// Single decoder with dropout, trained with squared error.
TrainResult train_mc_dropout(const VolumeGrid& volume, const TrainConfig& cfg,
                             const StepCallback& on_step = {});

/// Dispatches on cfg.kind.
TrainResult train_model(const VolumeGrid& volume, const TrainConfig& cfg, const StepCallback& on_step = {});

}  // namespace usrn
