// SPDX-License-Identifier: Apache-2.0
#include "usrn/training.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "usrn/errors.hpp"

namespace usrn {

Scalar TrainConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return kind == ModelKind::Pv ? Scalar(5e-4) : Scalar(5e-3);
}

LambdaSchedule TrainConfig::lambda_schedule() const {
  return LambdaSchedule{lambda_min, lambda_max, lambda_rate, steps};
}

void validate(const TrainConfig& cfg) {
  if (cfg.steps < 2) throw InvalidArgument("training needs at least 2 steps");
  if (cfg.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  const Scalar lr = cfg.effective_learning_rate();
  if (!(lr > cfg.lr_floor && cfg.lr_floor >= 0))
    throw InvalidArgument("learning rate must exceed its floor, and the floor must be >= 0");
  validate(cfg.lambda_schedule());
  validate(cfg.encoder);
  if (cfg.decoder.hidden_layers < 0 || cfg.decoder.width < 1 || cfg.single_decoder.hidden_layers < 0 ||
      cfg.single_decoder.width < 1)
    throw InvalidArgument("decoder layers must be >= 0 and width >= 1");
  switch (cfg.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn:
    case ModelKind::De:
      if (cfg.members < 2) throw InvalidArgument("ensembles need at least 2 members");
      break;
    case ModelKind::Mcd:
      if (!(cfg.dropout_p >= 0 && cfg.dropout_p < 1))
        throw InvalidArgument("MC dropout needs 0 <= dropout_p < 1");
      if (cfg.mcd_passes < 2) throw InvalidArgument("MC dropout needs at least 2 passes");
      break;
    case ModelKind::Pv:
      if (!(cfg.pv_variance_floor > 0)) throw InvalidArgument("variance floor must be > 0");
      break;
  }
}

TrainConfig canonical(const TrainConfig& cfg) {
  TrainConfig out = cfg;
  if (out.kind == ModelKind::Mdsrn) {
    out.lambda_min = 0;
    out.lambda_max = 0;
  } else if (out.kind == ModelKind::Rmdsrn && out.lambda_min == 0 && out.lambda_max == 0) {
    out.kind = ModelKind::Mdsrn;
  }
  return out;
}

LossReport rmdsrn_loss_and_gradients(MultiDecoderModel& model, const TrainingBatch& batch, Scalar lambda,
                                     const RegularizationOptions& options) {
  const Matrix features = composite_encode(model.encoder, batch.coords);
  const auto m = static_cast<std::ptrdiff_t>(model.decoders.size());
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<MlpCache> caches(static_cast<std::size_t>(m));
  Matrix preds(m, b);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    preds.row(i) =
        mlp_forward(model.decoders[ui], features, Mode::Train, nullptr, &caches[ui]).col(0).transpose();
  }

  const PredictionStats stats = ensemble_stats(preds);
  LossReport report;
  report.lambda = lambda;
  report.member = member_loss(preds, batch.targets);
  if (!std::isfinite(report.member) || !stats.variance.allFinite())
    throw NumericError("non-finite member predictions or targets");
  Matrix grad = member_loss_gradient(preds, batch.targets);

  const Vector residual = stats.mean - batch.targets;
  const Vector sq_errors = residual.array().square();
  const VarianceRegularization reg =
      variance_regularization_loss(stats.variance, sq_errors, options.differentiate_error_density);
  report.variance_reg = reg.value;
  report.total = report.member + lambda * reg.value;

  if (lambda != 0) {
    grad += lambda * variance_gradient_to_members(stats, reg.d_variances);
    if (options.differentiate_error_density) {
      // d sq_error_b / d f_ib = 2 (mean_b - y_b) / M
      const Vector per_point = reg.d_sq_errors.cwiseProduct(residual) * (Scalar(2) / Scalar(m));
      grad.rowwise() += lambda * per_point.transpose();
    }
  }

  std::vector<Matrix> feature_grads(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Matrix upstream = grad.row(i).transpose();
    feature_grads[ui] = mlp_backward(model.decoders[ui], caches[ui], upstream);
  }
  // Fixed decoder order keeps the shared-encoder gradient reproducible.
  Matrix dl_dfeatures = feature_grads.front();
  for (std::size_t i = 1; i < feature_grads.size(); ++i) dl_dfeatures += feature_grads[i];
  composite_backward(model.encoder, batch.coords, dl_dfeatures);
  return report;
}

namespace {

MlpSpec decoder_spec(const DecoderShape& shape, int input_dim, int output_dim, Scalar dropout) {
  MlpSpec s;
  s.input_dim = input_dim;
  s.hidden_layers = shape.hidden_layers;
  s.width = shape.width;
  s.output_dim = output_dim;
  s.activation = shape.activation;
  s.dropout_p = dropout;
  return s;
}

void check_finite(const LossReport& r) {
  if (!std::isfinite(r.total) || !std::isfinite(r.member) || !std::isfinite(r.variance_reg)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << r.step << " (lambda = " << r.lambda << ", L_member = " << r.member
        << ", L_var = " << r.variance_reg << ")";
    throw NumericError(msg.str());
  }
}

void require_normalized(const VolumeGrid& volume) {
  if (!volume.normalized) throw InvalidArgument("training requires a normalized volume");
}

// Per-step batch matrices are a few MB; without this glibc maps and unmaps them
// every step and page faults dominate the step time.
void keep_large_allocations() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

enum class Objective { SquaredError, GaussianNll };

// Trains one encoder+decoder network; returns it with its per-step losses.
SrnModel train_single(const VolumeGrid& volume, const TrainConfig& cfg, const MlpSpec& decoder,
                      std::uint64_t seed, Objective objective, std::vector<LossReport>& history,
                      const StepCallback& on_step) {
  Rng rng(seed);
  SrnModel model = make_srn_model(cfg.encoder, decoder, rng);
  ParamList params = model.parameters();
  AdamState adam = make_adam_state(params);
  const LrSchedule lrs{cfg.effective_learning_rate(), cfg.lr_floor, cfg.steps};
  history.reserve(static_cast<std::size_t>(cfg.steps));

  for (std::int64_t t = 1; t <= cfg.steps; ++t) {
    const Scalar lr = cosine_lr_at(lrs, t - 1);
    const TrainingBatch batch = sample_training_batch(volume, cfg.batch_size, rng);
    zero_grads(params);
    const Matrix features = composite_encode(model.encoder, batch.coords);
    MlpCache cache;
    const Matrix out = mlp_forward(model.decoder, features, Mode::Train, &rng, &cache);

    LossReport r;
    r.step = t;
    r.lr = lr;
    Matrix upstream;
    if (objective == Objective::SquaredError) {
      const Matrix preds = out.transpose();
      r.member = member_loss(preds, batch.targets);
      upstream = member_loss_gradient(preds, batch.targets).transpose();
    } else {
      GaussianNllResult nll;
      try {
        nll = predicted_variance_nll(out, batch.targets, cfg.pv_variance_floor);
      } catch (const NumericError& e) {
        throw NumericError("non-finite loss at step " + std::to_string(t) + ": " + e.what());
      }
      r.member = nll.loss;
      upstream = std::move(nll.d_outputs);
    }
    r.total = r.member;
    check_finite(r);
    const Matrix dl_dfeatures = mlp_backward(model.decoder, cache, upstream);
    composite_backward(model.encoder, batch.coords, dl_dfeatures);
    adam_step(params, adam, lr);
    history.push_back(r);
    if (on_step) on_step(r);
  }
  return model;
}

}  // namespace

TrainResult train_rmdsrn(const VolumeGrid& volume, const TrainConfig& raw_cfg, const StepCallback& on_step) {
  const TrainConfig cfg = canonical(raw_cfg);
  validate(cfg);
  require_normalized(volume);
  keep_large_allocations();
  if (cfg.kind != ModelKind::Mdsrn && cfg.kind != ModelKind::Rmdsrn)
    throw InvalidArgument("train_rmdsrn expects kind mdsrn or rmdsrn");

  Rng rng(cfg.seed);
  MultiDecoderModel model = make_multi_decoder_model(
      cfg.encoder, decoder_spec(cfg.decoder, cfg.encoder.output_width(), 1, 0), cfg.members, rng);
  ParamList params = model.parameters();
  AdamState adam = make_adam_state(params);
  const LrSchedule lrs{cfg.effective_learning_rate(), cfg.lr_floor, cfg.steps};
  const LambdaSchedule ls = cfg.lambda_schedule();

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(cfg.steps));
  for (std::int64_t t = 1; t <= cfg.steps; ++t) {
    const Scalar lr = cosine_lr_at(lrs, t - 1);
    const Scalar lambda = lambda_at(ls, t);
    const TrainingBatch batch = sample_training_batch(volume, cfg.batch_size, rng);
    zero_grads(params);
    LossReport r;
    try {
      r = rmdsrn_loss_and_gradients(model, batch, lambda);
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss at step " + std::to_string(t) + ": " + e.what());
    }
    r.step = t;
    r.lr = lr;
    check_finite(r);
    adam_step(params, adam, lr);
    result.history.push_back(r);
    if (on_step) on_step(r);
  }
  result.model.kind = cfg.kind;
  result.model.network = std::move(model);
  result.model.inference_seed = cfg.seed;
  return result;
}

TrainResult train_deep_ensemble(const VolumeGrid& volume, const TrainConfig& raw_cfg,
                                const StepCallback& on_step) {
  const TrainConfig cfg = canonical(raw_cfg);
  validate(cfg);
  require_normalized(volume);
  keep_large_allocations();
  const auto m = static_cast<std::size_t>(cfg.members);
  const MlpSpec dec = decoder_spec(cfg.decoder, cfg.encoder.output_width(), 1, 0);

  DeepEnsemble ensemble;
  ensemble.members.resize(m);
  std::vector<std::vector<LossReport>> histories(m);
  std::vector<std::exception_ptr> errors(m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    try {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(ui) * cfg.de_seed_stride;
      ensemble.members[ui] =
          train_single(volume, cfg, dec, seed, Objective::SquaredError, histories[ui], {});
    } catch (...) {
      errors[ui] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  TrainResult result;
  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    LossReport r = histories.front()[static_cast<std::size_t>(t)];
    r.member = 0;
    for (const auto& h : histories) r.member += h[static_cast<std::size_t>(t)].member;
    r.total = r.member;
    result.history.push_back(r);
    if (on_step) on_step(r);
  }
  result.model.kind = ModelKind::De;
  result.model.network = std::move(ensemble);
  result.model.inference_seed = cfg.seed;
  return result;
}

TrainResult train_predicted_variance(const VolumeGrid& volume, const TrainConfig& raw_cfg,
                                     const StepCallback& on_step) {
  const TrainConfig cfg = canonical(raw_cfg);
  validate(cfg);
  require_normalized(volume);
  keep_large_allocations();
  TrainResult result;
  const MlpSpec dec = decoder_spec(cfg.single_decoder, cfg.encoder.output_width(), 2, 0);
  result.model.kind = ModelKind::Pv;
  result.model.network = train_single(volume, cfg, dec, cfg.seed, Objective::GaussianNll, result.history, on_step);
  result.model.variance_floor = cfg.pv_variance_floor;
  result.model.inference_seed = cfg.seed;
  return result;
}

TrainResult train_mc_dropout(const VolumeGrid& volume, const TrainConfig& raw_cfg, const StepCallback& on_step) {
  const TrainConfig cfg = canonical(raw_cfg);
  validate(cfg);
  require_normalized(volume);
  keep_large_allocations();
  TrainResult result;
  const MlpSpec dec = decoder_spec(cfg.single_decoder, cfg.encoder.output_width(), 1, cfg.dropout_p);
  result.model.kind = ModelKind::Mcd;
  result.model.network =
      train_single(volume, cfg, dec, cfg.seed, Objective::SquaredError, result.history, on_step);
  result.model.mcd_passes = cfg.mcd_passes;
  result.model.inference_seed = cfg.seed;
  return result;
}

TrainResult train_model(const VolumeGrid& volume, const TrainConfig& cfg, const StepCallback& on_step) {
  switch (cfg.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return train_rmdsrn(volume, cfg, on_step);
    case ModelKind::De: return train_deep_ensemble(volume, cfg, on_step);
    case ModelKind::Pv: return train_predicted_variance(volume, cfg, on_step);
    case ModelKind::Mcd: return train_mc_dropout(volume, cfg, on_step);
  }
  throw InvalidArgument("unknown model kind");
}

}  // namespace usrn
