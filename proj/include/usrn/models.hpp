// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "usrn/encoders.hpp"
#include "usrn/losses.hpp"
#include "usrn/nn.hpp"
#include "usrn/volume.hpp"

namespace usrn {

enum class ModelKind { Mdsrn, Rmdsrn, De, Pv, Mcd };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// One encoder feeding one decoder. Used as a deep-ensemble member, as the
/// MC-dropout network and (with two outputs) as the predicted-variance network.
struct SrnModel {
  Encoder encoder;
  Mlp decoder;

  ParamList parameters();
  std::size_t parameter_count() const;
};

/// Shared feature grid feeding M independent decoders.
struct MultiDecoderModel {
  Encoder encoder;
  std::vector<Mlp> decoders;

  std::size_t members() const { return decoders.size(); }
  ParamList parameters();
  std::size_t parameter_count() const;
};

struct DeepEnsemble {
  std::vector<SrnModel> members;

  ParamList parameters();
  std::size_t parameter_count() const;
};

SrnModel make_srn_model(const EncoderSpec& encoder, const MlpSpec& decoder, Rng& rng);
/// Decoders are initialized one after another from `rng`, so they differ.
MultiDecoderModel make_multi_decoder_model(const EncoderSpec& encoder, const MlpSpec& decoder,
                                           int members, Rng& rng);

/// Evaluates the encoder once and every decoder on the shared features; M x B.
Matrix predict_members(const MultiDecoderModel& model, const Matrix& coords);

/// S dropout-active forward passes with independent masks, reduced by ensemble_stats.
PredictionStats mcd_predict_stats(const SrnModel& model, const Matrix& coords, int passes, Rng& rng);

/// Mean, variance and NLL of the two-output predicted-variance network.
GaussianNllResult pv_forward_and_loss(const SrnModel& model, const TrainingBatch& batch,
                                      Scalar variance_floor = kVarianceFloor);

/// Any trained uncertain model, tagged with how it was trained.
struct UncertainModel {
  ModelKind kind = ModelKind::Rmdsrn;
  std::variant<MultiDecoderModel, DeepEnsemble, SrnModel> network;
  int mcd_passes = 5;
  Scalar variance_floor = kVarianceFloor;  // predicted-variance head
  std::uint64_t inference_seed = 0;        // dropout masks at inference

  ParamList parameters();
  std::size_t parameter_count() const;
  /// Number of per-point member predictions, or 0 for the predicted-variance model.
  std::size_t member_count() const;
};

/// Mean and variance for every coordinate. `stream` selects an independent dropout
/// mask sequence for MC-dropout models and is ignored by the others.
PredictionStats predict_stats(const UncertainModel& model, const Matrix& coords,
                              std::uint64_t stream = 0);

/// Raw member predictions (M x B). Throws for the predicted-variance model.
Matrix predict_member_matrix(const UncertainModel& model, const Matrix& coords,
                             std::uint64_t stream = 0);

struct ReconstructedFields {
  Dims dims;
  std::vector<Scalar> mean;
  std::vector<Scalar> variance;
};

/// Evaluates mean and variance at every vertex of `dims`, `chunk` coordinates at a time.
ReconstructedFields reconstruct_fields(const UncertainModel& model, const Dims& dims,
                                       std::size_t chunk = 16384);

}  // namespace usrn
