// SPDX-License-Identifier: Apache-2.0
#include "usrn/models.hpp"

#include "usrn/errors.hpp"

namespace usrn {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mdsrn: return "mdsrn";
    case ModelKind::Rmdsrn: return "rmdsrn";
    case ModelKind::De: return "de";
    case ModelKind::Pv: return "pv";
    case ModelKind::Mcd: return "mcd";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "mdsrn") return ModelKind::Mdsrn;
  if (name == "rmdsrn") return ModelKind::Rmdsrn;
  if (name == "de") return ModelKind::De;
  if (name == "pv") return ModelKind::Pv;
  if (name == "mcd") return ModelKind::Mcd;
  throw InvalidArgument("unknown model kind '" + name + "'");
}

ParamList SrnModel::parameters() {
  ParamList out = encoder.parameters();
  for (auto* p : decoder.parameters()) out.push_back(p);
  return out;
}

std::size_t SrnModel::parameter_count() const {
  return encoder.parameter_count() + decoder.parameter_count();
}

ParamList MultiDecoderModel::parameters() {
  ParamList out = encoder.parameters();
  for (auto& d : decoders)
    for (auto* p : d.parameters()) out.push_back(p);
  return out;
}

std::size_t MultiDecoderModel::parameter_count() const {
  std::size_t n = encoder.parameter_count();
  for (const auto& d : decoders) n += d.parameter_count();
  return n;
}

ParamList DeepEnsemble::parameters() {
  ParamList out;
  for (auto& m : members)
    for (auto* p : m.parameters()) out.push_back(p);
  return out;
}

std::size_t DeepEnsemble::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : members) n += m.parameter_count();
  return n;
}

SrnModel make_srn_model(const EncoderSpec& encoder, const MlpSpec& decoder, Rng& rng) {
  SrnModel m;
  m.encoder = make_encoder(encoder, rng);
  MlpSpec d = decoder;
  d.input_dim = encoder.output_width();
  m.decoder = make_mlp(d, rng, "decoder0");
  return m;
}

MultiDecoderModel make_multi_decoder_model(const EncoderSpec& encoder, const MlpSpec& decoder,
                                           int members, Rng& rng) {
  if (members < 2) throw InvalidArgument("a multi-decoder model needs at least 2 decoders");
  MultiDecoderModel m;
  m.encoder = make_encoder(encoder, rng);
  MlpSpec d = decoder;
  d.input_dim = encoder.output_width();
  d.output_dim = 1;
  for (int i = 0; i < members; ++i) m.decoders.push_back(make_mlp(d, rng, "decoder" + std::to_string(i)));
  return m;
}

Matrix predict_members(const MultiDecoderModel& model, const Matrix& coords) {
  const Matrix features = composite_encode(model.encoder, coords);
  const auto m = static_cast<Eigen::Index>(model.decoders.size());
  Matrix out(m, coords.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& dec = model.decoders[static_cast<std::size_t>(i)];
    if (dec.layers.front().inputs() != features.cols())
      throw InvalidArgument("decoder " + std::to_string(i) + " does not accept the encoder width");
    out.row(i) = mlp_forward(dec, features, Mode::Infer).col(0).transpose();
  }
  return out;
}

PredictionStats mcd_predict_stats(const SrnModel& model, const Matrix& coords, int passes, Rng& rng) {
  if (passes < 2) throw InvalidArgument("MC dropout needs at least 2 forward passes");
  const Matrix features = composite_encode(model.encoder, coords);
  Matrix members(passes, coords.rows());
  for (int s = 0; s < passes; ++s)
    members.row(s) = mlp_forward(model.decoder, features, Mode::Train, &rng).col(0).transpose();
  return ensemble_stats(members);
}

GaussianNllResult pv_forward_and_loss(const SrnModel& model, const TrainingBatch& batch,
                                      Scalar variance_floor) {
  const Matrix features = composite_encode(model.encoder, batch.coords);
  const Matrix outputs = mlp_forward(model.decoder, features, Mode::Infer);
  return predicted_variance_nll(outputs, batch.targets, variance_floor);
}

ParamList UncertainModel::parameters() {
  return std::visit([](auto& net) { return net.parameters(); }, network);
}

std::size_t UncertainModel::parameter_count() const {
  return std::visit([](const auto& net) { return net.parameter_count(); }, network);
}

std::size_t UncertainModel::member_count() const {
  switch (kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return std::get<MultiDecoderModel>(network).members();
    case ModelKind::De: return std::get<DeepEnsemble>(network).members.size();
    case ModelKind::Mcd: return static_cast<std::size_t>(mcd_passes);
    case ModelKind::Pv: return 0;
  }
  return 0;
}

namespace {

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace

Matrix predict_member_matrix(const UncertainModel& model, const Matrix& coords, std::uint64_t stream) {
  switch (model.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return predict_members(std::get<MultiDecoderModel>(model.network), coords);
    case ModelKind::De: {
      const auto& de = std::get<DeepEnsemble>(model.network);
      Matrix out(static_cast<Eigen::Index>(de.members.size()), coords.rows());
      for (std::size_t i = 0; i < de.members.size(); ++i) {
        const auto& m = de.members[i];
        out.row(static_cast<Eigen::Index>(i)) =
            mlp_forward(m.decoder, composite_encode(m.encoder, coords), Mode::Infer).col(0).transpose();
      }
      return out;
    }
    case ModelKind::Mcd: {
      Rng rng = stream_rng(model.inference_seed, stream);
      return mcd_predict_stats(std::get<SrnModel>(model.network), coords, model.mcd_passes, rng).members;
    }
    case ModelKind::Pv:
      throw InvalidArgument("the predicted-variance model has no member predictions");
  }
  throw InvalidArgument("unknown model kind");
}

PredictionStats predict_stats(const UncertainModel& model, const Matrix& coords, std::uint64_t stream) {
  if (model.kind == ModelKind::Pv) {
    const auto& net = std::get<SrnModel>(model.network);
    const Matrix out = mlp_forward(net.decoder, composite_encode(net.encoder, coords), Mode::Infer);
    PredictionStats s;
    s.mean = out.col(0);
    s.variance.resize(out.rows());
    for (Eigen::Index b = 0; b < out.rows(); ++b)
      s.variance[b] = softplus(out(b, 1)) + model.variance_floor;
    return s;
  }
  return ensemble_stats(predict_member_matrix(model, coords, stream));
}

ReconstructedFields reconstruct_fields(const UncertainModel& model, const Dims& dims, std::size_t chunk) {
  if (chunk == 0) throw InvalidArgument("chunk size must be positive");
  ReconstructedFields f;
  f.dims = dims;
  const std::size_t n = dims.count();
  f.mean.resize(n);
  f.variance.resize(n);
  const std::size_t chunks = (n + chunk - 1) / chunk;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    const PredictionStats s =
        predict_stats(model, vertex_coordinates(dims, begin, end), static_cast<std::uint64_t>(c));
    for (std::size_t i = begin; i < end; ++i) {
      f.mean[i] = s.mean[static_cast<Eigen::Index>(i - begin)];
      f.variance[i] = s.variance[static_cast<Eigen::Index>(i - begin)];
    }
  }
  return f;
}

}  // namespace usrn
