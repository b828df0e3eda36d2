// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "support.hpp"
#include "usrn/errors.hpp"
#include "usrn/models.hpp"

using namespace usrn;
using usrn::testing::Gen;

namespace {

EncoderSpec small_dense() { return EncoderSpec{EncoderKind::Dense, {4, 4, 4, 3}, {}, {}}; }

MlpSpec small_decoder(int outputs = 1, Scalar dropout = 0) {
  return MlpSpec{3, 2, 8, outputs, Activation::Relu, dropout};
}

void randomize(ParamList params, std::uint64_t seed) {
  Gen g(seed);
  for (auto* p : params)
    for (auto& v : p->values) v = g.real(-1, 1);
}

}  // namespace

TEST_CASE("model kind names") {
  for (ModelKind k : {ModelKind::Mdsrn, ModelKind::Rmdsrn, ModelKind::De, ModelKind::Pv, ModelKind::Mcd})
    CHECK(model_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(model_kind_from_string("gp"), InvalidArgument);
}

TEST_CASE("identical decoders give identical rows") {
  Rng rng(1);
  MultiDecoderModel m = make_multi_decoder_model(small_dense(), small_decoder(), 4, rng);
  randomize(m.parameters(), 1);
  for (std::size_t i = 1; i < m.decoders.size(); ++i)
    for (std::size_t l = 0; l < m.decoders[0].layers.size(); ++l) {
      m.decoders[i].layers[l].weight.values = m.decoders[0].layers[l].weight.values;
      m.decoders[i].layers[l].bias.values = m.decoders[0].layers[l].bias.values;
    }
  Gen g(1);
  const Matrix p = predict_members(m, g.coords(50));
  for (Eigen::Index i = 1; i < p.rows(); ++i) CHECK(p.row(i) == p.row(0));
  CHECK(ensemble_stats(p).variance.isZero(0));
}

TEST_CASE("rows are the standalone decoders on shared features") {
  Rng rng(2);
  MultiDecoderModel m = make_multi_decoder_model(small_dense(), small_decoder(), 3, rng);
  randomize(m.parameters(), 2);
  Gen g(2);
  const Matrix x = g.coords(40);
  const Matrix p = predict_members(m, x);
  const Matrix features = composite_encode(m.encoder, x);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(p.row(static_cast<Eigen::Index>(i)) == mlp_forward(m.decoders[i], features, Mode::Infer).col(0).transpose());

  // Only the perturbed decoder's row moves.
  m.decoders[2].layers.back().bias.values[0] += 0.5;
  const Matrix q = predict_members(m, x);
  CHECK(q.row(0) == p.row(0));
  CHECK(q.row(1) == p.row(1));
  for (Eigen::Index b = 0; b < x.rows(); ++b) CHECK(q(2, b) == doctest::Approx(p(2, b) + 0.5));
}

TEST_CASE("decoders are initialized independently") {
  Rng rng(3);
  const MultiDecoderModel m = make_multi_decoder_model(small_dense(), small_decoder(), 3, rng);
  CHECK(m.decoders[0].layers[0].weight.values != m.decoders[1].layers[0].weight.values);
  CHECK(m.decoders[1].layers[0].weight.values != m.decoders[2].layers[0].weight.values);
  Rng bad(3);
  CHECK_THROWS_AS(make_multi_decoder_model(small_dense(), small_decoder(), 1, bad), InvalidArgument);
}

TEST_CASE("parameter counts") {
  Rng rng(4);
  const MultiDecoderModel m = make_multi_decoder_model(small_dense(), small_decoder(), 5, rng);
  const std::size_t grid = 4 * 4 * 4 * 3;
  const std::size_t decoder = 3 * 8 + 8 + 8 * 8 + 8 + 8 + 1;
  CHECK(m.parameter_count() == grid + 5 * decoder);
  CHECK(parameter_count(const_cast<MultiDecoderModel&>(m).parameters()) == m.parameter_count());

  DeepEnsemble de;
  for (int i = 0; i < 3; ++i) {
    Rng r(static_cast<std::uint64_t>(i));
    de.members.push_back(make_srn_model(small_dense(), small_decoder(), r));
  }
  CHECK(de.parameter_count() == 3 * (grid + decoder));
}

TEST_CASE("mc dropout statistics") {
  Rng rng(5);
  SrnModel net = make_srn_model(small_dense(), small_decoder(1, 0), rng);
  randomize(net.parameters(), 5);
  Gen g(5);
  const Matrix x = g.coords(30);
  Rng a(1);
  CHECK(mcd_predict_stats(net, x, 5, a).variance.isZero(0));

  net.decoder.spec.dropout_p = 0.3;
  Rng b(7), c(7);
  const PredictionStats s1 = mcd_predict_stats(net, x, 5, b);
  const PredictionStats s2 = mcd_predict_stats(net, x, 5, c);
  CHECK(s1.mean == s2.mean);
  CHECK(s1.variance == s2.variance);
  CHECK(s1.variance.maxCoeff() > 0);
  CHECK_THROWS_AS(mcd_predict_stats(net, x, 1, b), InvalidArgument);

  UncertainModel um;
  um.kind = ModelKind::Mcd;
  um.network = net;
  um.mcd_passes = 4;
  um.inference_seed = 9;
  CHECK(um.member_count() == 4);
  CHECK(predict_member_matrix(um, x, 3) == predict_member_matrix(um, x, 3));
  CHECK(predict_member_matrix(um, x, 3) != predict_member_matrix(um, x, 4));
}

TEST_CASE("predicted variance model") {
  Rng rng(6);
  SrnModel net = make_srn_model(small_dense(), small_decoder(2), rng);
  randomize(net.parameters(), 6);
  Gen g(6);
  TrainingBatch batch;
  batch.coords = g.coords(20);
  batch.targets = g.vector(20, 0, 1);
  batch.indices.assign(20, 0);
  const GaussianNllResult r = pv_forward_and_loss(net, batch);

  UncertainModel um;
  um.kind = ModelKind::Pv;
  um.network = net;
  const PredictionStats s = predict_stats(um, batch.coords);
  CHECK(s.mean == r.mean);
  CHECK(s.variance == r.variance);
  CHECK(s.variance.minCoeff() >= kVarianceFloor);
  CHECK(um.member_count() == 0);
  CHECK_THROWS_AS(predict_member_matrix(um, batch.coords), InvalidArgument);
}

TEST_CASE("reconstruct_fields agrees with direct prediction for any chunking") {
  Rng rng(7);
  MultiDecoderModel m = make_multi_decoder_model(small_dense(), small_decoder(), 3, rng);
  randomize(m.parameters(), 7);
  UncertainModel um;
  um.kind = ModelKind::Rmdsrn;
  um.network = m;
  const Dims d{5, 4, 3};
  const PredictionStats direct = predict_stats(um, vertex_coordinates(d, 0, d.count()));
  for (std::size_t chunk : {std::size_t{1}, std::size_t{7}, std::size_t{1000}}) {
    const ReconstructedFields f = reconstruct_fields(um, d, chunk);
    for (std::size_t i = 0; i < d.count(); ++i) {
      CHECK(f.mean[i] == doctest::Approx(direct.mean[static_cast<Eigen::Index>(i)]).epsilon(1e-14));
      CHECK(f.variance[i] == doctest::Approx(direct.variance[static_cast<Eigen::Index>(i)]).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(reconstruct_fields(um, d, 0), InvalidArgument);
}
