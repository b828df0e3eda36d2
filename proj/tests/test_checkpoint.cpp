// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "usrn/checkpoint.hpp"
#include "usrn/errors.hpp"
#include "usrn/training.hpp"

using namespace usrn;
using usrn::testing::Gen;
using usrn::testing::TempDir;

namespace {

TrainResult tiny_model(ModelKind kind) {
  TrainConfig c;
  c.kind = kind;
  c.steps = 3;
  c.batch_size = 64;
  c.seed = 5;
  c.encoder = EncoderSpec{EncoderKind::DenseFourier, {5, 4, 3, 2}, {}, {1}};
  if (kind == ModelKind::Pv) c.encoder = EncoderSpec{EncoderKind::Hash, {}, {2, 2, 6, 8, 2}, {}};
  c.members = 3;
  c.decoder = {2, 8, Activation::Snake};
  c.single_decoder = {1, 8, Activation::Relu};
  c.dropout_p = 0.2;
  c.mcd_passes = 4;
  return train_model(make_synthetic_volume(demo_synthetic_spec({8, 8, 8}, 1)), c);
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("round trip is bit exact for every model kind") {
  TempDir dir("ckpt");
  Gen g(1);
  const Matrix coords = g.coords(1024);
  for (ModelKind kind : {ModelKind::Mdsrn, ModelKind::Rmdsrn, ModelKind::De, ModelKind::Pv, ModelKind::Mcd}) {
    CAPTURE(to_string(kind));
    TrainResult r = tiny_model(kind);
    TrainingMetadata meta{3, 5, {{"train.kind", to_string(kind)}}};
    const auto path = dir / (to_string(kind) + ".ckpt");
    save_checkpoint(r.model, meta, path);

    CheckpointInfo info;
    UncertainModel back = load_checkpoint(path, &info);
    CHECK(back.kind == r.model.kind);
    CHECK(info.kind == r.model.kind);
    CHECK(info.parameter_count == r.model.parameter_count());
    CHECK(info.training.steps_completed == 3);
    CHECK(info.training.config.at("train.kind") == to_string(kind));
    CHECK(read_checkpoint_info(path).tensors.size() == info.tensors.size());
    CHECK_FALSE(describe(info).empty());

    const ParamList a = r.model.parameters(), b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      CHECK(a[i]->values == b[i]->values);
    }
    const PredictionStats before = predict_stats(r.model, coords, 7);
    const PredictionStats after = predict_stats(back, coords, 7);
    CHECK(before.mean == after.mean);
    CHECK(before.variance == after.variance);

    // Saving the reloaded model reproduces the file byte for byte.
    save_checkpoint(back, info.training, dir / "again.ckpt");
    CHECK(read_bytes(path) == read_bytes(dir / "again.ckpt"));
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("ckbad");
  TrainResult r = tiny_model(ModelKind::Rmdsrn);
  const auto path = dir / "m.ckpt";
  save_checkpoint(r.model, {}, path);
  const auto bytes = read_bytes(path);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), FileNotFound);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 8);
  write_bytes(dir / "short.ckpt", truncated);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);

  auto padded = bytes;
  padded.push_back(0);
  write_bytes(dir / "long.ckpt", padded);
  CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), FormatError);

  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), FormatError);

  auto version = bytes;
  version[4] = static_cast<char>(kCheckpointVersion + 1);
  // Drop the tensors too: the version check must fire before any of them is read.
  const std::uint32_t header_len = static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8 |
                                   static_cast<unsigned char>(bytes[10]) << 16 |
                                   static_cast<unsigned char>(bytes[11]) << 24;
  version.resize(12 + header_len);
  write_bytes(dir / "version.ckpt", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), VersionError);
  CHECK_THROWS_AS(read_checkpoint_info(dir / "version.ckpt"), VersionError);

  auto header = bytes;
  header[12] = '[';
  write_bytes(dir / "header.ckpt", header);
  CHECK_THROWS_AS(load_checkpoint(dir / "header.ckpt"), FormatError);

  write_bytes(dir / "tiny.ckpt", {'U', 'S'});
  CHECK_THROWS_AS(load_checkpoint(dir / "tiny.ckpt"), FormatError);
}
