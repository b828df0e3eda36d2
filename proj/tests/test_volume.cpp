// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include "support.hpp"
#include "usrn/errors.hpp"
#include "usrn/volume.hpp"

using namespace usrn;
using usrn::testing::Gen;
using usrn::testing::TempDir;

namespace {

VolumeGrid cube_0_to_7() {
  return make_volume({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
}

void write_floats(const std::filesystem::path& p, const std::vector<float>& v) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

VolumeGrid field_volume(Dims d, const std::function<Scalar(const Vec3&)>& f) {
  std::vector<float> values(d.count());
  VolumeGrid shape;
  shape.dims = d;
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(f(shape.vertex_position(i)));
  return make_volume(d, values);
}

}  // namespace

TEST_CASE("raw volume loads values and range") {
  TempDir dir("vol");
  write_floats(dir / "cube.raw", {0, 1, 2, 3, 4, 5, 6, 7});
  const VolumeGrid v = load_raw_volume(dir / "cube.raw", RawMetadata{{2, 2, 2}, "f32le", ""});
  CHECK(v.values == std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(v.raw_range.first == 0.0);
  CHECK(v.raw_range.second == 7.0);
  CHECK_FALSE(v.normalized);
}

TEST_CASE("raw volume errors") {
  TempDir dir("volerr");
  write_floats(dir / "short.raw", {0, 1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(load_raw_volume(dir / "short.raw", RawMetadata{{2, 2, 2}, "f32le", ""}), FormatError);

  write_floats(dir / "nan.raw", {0, 1, 2, std::numeric_limits<float>::quiet_NaN(), 4, 5, 6, 7});
  CHECK_THROWS_AS(load_raw_volume(dir / "nan.raw", RawMetadata{{2, 2, 2}, "f32le", ""}), NumericError);

  CHECK_THROWS_AS(load_raw_volume(dir / "absent.raw", RawMetadata{{2, 2, 2}, "f32le", ""}), FileNotFound);

  write_floats(dir / "ok.raw", {0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(load_raw_volume(dir / "ok.raw", RawMetadata{{2, 2, 2}, "u8", ""}), FormatError);
}

TEST_CASE("raw round trip is bit exact") {
  TempDir dir("rt");
  Gen g(11);
  std::vector<float> values(5 * 4 * 3);
  for (auto& x : values) x = static_cast<float>(g.real(-1e6, 1e6));
  const VolumeGrid v = make_volume({5, 4, 3}, values);
  save_raw_volume(dir / "a.raw", v);
  write_raw_metadata(metadata_path_for(dir / "a.raw"), RawMetadata{v.dims, "f32le", "random"});
  const RawMetadata meta = read_raw_metadata(dir / "a.meta");
  CHECK(meta.dims == v.dims);
  CHECK(meta.name == "random");
  const VolumeGrid back = load_raw_volume(dir / "a.raw", meta);
  REQUIRE(back.values.size() == values.size());
  CHECK(std::memcmp(back.values.data(), values.data(), values.size() * sizeof(float)) == 0);
}

TEST_CASE("metadata rejects unknown keys and missing dims") {
  TempDir dir("meta");
  {
    std::ofstream(dir / "x.meta") << "dims = [2, 2, 2]\ndtype = \"f32le\"\ncolour = 3\n";
  }
  CHECK_THROWS_AS(read_raw_metadata(dir / "x.meta"), FormatError);
  {
    std::ofstream(dir / "y.meta") << "dtype = \"f32le\"\n";
  }
  CHECK_THROWS_AS(read_raw_metadata(dir / "y.meta"), FormatError);
}

TEST_CASE("normalize_volume") {
  const VolumeGrid a = normalize_volume(make_volume({2, 2, 2}, {0, 7, 0, 7, 0, 7, 0, 7}));
  CHECK(a.values[0] == 0.0f);
  CHECK(a.values[1] == 1.0f);
  CHECK(a.normalized);
  CHECK(a.raw_range.second == 7.0);

  const VolumeGrid b = normalize_volume(make_volume({3, 2, 2}, {2, 3, 4, 2, 3, 4, 2, 3, 4, 2, 3, 4}));
  CHECK(b.values[0] == 0.0f);
  CHECK(b.values[1] == 0.5f);
  CHECK(b.values[2] == 1.0f);

  CHECK_THROWS_AS(normalize_volume(make_volume({2, 2, 2}, std::vector<float>(8, 3.0f))), InvalidArgument);
}

TEST_CASE("normalized values lie in [0, 1]") {
  Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims d{g.integer(2, 6), g.integer(2, 6), g.integer(2, 6)};
    std::vector<float> values(d.count());
    for (auto& x : values) x = static_cast<float>(g.real(-50, 50));
    const VolumeGrid n = normalize_volume(make_volume(d, values));
    for (float x : n.values) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
  }
}

TEST_CASE("sample_trilinear examples") {
  const VolumeGrid v = cube_0_to_7();
  CHECK(sample_trilinear(v, Vec3(-1, -1, -1)) == 0.0);
  CHECK(sample_trilinear(v, Vec3(1, 1, 1)) == 7.0);
  CHECK(sample_trilinear(v, Vec3(0, -1, -1)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(sample_trilinear(v, Vec3(1.1, 0, 0)), InvalidArgument);
}

TEST_CASE("vertex hits return stored values exactly") {
  Gen g(21);
  std::vector<float> values(4 * 5 * 6);
  for (auto& x : values) x = static_cast<float>(g.real(0, 1));
  const VolumeGrid v = make_volume({4, 5, 6}, values);
  for (std::size_t i = 0; i < values.size(); ++i) CHECK(sample_trilinear(v, v.vertex_position(i)) == values[i]);
}

TEST_CASE("trilinear sampling reproduces linear fields") {
  Gen g(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Dims d{g.integer(2, 9), g.integer(2, 9), g.integer(2, 9)};
    const Vec3 a(g.real(-1, 1), g.real(-1, 1), g.real(-1, 1));
    const Scalar c = g.real(-1, 1);
    const VolumeGrid v = field_volume(d, [&](const Vec3& p) { return a.dot(p) + c; });
    for (int k = 0; k < 100; ++k) {
      const Vec3 p(g.real(-1, 1), g.real(-1, 1), g.real(-1, 1));
      CHECK(std::abs(sample_trilinear(v, p) - (a.dot(p) + c)) <= 1e-6);
    }
  }
}

TEST_CASE("trilinear sampling matches the corner-sum reference") {
  Gen g(8);
  std::vector<float> values(6 * 7 * 5);
  for (auto& x : values) x = static_cast<float>(g.real(-3, 3));
  const VolumeGrid v = make_volume({6, 7, 5}, values);
  for (int k = 0; k < 300; ++k) {
    const Vec3 p(g.real(-1, 1), g.real(-1, 1), g.real(-1, 1));
    const Scalar ref = testing::ref_trilinear(v.dims, p, [&](int i, int j, int l) { return v.values[v.index(i, j, l)]; });
    CHECK(sample_trilinear(v, p) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("training batches") {
  const VolumeGrid v = normalize_volume(cube_0_to_7());
  Rng r1(42), r2(42);
  const TrainingBatch a = sample_training_batch(v, 64, r1);
  const TrainingBatch b = sample_training_batch(v, 64, r2);
  CHECK(a.coords == b.coords);
  CHECK(a.targets == b.targets);

  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.indices[i] < v.values.size());
    const auto row = static_cast<Eigen::Index>(i);
    CHECK(a.coords.row(row).transpose() == v.vertex_position(a.indices[i]));
    CHECK(a.targets[row] == v.values[a.indices[i]]);
  }

  Rng raw_rng(1);
  CHECK_THROWS_AS(sample_training_batch(cube_0_to_7(), 4, raw_rng), InvalidArgument);
}

TEST_CASE("training batch indices are uniform") {
  const VolumeGrid v = normalize_volume(cube_0_to_7());
  Rng rng(7);
  const std::size_t n = v.dims.count() * 100;
  const TrainingBatch b = sample_training_batch(v, n, rng);
  std::vector<int> counts(v.dims.count(), 0);
  for (std::size_t idx : b.indices) ++counts[idx];
  // Sum of squared deviations stays under the 99.9% chi-square quantile for 7 dof.
  double chi2 = 0;
  for (int c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  CHECK(chi2 < 24.32);
  for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 8) < 0.05);
}

TEST_CASE("constant volume batches have constant targets") {
  const VolumeGrid v = make_constant_volume({4, 4, 4}, 0.25f);
  Rng rng(3);
  const TrainingBatch b = sample_training_batch(v, 50, rng);
  for (Eigen::Index i = 0; i < b.targets.size(); ++i) CHECK(b.targets[i] == 0.25);
}

TEST_CASE("synthetic volumes") {
  SyntheticSpec constant{{4, 4, 4}, {}};
  SyntheticTerm c;
  c.kind = SyntheticKind::Constant;
  c.value = 3;
  constant.terms = {c};
  CHECK_THROWS_AS(make_synthetic_volume(constant), InvalidArgument);

  SyntheticSpec ramp{{9, 5, 4}, {}};
  SyntheticTerm r;
  r.kind = SyntheticKind::LinearRamp;
  r.axis = 0;
  ramp.terms = {r};
  const VolumeGrid rv = make_synthetic_volume(ramp);
  Gen g(1);
  for (int k = 0; k < 100; ++k) {
    const Vec3 p(g.real(-1, 1), g.real(-1, 1), g.real(-1, 1));
    CHECK(std::abs(sample_trilinear(rv, p) - (p[0] + 1) / 2) <= 1e-6);
  }

  SyntheticSpec blob{{9, 9, 9}, {}};
  SyntheticTerm b;
  b.kind = SyntheticKind::GaussianMixture;
  b.blobs = {GaussianBlob{Vec3::Zero(), 0.3, 1.0}};
  blob.terms = {b};
  const VolumeGrid bv = make_synthetic_volume(blob);
  const auto peak = std::max_element(bv.values.begin(), bv.values.end()) - bv.values.begin();
  CHECK(static_cast<std::size_t>(peak) == bv.index(4, 4, 4));

  SyntheticTerm bad;
  bad.kind = SyntheticKind::Shell;
  bad.thickness = 0;
  CHECK_THROWS_AS(validate(SyntheticSpec{{4, 4, 4}, {bad}}), InvalidArgument);
}

TEST_CASE("demo synthetic field is deterministic in its seed") {
  const VolumeGrid a = make_synthetic_volume(demo_synthetic_spec({16, 16, 16}, 3));
  const VolumeGrid b = make_synthetic_volume(demo_synthetic_spec({16, 16, 16}, 3));
  const VolumeGrid c = make_synthetic_volume(demo_synthetic_spec({16, 16, 16}, 4));
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.normalized);
}
