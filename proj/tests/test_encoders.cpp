// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "usrn/encoders.hpp"
#include "usrn/errors.hpp"

using namespace usrn;
using usrn::testing::Gen;

namespace {

DenseGrid random_dense(DenseGridSpec spec, std::uint64_t seed) {
  Rng rng(seed);
  DenseGrid g = make_dense_grid(spec, rng);
  Gen gen(seed);
  for (auto& v : g.params.values) v = gen.real(-1, 1);
  return g;
}

Scalar vertex_coord(int i, int n) { return -1 + 2 * static_cast<Scalar>(i) / n; }

// Hash-table row written out from the documented rule.
std::size_t expected_row(int resolution, std::size_t table_size, std::uint32_t x, std::uint32_t y,
                         std::uint32_t z) {
  const std::uint64_t side = static_cast<std::uint64_t>(resolution) + 1;
  if (side * side * side <= table_size) return x + side * (y + side * z);
  const std::uint32_t h = x ^ (y * 2654435761u) ^ (z * 805459861u);
  return h % table_size;
}

}  // namespace

TEST_CASE("encoder widths and validation") {
  EncoderSpec s;
  s.kind = EncoderKind::DenseFourier;
  s.dense.features = 4;
  s.fourier.num_freqs = 2;
  CHECK(s.output_width() == 16);
  s.kind = EncoderKind::Hash;
  s.hash = {4, 4, 32, 14, 2};
  CHECK(s.output_width() == 8);
  validate(s);

  EncoderSpec bad;
  bad.dense.gx = 1;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  EncoderSpec collapsing;
  collapsing.kind = EncoderKind::Hash;
  collapsing.hash = {6, 4, 5, 14, 2};
  CHECK_THROWS_AS(validate(collapsing), InvalidArgument);
  CHECK(encoder_kind_from_string("hash") == EncoderKind::Hash);
  CHECK_THROWS_AS(encoder_kind_from_string("octree"), InvalidArgument);
}

TEST_CASE("dense grid init range") {
  Rng rng(1);
  const DenseGrid g = make_dense_grid({5, 6, 7, 3}, rng);
  CHECK(g.params.size() == 5u * 6 * 7 * 3);
  for (Scalar v : g.params.values) CHECK(std::abs(v) <= 1e-4);
}

TEST_CASE("dense grid of constant features") {
  Rng rng(2);
  DenseGrid g = make_dense_grid({4, 3, 5, 2}, rng);
  for (std::size_t v = 0; v < g.params.size(); v += 2) {
    g.params.values[v] = 0.75;
    g.params.values[v + 1] = -2;
  }
  Gen gen(2);
  const Matrix out = dense_grid_encode(g, gen.coords(200));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    CHECK(out(r, 0) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(out(r, 1) == doctest::Approx(-2).epsilon(1e-14));
  }
}

TEST_CASE("dense grid reproduces linear feature fields") {
  Gen gen(3);
  for (int trial = 0; trial < 5; ++trial) {
    const DenseGridSpec spec{gen.integer(2, 9), gen.integer(2, 9), gen.integer(2, 9), 2};
    Rng rng(trial);
    DenseGrid g = make_dense_grid(spec, rng);
    const Vec3 a(gen.real(-2, 2), gen.real(-2, 2), gen.real(-2, 2));
    const Vec3 b(gen.real(-2, 2), gen.real(-2, 2), gen.real(-2, 2));
    for (int k = 0; k < spec.gz; ++k)
      for (int j = 0; j < spec.gy; ++j)
        for (int i = 0; i < spec.gx; ++i) {
          const Vec3 p(vertex_coord(i, spec.gx - 1), vertex_coord(j, spec.gy - 1), vertex_coord(k, spec.gz - 1));
          g.params.values[g.vertex(i, j, k) * 2] = a.dot(p) + 0.5;
          g.params.values[g.vertex(i, j, k) * 2 + 1] = b.dot(p);
        }
    const Matrix x = gen.coords(200);
    const Matrix out = dense_grid_encode(g, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Vec3 p = x.row(r).transpose();
      CHECK(std::abs(out(r, 0) - (a.dot(p) + 0.5)) <= 1e-12);
      CHECK(std::abs(out(r, 1) - b.dot(p)) <= 1e-12);
    }
  }
}

TEST_CASE("dense grid matches the corner-sum reference") {
  const DenseGrid g = random_dense({5, 4, 6, 3}, 4);
  Gen gen(4);
  const Matrix x = gen.coords(300);
  const Matrix out = dense_grid_encode(g, x);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (int ch = 0; ch < 3; ++ch) {
      const Scalar ref = testing::ref_trilinear({5, 4, 6}, x.row(r).transpose(), [&](int i, int j, int k) {
        return g.params.values[g.vertex(i, j, k) * 3 + static_cast<std::size_t>(ch)];
      });
      CHECK(out(r, ch) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("dense grid backward at a cell centre") {
  Rng rng(5);
  DenseGrid g = make_dense_grid({3, 3, 3, 1}, rng);
  g.params.zero_grad();
  Matrix x(1, 3);
  x << -0.5, -0.5, -0.5;  // centre of the first cell
  dense_grid_backward(g, x, Matrix::Ones(1, 1));
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        const Scalar expected = (i < 2 && j < 2 && k < 2) ? 0.125 : 0.0;
        CHECK(g.params.grads[g.vertex(i, j, k)] == expected);
      }
}

TEST_CASE("dense grid backward conserves gradient mass") {
  Gen gen(6);
  DenseGrid g = random_dense({4, 5, 3, 3}, 6);
  for (int trial = 0; trial < 20; ++trial) {
    g.params.zero_grad();
    const Matrix x = gen.coords(gen.integer(1, 30));
    const Matrix up = gen.matrix(x.rows(), 3, -2, 2);
    dense_grid_backward(g, x, up);
    for (int ch = 0; ch < 3; ++ch) {
      Scalar total = 0;
      for (std::size_t v = 0; v < g.params.size() / 3; ++v) total += g.params.grads[v * 3 + ch];
      CHECK(total == doctest::Approx(up.col(ch).sum()).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoders reject out-of-domain coordinates") {
  const DenseGrid g = random_dense({3, 3, 3, 1}, 7);
  Matrix x(1, 3);
  x << 0, 1.01, 0;
  CHECK_THROWS_AS(dense_grid_encode(g, x), InvalidArgument);
  Rng rng(7);
  const HashGrid h = make_hash_grid({2, 2, 4, 8, 1}, rng);
  CHECK_THROWS_AS(hash_grid_encode(h, x), InvalidArgument);
  CHECK_THROWS_AS(dense_grid_encode(g, Matrix::Zero(2, 2)), InvalidArgument);
}

TEST_CASE("hash grid resolutions grow geometrically") {
  const auto r = hash_grid_resolutions({4, 4, 32, 14, 2});
  CHECK(r == std::vector<int>{4, 8, 16, 32});
  Gen gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int levels = gen.integer(1, 6);
    const int lo = gen.integer(2, 8);
    const int hi = lo * (1 << levels) + gen.integer(0, 20);
    const auto res = hash_grid_resolutions({levels, lo, hi, 12, 1});
    REQUIRE(res.size() == static_cast<std::size_t>(levels));
    CHECK(res.front() == lo);
    for (std::size_t i = 1; i < res.size(); ++i) CHECK(res[i] > res[i - 1]);
  }
}

TEST_CASE("hash grid vertex hits return table entries") {
  Rng rng(9);
  // T = 9: level 0 (res 4, 125 vertices) is direct, levels with res >= 8 are hashed.
  HashGrid h = make_hash_grid({3, 4, 16, 9, 2}, rng);
  Gen gen(9);
  for (auto& v : h.params.values) v = gen.real(-1, 1);
  CHECK(h.direct_indexed(0));
  CHECK_FALSE(h.direct_indexed(2));
  for (int level = 0; level < 3; ++level) {
    const int n = h.resolutions[static_cast<std::size_t>(level)];
    for (int trial = 0; trial < 50; ++trial) {
      const auto xi = static_cast<std::uint32_t>(gen.integer(0, n));
      const auto yi = static_cast<std::uint32_t>(gen.integer(0, n));
      const auto zi = static_cast<std::uint32_t>(gen.integer(0, n));
      Matrix x(1, 3);
      x << vertex_coord(static_cast<int>(xi), n), vertex_coord(static_cast<int>(yi), n),
          vertex_coord(static_cast<int>(zi), n);
      const Matrix out = hash_grid_encode(h, x);
      const std::size_t row = expected_row(n, h.table_size(), xi, yi, zi);
      CHECK(h.table_index(level, xi, yi, zi) == row);
      for (int ch = 0; ch < 2; ++ch) {
        const Scalar entry = h.params.values[(static_cast<std::size_t>(level) * h.table_size() + row) * 2 + ch];
        CHECK(out(0, level * 2 + ch) == doctest::Approx(entry).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hash grid determinism and zero tables") {
  Rng rng(10);
  HashGrid h = make_hash_grid({4, 4, 32, 10, 2}, rng);
  Gen gen(10);
  Matrix x = gen.coords(20);
  x.row(1) = x.row(0);
  const Matrix a = hash_grid_encode(h, x);
  CHECK(a.row(0) == a.row(1));
  CHECK(a == hash_grid_encode(h, x));
  std::fill(h.params.values.begin(), h.params.values.end(), 0.0);
  CHECK(hash_grid_encode(h, x).isZero(0));
}

TEST_CASE("fourier features") {
  Matrix zero = Matrix::Zero(1, 3);
  const Matrix f0 = fourier_encode({3}, zero);
  REQUIRE(f0.cols() == 18);
  for (int c = 0; c < 18; c += 2) {
    CHECK(f0(0, c) == 0);
    CHECK(f0(0, c + 1) == 1);
  }
  Matrix one = Matrix::Ones(1, 3);
  const Matrix f1 = fourier_encode({1}, one);
  CHECK(std::abs(f1(0, 0)) < 1e-15);
  CHECK(f1(0, 1) == -1);
  CHECK(fourier_encode({0}, one).cols() == 0);

  Gen gen(11);
  const Matrix x = gen.coords(10);
  const Matrix f = fourier_encode({4}, x);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (int axis = 0; axis < 3; ++axis)
      for (int k = 0; k < 4; ++k) {
        const Scalar arg = std::pow(2.0, k) * std::numbers::pi * x(r, axis);
        CHECK(f(r, (axis * 4 + k) * 2) == doctest::Approx(std::sin(arg)).epsilon(1e-12));
        CHECK(f(r, (axis * 4 + k) * 2 + 1) == doctest::Approx(std::cos(arg)).epsilon(1e-12));
      }
}

TEST_CASE("composite encoder layout") {
  EncoderSpec s;
  s.kind = EncoderKind::DenseFourier;
  s.dense = {5, 5, 5, 4};
  s.fourier.num_freqs = 2;
  Rng rng(12);
  const Encoder e = make_encoder(s, rng);
  Gen gen(12);
  const Matrix x = gen.coords(30);
  const Matrix out = composite_encode(e, x);
  REQUIRE(out.cols() == 16);
  CHECK(out.leftCols(4) == dense_grid_encode(*e.dense, x));
  CHECK(out.rightCols(12) == fourier_encode(s.fourier, x));

  EncoderSpec plain = s;
  plain.kind = EncoderKind::Dense;
  Rng rng2(12);
  const Encoder d = make_encoder(plain, rng2);
  CHECK(composite_encode(d, x) == dense_grid_encode(*d.dense, x));

  // Row permutation commutes with encoding.
  Matrix shuffled(x.rows(), 3);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>((i * 7) % perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
  const Matrix permuted = composite_encode(e, shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(permuted.row(static_cast<Eigen::Index>(i)) == out.row(perm[i]));
}

TEST_CASE("encoder gradients match finite differences") {
  for (EncoderKind kind : {EncoderKind::Dense, EncoderKind::Hash, EncoderKind::DenseFourier}) {
    CAPTURE(to_string(kind));
    EncoderSpec s;
    s.kind = kind;
    s.dense = {3, 4, 3, 2};
    s.hash = {2, 2, 6, 6, 2};
    s.fourier.num_freqs = 1;
    Rng rng(13);
    Encoder e = make_encoder(s, rng);
    Gen gen(13);
    for (auto* p : e.parameters())
      for (auto& v : p->values) v = gen.real(-1, 1);
    const Matrix x = gen.coords(9);
    const Matrix target = gen.matrix(9, s.output_width(), -1, 1);
    auto loss = [&] { return (composite_encode(e, x) - target).squaredNorm(); };
    zero_grads(e.parameters());
    composite_backward(e, x, 2 * (composite_encode(e, x) - target));
    CHECK(finite_difference_check(loss, e.parameters(), 1e-5).max_relative_error < 1e-6);
  }
}
