// SPDX-License-Identifier: Apache-2.0
#include "usrn/encoders.hpp"

#include <cmath>
#include <numbers>

#include "usrn/errors.hpp"
#include "usrn/volume.hpp"

namespace usrn {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::Dense: return "dense";
    case EncoderKind::Hash: return "hash";
    case EncoderKind::DenseFourier: return "dense+fourier";
  }
  return "?";
}

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "dense") return EncoderKind::Dense;
  if (name == "hash") return EncoderKind::Hash;
  if (name == "dense+fourier") return EncoderKind::DenseFourier;
  throw InvalidArgument("unknown encoder kind '" + name + "'");
}

int EncoderSpec::output_width() const {
  switch (kind) {
    case EncoderKind::Dense: return dense.features;
    case EncoderKind::Hash: return hash.levels * hash.features;
    case EncoderKind::DenseFourier: return dense.features + 6 * fourier.num_freqs;
  }
  return 0;
}

void validate(const EncoderSpec& spec) {
  if (spec.kind == EncoderKind::Dense || spec.kind == EncoderKind::DenseFourier) {
    if (spec.dense.gx < 2 || spec.dense.gy < 2 || spec.dense.gz < 2)
      throw InvalidArgument("dense grid resolution must be >= 2 on every axis");
    if (spec.dense.features < 1) throw InvalidArgument("dense grid needs >= 1 feature");
  }
  if (spec.kind == EncoderKind::DenseFourier && spec.fourier.num_freqs < 0)
    throw InvalidArgument("Fourier frequency count must be >= 0");
  if (spec.kind == EncoderKind::Hash) {
    const auto& h = spec.hash;
    if (h.levels < 1 || h.features < 1) throw InvalidArgument("hash grid needs levels and features >= 1");
    if (h.log2_table_size < 1 || h.log2_table_size > 30)
      throw InvalidArgument("hash table size exponent must lie in [1, 30]");
    if (h.min_resolution < 1 || h.max_resolution < h.min_resolution)
      throw InvalidArgument("hash grid needs 1 <= min_resolution <= max_resolution");
    hash_grid_resolutions(h);  // throws if levels collapse
  }
}

namespace {

struct Corners {
  std::array<std::size_t, 8> index;
  std::array<Scalar, 8> weight;
};

void check_coords(const Matrix& coords) {
  if (coords.cols() != 3) throw InvalidArgument("coordinates must have 3 columns");
  for (Eigen::Index r = 0; r < coords.rows(); ++r)
    if (!inside_domain(Vec3(coords(r, 0), coords(r, 1), coords(r, 2))))
      throw InvalidArgument("coordinate outside [-1,1]^3 at row " + std::to_string(r));
}

// Corner c uses bit 0 for +x, bit 1 for +y, bit 2 for +z.
template <typename IndexFn>
Corners corners_at(const Scalar* p, int cx, int cy, int cz, IndexFn&& index_of) {
  const auto [i, fx] = locate_cell(p[0], cx);
  const auto [j, fy] = locate_cell(p[1], cy);
  const auto [k, fz] = locate_cell(p[2], cz);
  Corners c;
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
    c.index[corner] = index_of(i + dx, j + dy, k + dz);
    c.weight[corner] = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
  }
  return c;
}

Corners dense_corners(const DenseGrid& g, const Scalar* p) {
  return corners_at(p, g.spec.gx - 1, g.spec.gy - 1, g.spec.gz - 1,
                    [&g](int i, int j, int k) { return g.vertex(i, j, k); });
}

Corners hash_corners(const HashGrid& g, int level, const Scalar* p) {
  const int n = g.resolutions[static_cast<std::size_t>(level)];
  return corners_at(p, n, n, n, [&g, level](int i, int j, int k) {
    return static_cast<std::size_t>(g.table_index(level, static_cast<std::uint32_t>(i),
                                                  static_cast<std::uint32_t>(j),
                                                  static_cast<std::uint32_t>(k)));
  });
}

}  // namespace

DenseGrid make_dense_grid(const DenseGridSpec& spec, Rng& rng) {
  DenseGrid g;
  g.spec = spec;
  const auto vertices = static_cast<std::size_t>(spec.gx) * spec.gy * spec.gz;
  g.params = ParamTensor("encoder.dense", {vertices, static_cast<std::size_t>(spec.features)});
  for (auto& v : g.params.values) v = uniform(rng, -1e-4, 1e-4);
  return g;
}

Matrix dense_grid_encode(const DenseGrid& grid, const Matrix& coords) {
  check_coords(coords);
  const int f = grid.spec.features;
  Matrix out = Matrix::Zero(coords.rows(), f);
  const Scalar* table = grid.params.values.data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    const Corners c = dense_corners(grid, coords.row(r).data());
    for (int corner = 0; corner < 8; ++corner) {
      const Scalar* feat = table + c.index[corner] * static_cast<std::size_t>(f);
      for (int ch = 0; ch < f; ++ch) out(r, ch) += c.weight[corner] * feat[ch];
    }
  }
  return out;
}

void dense_grid_backward(DenseGrid& grid, const Matrix& coords, const Matrix& dl_dfeatures) {
  const int f = grid.spec.features;
  if (dl_dfeatures.rows() != coords.rows() || dl_dfeatures.cols() != f)
    throw InvalidArgument("dense grid gradient shape mismatch");
  Scalar* grads = grid.params.grads.data();
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    const Corners c = dense_corners(grid, coords.row(r).data());
    for (int corner = 0; corner < 8; ++corner) {
      Scalar* g = grads + c.index[corner] * static_cast<std::size_t>(f);
      for (int ch = 0; ch < f; ++ch) g[ch] += c.weight[corner] * dl_dfeatures(r, ch);
    }
  }
}

std::vector<int> hash_grid_resolutions(const HashGridSpec& spec) {
  std::vector<int> res;
  const Scalar growth =
      spec.levels > 1 ? std::exp((std::log(Scalar(spec.max_resolution)) -
                                  std::log(Scalar(spec.min_resolution))) /
                                 Scalar(spec.levels - 1))
                      : Scalar(1);
  for (int l = 0; l < spec.levels; ++l) {
    const int n = static_cast<int>(std::floor(spec.min_resolution * std::pow(growth, l) + 1e-9));
    if (!res.empty() && n <= res.back())
      throw InvalidArgument("hash grid level resolutions must strictly increase; widen the range");
    res.push_back(n);
  }
  return res;
}

bool HashGrid::direct_indexed(int level) const {
  const auto n = static_cast<std::uint64_t>(resolutions[static_cast<std::size_t>(level)]) + 1;
  return n * n * n <= table_size();
}

std::uint32_t HashGrid::table_index(int level, std::uint32_t x, std::uint32_t y,
                                    std::uint32_t z) const {
  const std::uint32_t mask = static_cast<std::uint32_t>(table_size() - 1);
  if (direct_indexed(level)) {
    const auto n = static_cast<std::uint32_t>(resolutions[static_cast<std::size_t>(level)]) + 1;
    return x + n * (y + n * z);
  }
  return ((x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u)) & mask;
}

HashGrid make_hash_grid(const HashGridSpec& spec, Rng& rng) {
  HashGrid g;
  g.spec = spec;
  g.resolutions = hash_grid_resolutions(spec);
  g.params = ParamTensor("encoder.hash", {static_cast<std::size_t>(spec.levels), g.table_size(),
                                          static_cast<std::size_t>(spec.features)});
  for (auto& v : g.params.values) v = uniform(rng, -1e-4, 1e-4);
  return g;
}

Matrix hash_grid_encode(const HashGrid& grid, const Matrix& coords) {
  check_coords(coords);
  const int f = grid.spec.features;
  const int levels = grid.spec.levels;
  Matrix out = Matrix::Zero(coords.rows(), levels * f);
  const std::size_t level_stride = grid.table_size() * static_cast<std::size_t>(f);
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    for (int l = 0; l < levels; ++l) {
      const Corners c = hash_corners(grid, l, coords.row(r).data());
      const Scalar* table = grid.params.values.data() + static_cast<std::size_t>(l) * level_stride;
      for (int corner = 0; corner < 8; ++corner) {
        const Scalar* feat = table + c.index[corner] * static_cast<std::size_t>(f);
        for (int ch = 0; ch < f; ++ch) out(r, l * f + ch) += c.weight[corner] * feat[ch];
      }
    }
  }
  return out;
}

void hash_grid_backward(HashGrid& grid, const Matrix& coords, const Matrix& dl_dfeatures) {
  const int f = grid.spec.features;
  const int levels = grid.spec.levels;
  if (dl_dfeatures.rows() != coords.rows() || dl_dfeatures.cols() != levels * f)
    throw InvalidArgument("hash grid gradient shape mismatch");
  const std::size_t level_stride = grid.table_size() * static_cast<std::size_t>(f);
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    for (int l = 0; l < levels; ++l) {
      const Corners c = hash_corners(grid, l, coords.row(r).data());
      Scalar* table = grid.params.grads.data() + static_cast<std::size_t>(l) * level_stride;
      for (int corner = 0; corner < 8; ++corner) {
        Scalar* g = table + c.index[corner] * static_cast<std::size_t>(f);
        for (int ch = 0; ch < f; ++ch) g[ch] += c.weight[corner] * dl_dfeatures(r, l * f + ch);
      }
    }
  }
}

Matrix fourier_encode(const FourierSpec& spec, const Matrix& coords) {
  if (coords.cols() != 3) throw InvalidArgument("coordinates must have 3 columns");
  const int k_count = spec.num_freqs;
  Matrix out(coords.rows(), 6 * k_count);
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    for (int axis = 0; axis < 3; ++axis) {
      for (int k = 0; k < k_count; ++k) {
        const Scalar arg = std::ldexp(std::numbers::pi_v<Scalar>, k) * coords(r, axis);
        out(r, (axis * k_count + k) * 2) = std::sin(arg);
        out(r, (axis * k_count + k) * 2 + 1) = std::cos(arg);
      }
    }
  }
  return out;
}

ParamList Encoder::parameters() {
  ParamList out;
  if (dense) out.push_back(&dense->params);
  if (hash) out.push_back(&hash->params);
  return out;
}

std::size_t Encoder::parameter_count() const {
  return (dense ? dense->params.size() : 0) + (hash ? hash->params.size() : 0);
}

Encoder make_encoder(const EncoderSpec& spec, Rng& rng) {
  validate(spec);
  Encoder e;
  e.spec = spec;
  if (spec.kind == EncoderKind::Hash) {
    e.hash = make_hash_grid(spec.hash, rng);
  } else {
    e.dense = make_dense_grid(spec.dense, rng);
  }
  return e;
}

Matrix composite_encode(const Encoder& encoder, const Matrix& coords) {
  Matrix grid_features;
  if (encoder.hash) {
    grid_features = hash_grid_encode(*encoder.hash, coords);
  } else if (encoder.dense) {
    grid_features = dense_grid_encode(*encoder.dense, coords);
  } else {
    throw InvalidArgument("encoder has no grid");
  }
  Matrix out = grid_features;
  if (encoder.spec.kind == EncoderKind::DenseFourier && encoder.spec.fourier.num_freqs > 0) {
    const Matrix fourier = fourier_encode(encoder.spec.fourier, coords);
    out.resize(coords.rows(), grid_features.cols() + fourier.cols());
    out << grid_features, fourier;
  }
  if (out.cols() != encoder.spec.output_width())
    throw InvalidArgument("encoder produced width " + std::to_string(out.cols()) +
                          ", spec declares " + std::to_string(encoder.spec.output_width()));
  return out;
}

void composite_backward(Encoder& encoder, const Matrix& coords, const Matrix& dl_dfeatures) {
  if (dl_dfeatures.cols() != encoder.spec.output_width())
    throw InvalidArgument("encoder gradient width mismatch");
  if (encoder.hash) {
    const Eigen::Index w = encoder.spec.hash.levels * encoder.spec.hash.features;
    hash_grid_backward(*encoder.hash, coords, dl_dfeatures.leftCols(w));
  } else if (encoder.dense) {
    dense_grid_backward(*encoder.dense, coords, dl_dfeatures.leftCols(encoder.spec.dense.features));
  }
  // Fourier features have no parameters and coordinates are inputs, so nothing flows further.
}

}  // namespace usrn
