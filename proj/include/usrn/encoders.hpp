// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "usrn/common.hpp"
#include "usrn/nn.hpp"

namespace usrn {

enum class EncoderKind { Dense, Hash, DenseFourier };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& name);

struct DenseGridSpec {
  int gx = 16;
  int gy = 16;
  int gz = 16;
  int features = 4;
};

struct HashGridSpec {
  int levels = 4;
  int min_resolution = 4;
  int max_resolution = 32;
  int log2_table_size = 14;
  int features = 2;
};

struct FourierSpec {
  int num_freqs = 0;
};

struct EncoderSpec {
  EncoderKind kind = EncoderKind::Dense;
  DenseGridSpec dense;
  HashGridSpec hash;
  FourierSpec fourier;

  int output_width() const;
};

void validate(const EncoderSpec& spec);

/// Learnable feature vectors on a (gx, gy, gz) vertex lattice over [-1,1]^3.
struct DenseGrid {
  DenseGridSpec spec;
  ParamTensor params;  // (gx*gy*gz) x F, x-fastest

  std::size_t vertex(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(spec.gx) * (static_cast<std::size_t>(j) +
                                                static_cast<std::size_t>(spec.gy) * k);
  }
};

DenseGrid make_dense_grid(const DenseGridSpec& spec, Rng& rng);
Matrix dense_grid_encode(const DenseGrid& grid, const Matrix& coords);
/// Scatters dL/dfeatures to the 8 corners with the trilinear weights (accumulating).
void dense_grid_backward(DenseGrid& grid, const Matrix& coords, const Matrix& dl_dfeatures);

/// Multiresolution hash grid. Level l has resolution N_l cells per axis; a level
/// with (N_l+1)^3 <= 2^T vertices indexes its table directly, otherwise through
/// (x * 1) ^ (y * 2654435761) ^ (z * 805459861) mod 2^T in uint32 arithmetic.
struct HashGrid {
  HashGridSpec spec;
  std::vector<int> resolutions;
  ParamTensor params;  // L x 2^T x F

  std::size_t table_size() const { return std::size_t{1} << spec.log2_table_size; }
  bool direct_indexed(int level) const;
  /// Row of the level table holding vertex (x, y, z) of that level.
  std::uint32_t table_index(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const;
};

std::vector<int> hash_grid_resolutions(const HashGridSpec& spec);
HashGrid make_hash_grid(const HashGridSpec& spec, Rng& rng);
Matrix hash_grid_encode(const HashGrid& grid, const Matrix& coords);
void hash_grid_backward(HashGrid& grid, const Matrix& coords, const Matrix& dl_dfeatures);

/// sin(2^k pi x), cos(2^k pi x) for k < K per axis; layout [axis][k][sin, cos].
Matrix fourier_encode(const FourierSpec& spec, const Matrix& coords);

/// Composite coordinate encoder: grid features first, Fourier features second.
struct Encoder {
  EncoderSpec spec;
  std::optional<DenseGrid> dense;
  std::optional<HashGrid> hash;

  ParamList parameters();
  std::size_t parameter_count() const;
};

Encoder make_encoder(const EncoderSpec& spec, Rng& rng);
Matrix composite_encode(const Encoder& encoder, const Matrix& coords);
void composite_backward(Encoder& encoder, const Matrix& coords, const Matrix& dl_dfeatures);

}  // namespace usrn
