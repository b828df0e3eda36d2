// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace usrn {

// All training and inference math runs in one width. Volume files stay float32.
using Scalar = double;

// Batches are row-major: one row per coordinate / sample.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

using Rng = std::mt19937_64;

enum class Mode { Train, Infer };

/// Uniform double in [0, 1) built from the top 53 bits, identical on every platform.
inline Scalar uniform01(Rng& rng) {
  return static_cast<Scalar>(rng() >> 11) * 0x1.0p-53;
}

inline Scalar uniform(Rng& rng, Scalar lo, Scalar hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

}  // namespace usrn
