// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "usrn/common.hpp"

namespace usrn {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Scalar field sampled on a regular vertex lattice spanning [-1,1]^3.
///
/// Values are stored x-fastest. Vertex i along an axis with n vertices sits at
/// -1 + 2i/(n-1).
struct VolumeGrid {
  Dims dims;
  std::vector<float> values;
  std::pair<double, double> raw_range{0.0, 0.0};
  bool normalized = false;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.ny) * k);
  }
  std::array<int, 3> unravel(std::size_t linear) const;
  Vec3 vertex_position(std::size_t linear) const;
};

/// Validates dims/length and computes raw_range. Throws InvalidArgument / NumericError.
VolumeGrid make_volume(Dims dims, std::vector<float> values);

/// Already-normalized constant field (value in [0,1]); the trivially learnable fixture.
VolumeGrid make_constant_volume(Dims dims, float value);

/// Normalized coordinate of vertex `i` on an axis with `n` vertices.
inline Scalar vertex_coordinate(int i, int n) {
  return Scalar(-1) + Scalar(2) * Scalar(i) / Scalar(n - 1);
}

/// Locates a normalized coordinate on an axis of `cells` cells. Returns the lower
/// vertex index and the fractional offset in [0, 1]. Positions within 1e-9 of a
/// vertex snap onto it so vertex hits reproduce stored values exactly.
std::pair<int, Scalar> locate_cell(Scalar coord, int cells);

bool inside_domain(const Vec3& p);

/// Sidecar metadata of a raw volume (`dims = [nx, ny, nz]`, `dtype = "f32le"`).
struct RawMetadata {
  Dims dims;
  std::string dtype = "f32le";
  std::string name;
};

RawMetadata read_raw_metadata(const std::filesystem::path& path);
void write_raw_metadata(const std::filesystem::path& path, const RawMetadata& meta);

/// Sidecar path convention: `<stem>.meta` next to `<stem>.raw`.
std::filesystem::path metadata_path_for(const std::filesystem::path& raw_path);

VolumeGrid load_raw_volume(const std::filesystem::path& path, const RawMetadata& meta);
void save_raw_volume(const std::filesystem::path& path, const VolumeGrid& volume);

/// Min-max scales values to [0,1]; raw_range is kept for inversion.
VolumeGrid normalize_volume(const VolumeGrid& volume);

/// Trilinear blend of the 8 vertices enclosing p. Throws InvalidArgument outside [-1,1]^3.
Scalar sample_trilinear(const VolumeGrid& volume, const Vec3& p);

struct TrainingBatch {
  Matrix coords;  // B x 3
  Vector targets;  // B
  std::vector<std::size_t> indices;  // linear voxel index of each row
  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
};

/// B vertices drawn uniformly with replacement from a normalized volume.
TrainingBatch sample_training_batch(const VolumeGrid& volume, std::size_t batch_size, Rng& rng);

/// Coordinates of every vertex in linear order, rows [begin, end).
Matrix vertex_coordinates(const Dims& dims, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Synthetic fields

enum class SyntheticKind { GaussianMixture, Shell, LinearRamp, Constant };

struct GaussianBlob {
  Vec3 center = Vec3::Zero();
  Scalar width = 0.25;
  Scalar amplitude = 1.0;
};

struct SyntheticTerm {
  SyntheticKind kind = SyntheticKind::GaussianMixture;
  std::vector<GaussianBlob> blobs;  // gaussian-mixture
  Vec3 center = Vec3::Zero();       // shell
  Scalar radius = 0.5;
  Scalar thickness = 0.05;
  Scalar amplitude = 1.0;           // shell
  int axis = 0;                     // linear-ramp
  Scalar value = 0.0;               // constant
};

/// An analytic field on the vertex lattice. Terms are summed before normalization;
/// a single term gives the plain kind.
struct SyntheticSpec {
  Dims dims{32, 32, 32};
  std::vector<SyntheticTerm> terms;
};

std::string to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string& name);

void validate(const SyntheticSpec& spec);

/// Evaluates the un-normalized analytic field at p.
Scalar evaluate_synthetic(const SyntheticSpec& spec, const Vec3& p);

/// Evaluates the field at every vertex, then normalizes. A constant field throws
/// InvalidArgument from the normalization step.
VolumeGrid make_synthetic_volume(const SyntheticSpec& spec);

/// Seeded gaussian-mixture + shell field used by the demos and the acceptance suite.
SyntheticSpec demo_synthetic_spec(Dims dims, std::uint64_t seed, int blobs = 4);

}  // namespace usrn
