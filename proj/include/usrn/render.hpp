// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "usrn/common.hpp"
#include "usrn/models.hpp"
#include "usrn/volume.hpp"

namespace usrn {

using Rgba = std::array<Scalar, 4>;

/// Piecewise-linear colour and opacity map over [0, 1].
struct TransferFunction {
  std::vector<Scalar> positions;  // strictly increasing, first 0, last 1
  std::vector<Rgba> colors;
};

void validate(const TransferFunction& tf);

/// Clamps s to [0, 1] and interpolates per channel. NaN maps to fully transparent black.
Rgba tf_lookup(const TransferFunction& tf, Scalar s);

/// Reads `points = [[s, r, g, b, a], ...]` from a structured text file.
TransferFunction load_transfer_function(const std::filesystem::path& path);
TransferFunction parse_transfer_function(const std::string& text);

/// Blue-to-red ramp whose opacity rises with the value.
TransferFunction default_transfer_function();

struct Camera {
  Vec3 eye{2.6, 1.8, 2.2};
  Vec3 look_at = Vec3::Zero();
  Vec3 up{0, 0, 1};
  Scalar fov_degrees = 40;
  int width = 512;
  int height = 512;
};

void validate(const Camera& cam);

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// Pinhole ray through the centre of pixel (x, y); row 0 is the top of the image.
Ray camera_ray(const Camera& cam, int x, int y);

/// Entry and exit distances of the ray through [-1, 1]^3, clipped to t >= 0.
/// Returns false if the ray misses.
bool intersect_unit_box(const Ray& ray, Scalar& t_near, Scalar& t_far);

struct RenderConfig {
  Scalar step = 0.02;      // world units between samples
  Scalar step_ref = 0.02;  // step the transfer-function opacities are defined for
  Scalar opacity_threshold = 0.99;
  Rgba background{1, 1, 1, 1};
  Scalar variance_floor = 1e-6;
};

void validate(const RenderConfig& cfg);

/// Half the diagonal of one grid cell.
Scalar default_step(const Dims& dims);
/// Step and reference step both set to default_step(dims).
RenderConfig default_render_config(const Dims& dims);

struct RenderedImage {
  int width = 0;
  int height = 0;
  std::vector<Scalar> rgba;  // row-major, 4 floats per pixel, row 0 at the top

  Rgba pixel(int x, int y) const;
  void set_pixel(int x, int y, const Rgba& c);
};

/// Scalar field at world positions (one per row of `coords`). Must be callable concurrently.
class FieldSampler {
 public:
  virtual ~FieldSampler() = default;
  virtual void sample(const Matrix& coords, std::uint64_t stream, std::span<Scalar> out) const = 0;
};

/// Per-member predictions at world positions, M x n. Must be callable concurrently.
class MemberSampler {
 public:
  virtual ~MemberSampler() = default;
  virtual Matrix sample(const Matrix& coords, std::uint64_t stream) const = 0;
};

/// Trilinear interpolation of a grid's values.
class VolumeSampler final : public FieldSampler {
 public:
  explicit VolumeSampler(const VolumeGrid& volume) : volume_(volume) {}
  void sample(const Matrix& coords, std::uint64_t stream, std::span<Scalar> out) const override;

 private:
  const VolumeGrid& volume_;
};

/// Trilinear interpolation of a double-valued field on the vertex grid. With a
/// keep-mask, samples whose nearest vertex is not kept come back as NaN.
class ScalarFieldSampler final : public FieldSampler {
 public:
  ScalarFieldSampler(const Dims& dims, std::span<const Scalar> values, const std::vector<char>* keep = nullptr);
  void sample(const Matrix& coords, std::uint64_t stream, std::span<Scalar> out) const override;

 private:
  Dims dims_;
  std::span<const Scalar> values_;
  const std::vector<char>* keep_;
};

/// Mean prediction of a trained model.
class ModelMeanSampler final : public FieldSampler {
 public:
  explicit ModelMeanSampler(const UncertainModel& model) : model_(model) {}
  void sample(const Matrix& coords, std::uint64_t stream, std::span<Scalar> out) const override;

 private:
  const UncertainModel& model_;
};

/// Member predictions of a trained ensemble-style model.
class ModelMemberSampler final : public MemberSampler {
 public:
  explicit ModelMemberSampler(const UncertainModel& model);
  Matrix sample(const Matrix& coords, std::uint64_t stream) const override;

 private:
  const UncertainModel& model_;
};

Scalar sample_field_trilinear(const Dims& dims, std::span<const Scalar> values, const Vec3& p);

/// Opacity for a step of `step` given an opacity defined per `step_ref`.
Scalar corrected_opacity(Scalar alpha, Scalar step, Scalar step_ref);

/// Normalized Gaussian weights pdf(f_i; mean, var) / sum_j pdf(f_j; mean, var),
/// evaluated on exponent differences so the normalizing constant cancels.
std::vector<Scalar> statistical_weights(std::span<const Scalar> members, Scalar mean, Scalar variance);

/// Expected colour and opacity over the member predictions; TF(mean) when the
/// sample variance is below `variance_floor`.
Rgba statistical_classify(const TransferFunction& tf, std::span<const Scalar> members, Scalar variance_floor);

RenderedImage raymarch_mean(const FieldSampler& field, const Camera& cam, const TransferFunction& tf,
                            const RenderConfig& cfg);

RenderedImage raymarch_statistical(const MemberSampler& members, const Camera& cam, const TransferFunction& tf,
                                   const RenderConfig& cfg);

/// Voxels outside the top-p set of `field` become transparent; the rest are
/// rendered like raymarch_mean over the field.
RenderedImage render_scalar_overlay(const Dims& dims, std::span<const Scalar> field, Scalar top_fraction,
                                    const Camera& cam, const TransferFunction& tf, const RenderConfig& cfg);

/// 8-bit RGBA PNG; channels are clamped to [0, 1] and rounded.
void write_png(const RenderedImage& image, const std::filesystem::path& path);

}  // namespace usrn
