// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "usrn/errors.hpp"
#include "usrn/volume.hpp"

namespace usrn {

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::GaussianMixture: return "gaussian-mixture";
    case SyntheticKind::Shell: return "shell";
    case SyntheticKind::LinearRamp: return "linear-ramp";
    case SyntheticKind::Constant: return "constant";
  }
  return "?";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "gaussian-mixture") return SyntheticKind::GaussianMixture;
  if (name == "shell") return SyntheticKind::Shell;
  if (name == "linear-ramp") return SyntheticKind::LinearRamp;
  if (name == "constant") return SyntheticKind::Constant;
  throw InvalidArgument("unknown synthetic kind '" + name + "'");
}

void validate(const SyntheticSpec& spec) {
  if (spec.dims.nx < 2 || spec.dims.ny < 2 || spec.dims.nz < 2)
    throw InvalidArgument("synthetic dims must be >= 2 on every axis");
  if (spec.terms.empty()) throw InvalidArgument("synthetic spec has no terms");
  for (const auto& term : spec.terms) {
    switch (term.kind) {
      case SyntheticKind::GaussianMixture:
        if (term.blobs.empty()) throw InvalidArgument("gaussian-mixture needs at least one center");
        for (const auto& b : term.blobs)
          if (!(b.width > 0)) throw InvalidArgument("gaussian widths must be > 0");
        break;
      case SyntheticKind::Shell:
        if (!(term.thickness > 0)) throw InvalidArgument("shell thickness must be > 0");
        if (term.radius < 0) throw InvalidArgument("shell radius must be >= 0");
        break;
      case SyntheticKind::LinearRamp:
        if (term.axis < 0 || term.axis > 2) throw InvalidArgument("ramp axis must be 0, 1 or 2");
        break;
      case SyntheticKind::Constant:
        break;
    }
  }
}

Scalar evaluate_synthetic(const SyntheticSpec& spec, const Vec3& p) {
  Scalar total = 0;
  for (const auto& term : spec.terms) {
    switch (term.kind) {
      case SyntheticKind::GaussianMixture:
        for (const auto& b : term.blobs)
          total += b.amplitude * std::exp(-(p - b.center).squaredNorm() / (2 * b.width * b.width));
        break;
      case SyntheticKind::Shell: {
        const Scalar d = (p - term.center).norm() - term.radius;
        total += term.amplitude * std::exp(-d * d / (2 * term.thickness * term.thickness));
        break;
      }
      case SyntheticKind::LinearRamp:
        total += p[term.axis];
        break;
      case SyntheticKind::Constant:
        total += term.value;
        break;
    }
  }
  return total;
}

VolumeGrid make_synthetic_volume(const SyntheticSpec& spec) {
  validate(spec);
  std::vector<float> values(spec.dims.count());
  VolumeGrid shape;
  shape.dims = spec.dims;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(values.size()); ++i)
    values[static_cast<std::size_t>(i)] = static_cast<float>(
        evaluate_synthetic(spec, shape.vertex_position(static_cast<std::size_t>(i))));
  return normalize_volume(make_volume(spec.dims, std::move(values)));
}

SyntheticSpec demo_synthetic_spec(Dims dims, std::uint64_t seed, int blobs) {
  Rng rng(seed);
  SyntheticSpec spec;
  spec.dims = dims;
  SyntheticTerm mixture;
  mixture.kind = SyntheticKind::GaussianMixture;
  for (int k = 0; k < blobs; ++k) {
    GaussianBlob b;
    b.center = Vec3(uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6));
    b.width = uniform(rng, 0.06, 0.3);
    b.amplitude = uniform(rng, 0.4, 1.0);
    mixture.blobs.push_back(b);
  }
  spec.terms.push_back(mixture);

  SyntheticTerm shell;
  shell.kind = SyntheticKind::Shell;
  shell.center = Vec3(uniform(rng, -0.15, 0.15), uniform(rng, -0.15, 0.15), uniform(rng, -0.15, 0.15));
  shell.radius = uniform(rng, 0.55, 0.7);
  shell.thickness = uniform(rng, 0.03, 0.06);
  shell.amplitude = uniform(rng, 0.5, 0.8);
  spec.terms.push_back(shell);
  return spec;
}

}  // namespace usrn
