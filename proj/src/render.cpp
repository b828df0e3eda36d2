// SPDX-License-Identifier: Apache-2.0
#include "usrn/render.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "usrn/errors.hpp"
#include "usrn/metrics.hpp"
#include "usrn/text_config.hpp"

namespace usrn {

void validate(const TransferFunction& tf) {
  if (tf.positions.size() < 2 || tf.positions.size() != tf.colors.size())
    throw InvalidArgument("transfer function needs at least 2 control points");
  if (tf.positions.front() != 0 || tf.positions.back() != 1)
    throw InvalidArgument("transfer function must start at 0 and end at 1");
  for (std::size_t i = 1; i < tf.positions.size(); ++i)
    if (!(tf.positions[i] > tf.positions[i - 1]))
      throw InvalidArgument("transfer function positions must be strictly increasing");
  for (const auto& c : tf.colors)
    for (Scalar v : c)
      if (!(v >= 0 && v <= 1)) throw InvalidArgument("transfer function colours must be in [0, 1]");
}

Rgba tf_lookup(const TransferFunction& tf, Scalar s) {
  if (std::isnan(s)) return {0, 0, 0, 0};
  s = std::clamp(s, Scalar(0), Scalar(1));
  const auto hi_it = std::upper_bound(tf.positions.begin(), tf.positions.end(), s);
  if (hi_it == tf.positions.end()) return tf.colors.back();
  const auto hi = static_cast<std::size_t>(hi_it - tf.positions.begin());
  const std::size_t lo = hi - 1;
  const Scalar w = (s - tf.positions[lo]) / (tf.positions[hi] - tf.positions[lo]);
  Rgba out;
  for (int c = 0; c < 4; ++c) out[c] = tf.colors[lo][c] * (1 - w) + tf.colors[hi][c] * w;
  return out;
}

namespace {

TransferFunction transfer_function_from_table(const TextTable& table) {
  const auto it = table.find("points");
  if (it == table.end()) throw FormatError("transfer function file needs a 'points' array");
  for (const auto& [key, value] : table)
    if (key != "points") throw FormatError("unknown transfer function key '" + key + "'");
  TransferFunction tf;
  for (const TextValue& row : it->second.as_array()) {
    const std::vector<double> v = row.as_number_list();
    if (v.size() != 5) throw FormatError("transfer function rows are [s, r, g, b, a]");
    tf.positions.push_back(v[0]);
    tf.colors.push_back({v[1], v[2], v[3], v[4]});
  }
  validate(tf);
  return tf;
}

}  // namespace

TransferFunction parse_transfer_function(const std::string& text) {
  return transfer_function_from_table(parse_text_config(text));
}

TransferFunction load_transfer_function(const std::filesystem::path& path) {
  return transfer_function_from_table(read_text_config(path));
}

TransferFunction default_transfer_function() {
  TransferFunction tf;
  tf.positions = {0.0, 0.2, 0.45, 0.7, 1.0};
  tf.colors = {Rgba{0.05, 0.1, 0.5, 0.0}, Rgba{0.1, 0.4, 0.9, 0.02}, Rgba{0.3, 0.85, 0.6, 0.08},
               Rgba{0.95, 0.75, 0.2, 0.25}, Rgba{0.8, 0.1, 0.05, 0.6}};
  return tf;
}

void validate(const Camera& cam) {
  if (cam.width < 1 || cam.height < 1) throw InvalidArgument("image size must be positive");
  if (!(cam.fov_degrees > 0 && cam.fov_degrees < 180)) throw InvalidArgument("fov must be in (0, 180)");
  const Vec3 view = cam.look_at - cam.eye;
  if (view.norm() < 1e-12) throw InvalidArgument("camera eye and look-at coincide");
  if (cam.up.norm() < 1e-12 || view.normalized().cross(cam.up.normalized()).norm() < 1e-9)
    throw InvalidArgument("camera up vector is parallel to the view direction");
}

Ray camera_ray(const Camera& cam, int x, int y) {
  const Vec3 forward = (cam.look_at - cam.eye).normalized();
  const Vec3 right = forward.cross(cam.up).normalized();
  const Vec3 up = right.cross(forward);
  const Scalar half = std::tan(cam.fov_degrees * std::numbers::pi_v<Scalar> / 360);
  const Scalar aspect = Scalar(cam.width) / Scalar(cam.height);
  const Scalar u = (2 * (x + Scalar(0.5)) / cam.width - 1) * half * aspect;
  const Scalar v = (1 - 2 * (y + Scalar(0.5)) / cam.height) * half;
  return Ray{cam.eye, (forward + u * right + v * up).normalized()};
}

bool intersect_unit_box(const Ray& ray, Scalar& t_near, Scalar& t_far) {
  Scalar lo = 0, hi = std::numeric_limits<Scalar>::infinity();
  for (int a = 0; a < 3; ++a) {
    const Scalar o = ray.origin[a], d = ray.direction[a];
    if (d == 0) {
      if (o < -1 || o > 1) return false;
      continue;
    }
    Scalar t0 = (-1 - o) / d, t1 = (1 - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  t_near = lo;
  t_far = hi;
  return hi > lo;
}

void validate(const RenderConfig& cfg) {
  if (!(cfg.step > 0) || !(cfg.step_ref > 0)) throw InvalidArgument("render step sizes must be > 0");
  if (!(cfg.opacity_threshold > 0 && cfg.opacity_threshold <= 1))
    throw InvalidArgument("opacity threshold must be in (0, 1]");
  if (!(cfg.variance_floor >= 0)) throw InvalidArgument("variance floor must be >= 0");
}

Scalar default_step(const Dims& dims) {
  Scalar sq = 0;
  for (int a = 0; a < 3; ++a) {
    const Scalar h = Scalar(2) / Scalar(std::max(dims[a] - 1, 1));
    sq += h * h;
  }
  return Scalar(0.5) * std::sqrt(sq);
}

RenderConfig default_render_config(const Dims& dims) {
  RenderConfig cfg;
  cfg.step = default_step(dims);
  cfg.step_ref = cfg.step;
  return cfg;
}

Rgba RenderedImage::pixel(int x, int y) const {
  const std::size_t o = 4 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x);
  return {rgba[o], rgba[o + 1], rgba[o + 2], rgba[o + 3]};
}

void RenderedImage::set_pixel(int x, int y, const Rgba& c) {
  const std::size_t o = 4 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x);
  for (int i = 0; i < 4; ++i) rgba[o + i] = c[i];
}

void VolumeSampler::sample(const Matrix& coords, std::uint64_t, std::span<Scalar> out) const {
  for (Eigen::Index r = 0; r < coords.rows(); ++r)
    out[static_cast<std::size_t>(r)] = sample_trilinear(volume_, coords.row(r).transpose());
}

Scalar sample_field_trilinear(const Dims& dims, std::span<const Scalar> values, const Vec3& p) {
  const auto [i, fx] = locate_cell(p[0], dims.nx - 1);
  const auto [j, fy] = locate_cell(p[1], dims.ny - 1);
  const auto [k, fz] = locate_cell(p[2], dims.nz - 1);
  const auto at = [&](int di, int dj, int dk) -> Scalar {
    return values[static_cast<std::size_t>(i + di) +
                  static_cast<std::size_t>(dims.nx) *
                      (static_cast<std::size_t>(j + dj) + static_cast<std::size_t>(dims.ny) * (k + dk))];
  };
  const Scalar c00 = at(0, 0, 0) * (1 - fx) + at(1, 0, 0) * fx;
  const Scalar c10 = at(0, 1, 0) * (1 - fx) + at(1, 1, 0) * fx;
  const Scalar c01 = at(0, 0, 1) * (1 - fx) + at(1, 0, 1) * fx;
  const Scalar c11 = at(0, 1, 1) * (1 - fx) + at(1, 1, 1) * fx;
  const Scalar c0 = c00 * (1 - fy) + c10 * fy;
  const Scalar c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

ScalarFieldSampler::ScalarFieldSampler(const Dims& dims, std::span<const Scalar> values,
                                       const std::vector<char>* keep)
    : dims_(dims), values_(values), keep_(keep) {
  if (values.size() != dims.count()) throw InvalidArgument("field does not match its dims");
  if (keep && keep->size() != dims.count()) throw InvalidArgument("keep-mask does not match the field");
}

void ScalarFieldSampler::sample(const Matrix& coords, std::uint64_t, std::span<Scalar> out) const {
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    const Vec3 p = coords.row(r).transpose();
    if (keep_) {
      std::size_t linear = 0, stride = 1;
      for (int a = 0; a < 3; ++a) {
        const Scalar pos = (p[a] + 1) * Scalar(0.5) * (dims_[a] - 1);
        const auto idx = static_cast<std::size_t>(std::clamp<long>(std::lround(pos), 0, dims_[a] - 1));
        linear += idx * stride;
        stride *= static_cast<std::size_t>(dims_[a]);
      }
      if (!(*keep_)[linear]) {
        out[static_cast<std::size_t>(r)] = std::numeric_limits<Scalar>::quiet_NaN();
        continue;
      }
    }
    out[static_cast<std::size_t>(r)] = sample_field_trilinear(dims_, values_, p);
  }
}

void ModelMeanSampler::sample(const Matrix& coords, std::uint64_t stream, std::span<Scalar> out) const {
  const PredictionStats s = predict_stats(model_, coords, stream);
  for (Eigen::Index r = 0; r < coords.rows(); ++r) out[static_cast<std::size_t>(r)] = s.mean[r];
}

ModelMemberSampler::ModelMemberSampler(const UncertainModel& model) : model_(model) {
  if (model.kind == ModelKind::Pv)
    throw InvalidArgument("statistical rendering needs member predictions; the predicted-variance model has none");
}

Matrix ModelMemberSampler::sample(const Matrix& coords, std::uint64_t stream) const {
  return predict_member_matrix(model_, coords, stream);
}

Scalar corrected_opacity(Scalar alpha, Scalar step, Scalar step_ref) {
  alpha = std::clamp(alpha, Scalar(0), Scalar(1));
  if (alpha >= 1) return 1;
  return 1 - std::pow(1 - alpha, step / step_ref);
}

std::vector<Scalar> statistical_weights(std::span<const Scalar> members, Scalar mean, Scalar variance) {
  if (members.empty()) throw InvalidArgument("no member predictions");
  if (!(variance > 0)) throw InvalidArgument("statistical weights need a positive variance");
  Scalar min_sq = std::numeric_limits<Scalar>::infinity();
  for (Scalar f : members) min_sq = std::min(min_sq, (f - mean) * (f - mean));
  std::vector<Scalar> w(members.size());
  Scalar total = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Scalar d = members[i] - mean;
    w[i] = std::exp(-(d * d - min_sq) / (2 * variance));
    total += w[i];
  }
  for (Scalar& x : w) x /= total;
  return w;
}

Rgba statistical_classify(const TransferFunction& tf, std::span<const Scalar> members, Scalar variance_floor) {
  const auto m = static_cast<Scalar>(members.size());
  if (members.size() < 2) throw InvalidArgument("statistical classification needs at least 2 members");
  Scalar mean = 0;
  for (Scalar f : members) mean += f;
  mean /= m;
  Scalar var = 0;
  for (Scalar f : members) var += (f - mean) * (f - mean);
  var /= (m - 1);
  if (var < variance_floor || !(var > 0)) return tf_lookup(tf, mean);
  const std::vector<Scalar> w = statistical_weights(members, mean, var);
  Rgba out{0, 0, 0, 0};
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Rgba c = tf_lookup(tf, members[i]);
    for (int ch = 0; ch < 4; ++ch) out[ch] += w[i] * c[ch];
  }
  return out;
}

namespace {

constexpr int kSegment = 64;

// Classifies a batch of sample positions along one ray.
using Classifier = std::function<void(const Matrix& coords, std::uint64_t stream, std::vector<Rgba>& out)>;

RenderedImage march(const Camera& cam, const RenderConfig& cfg, const Classifier& classify) {
  validate(cam);
  validate(cfg);
  RenderedImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.rgba.assign(4 * static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height), 0);

#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < cam.height; ++y) {
    Matrix coords(kSegment, 3);
    std::vector<Rgba> colors;
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = camera_ray(cam, x, y);
      Scalar color[3] = {0, 0, 0};
      Scalar acc = 0;
      Scalar t0 = 0, t1 = 0;
      if (intersect_unit_box(ray, t0, t1)) {
        const auto total = static_cast<std::int64_t>(std::ceil((t1 - t0) / cfg.step - Scalar(0.5)));
        const auto stream = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(cam.width) +
                            static_cast<std::uint64_t>(x);
        for (std::int64_t first = 0; first < total && acc < cfg.opacity_threshold; first += kSegment) {
          const auto n = static_cast<Eigen::Index>(std::min<std::int64_t>(kSegment, total - first));
          coords.resize(n, 3);
          for (Eigen::Index s = 0; s < n; ++s) {
            const Scalar t = t0 + (static_cast<Scalar>(first + s) + Scalar(0.5)) * cfg.step;
            const Vec3 p = (ray.origin + t * ray.direction).cwiseMax(-1).cwiseMin(1);
            coords.row(s) = p.transpose();
          }
          colors.assign(static_cast<std::size_t>(n), Rgba{0, 0, 0, 0});
          classify(coords, stream * 1000003u + static_cast<std::uint64_t>(first), colors);
          for (Eigen::Index s = 0; s < n && acc < cfg.opacity_threshold; ++s) {
            const Rgba& c = colors[static_cast<std::size_t>(s)];
            const Scalar a = corrected_opacity(c[3], cfg.step, cfg.step_ref);
            const Scalar w = (1 - acc) * a;
            for (int ch = 0; ch < 3; ++ch) color[ch] += w * c[ch];
            acc += w;
          }
        }
      }
      const Rgba& bg = cfg.background;
      img.set_pixel(x, y,
                    {color[0] + (1 - acc) * bg[0], color[1] + (1 - acc) * bg[1], color[2] + (1 - acc) * bg[2],
                     acc + (1 - acc) * bg[3]});
    }
  }
  return img;
}

}  // namespace

RenderedImage raymarch_mean(const FieldSampler& field, const Camera& cam, const TransferFunction& tf,
                            const RenderConfig& cfg) {
  validate(tf);
  return march(cam, cfg, [&](const Matrix& coords, std::uint64_t stream, std::vector<Rgba>& out) {
    std::vector<Scalar> values(static_cast<std::size_t>(coords.rows()));
    field.sample(coords, stream, values);
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = tf_lookup(tf, values[i]);
  });
}

RenderedImage raymarch_statistical(const MemberSampler& members, const Camera& cam, const TransferFunction& tf,
                                   const RenderConfig& cfg) {
  validate(tf);
  return march(cam, cfg, [&](const Matrix& coords, std::uint64_t stream, std::vector<Rgba>& out) {
    const Matrix preds = members.sample(coords, stream);
    std::vector<Scalar> column(static_cast<std::size_t>(preds.rows()));
    for (Eigen::Index s = 0; s < preds.cols(); ++s) {
      for (Eigen::Index i = 0; i < preds.rows(); ++i) column[static_cast<std::size_t>(i)] = preds(i, s);
      out[static_cast<std::size_t>(s)] = statistical_classify(tf, column, cfg.variance_floor);
    }
  });
}

RenderedImage render_scalar_overlay(const Dims& dims, std::span<const Scalar> field, Scalar top_fraction,
                                    const Camera& cam, const TransferFunction& tf, const RenderConfig& cfg) {
  if (!(top_fraction > 0 && top_fraction <= 1)) throw InvalidArgument("top fraction must be in (0, 1]");
  const std::vector<char> keep = top_fraction_mask(field, top_fraction);
  const ScalarFieldSampler sampler(dims, field, top_fraction == 1 ? nullptr : &keep);
  return raymarch_mean(sampler, cam, tf, cfg);
}

}  // namespace usrn
