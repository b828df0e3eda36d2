// SPDX-License-Identifier: Apache-2.0
#include "usrn/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "usrn/errors.hpp"
#include "usrn/text_config.hpp"

namespace usrn {

static_assert(std::endian::native == std::endian::little,
              "raw volume and checkpoint I/O assume a little-endian host");

std::array<int, 3> VolumeGrid::unravel(std::size_t linear) const {
  const auto nx = static_cast<std::size_t>(dims.nx);
  const auto ny = static_cast<std::size_t>(dims.ny);
  return {static_cast<int>(linear % nx), static_cast<int>((linear / nx) % ny),
          static_cast<int>(linear / (nx * ny))};
}

Vec3 VolumeGrid::vertex_position(std::size_t linear) const {
  const auto ijk = unravel(linear);
  return {vertex_coordinate(ijk[0], dims.nx), vertex_coordinate(ijk[1], dims.ny),
          vertex_coordinate(ijk[2], dims.nz)};
}

namespace {

void check_dims(const Dims& dims) {
  if (dims.nx < 2 || dims.ny < 2 || dims.nz < 2)
    throw InvalidArgument("volume dims must be >= 2 on every axis, got (" +
                          std::to_string(dims.nx) + ", " + std::to_string(dims.ny) + ", " +
                          std::to_string(dims.nz) + ")");
}

}  // namespace

VolumeGrid make_volume(Dims dims, std::vector<float> values) {
  check_dims(dims);
  if (values.size() != dims.count())
    throw InvalidArgument("volume has " + std::to_string(values.size()) + " values, dims need " +
                          std::to_string(dims.count()));
  VolumeGrid v;
  v.dims = dims;
  double lo = values.front(), hi = values.front();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float x = values[i];
    if (!std::isfinite(x))
      throw NumericError("non-finite value at voxel " + std::to_string(i));
    lo = std::min<double>(lo, x);
    hi = std::max<double>(hi, x);
  }
  v.values = std::move(values);
  v.raw_range = {lo, hi};
  return v;
}

VolumeGrid make_constant_volume(Dims dims, float value) {
  if (!(value >= 0.0f && value <= 1.0f))
    throw InvalidArgument("constant volume value must lie in [0, 1]");
  VolumeGrid v = make_volume(dims, std::vector<float>(dims.count(), value));
  v.normalized = true;
  return v;
}

std::pair<int, Scalar> locate_cell(Scalar coord, int cells) {
  Scalar pos = (coord + Scalar(1)) * Scalar(0.5) * Scalar(cells);
  const Scalar nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) pos = nearest;
  int i0 = static_cast<int>(std::floor(pos));
  i0 = std::clamp(i0, 0, cells - 1);
  return {i0, pos - Scalar(i0)};
}

bool inside_domain(const Vec3& p) {
  constexpr Scalar tol = 1e-9;
  for (int a = 0; a < 3; ++a)
    if (!(p[a] >= -1 - tol && p[a] <= 1 + tol)) return false;
  return true;
}

std::filesystem::path metadata_path_for(const std::filesystem::path& raw_path) {
  auto p = raw_path;
  p.replace_extension(".meta");
  return p;
}

RawMetadata read_raw_metadata(const std::filesystem::path& path) {
  const TextTable table = read_text_config(path);
  RawMetadata meta;
  const auto dims = table.find("dims");
  if (dims == table.end()) throw FormatError(path.string() + ": missing 'dims'");
  const auto d = dims->second.as_integer_list();
  if (d.size() != 3) throw FormatError(path.string() + ": 'dims' needs three entries");
  meta.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
  if (const auto it = table.find("dtype"); it != table.end()) meta.dtype = it->second.as_string();
  if (const auto it = table.find("name"); it != table.end()) meta.name = it->second.as_string();
  for (const auto& [key, value] : table)
    if (key != "dims" && key != "dtype" && key != "name")
      throw FormatError(path.string() + ": unknown key '" + key + "'");
  return meta;
}

void write_raw_metadata(const std::filesystem::path& path, const RawMetadata& meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "dims = [" << meta.dims.nx << ", " << meta.dims.ny << ", " << meta.dims.nz << "]\n";
  out << "dtype = \"" << meta.dtype << "\"\n";
  if (!meta.name.empty()) out << "name = " << format_text_value(TextValue(meta.name)) << "\n";
}

VolumeGrid load_raw_volume(const std::filesystem::path& path, const RawMetadata& meta) {
  if (meta.dtype != "f32le")
    throw FormatError("unsupported raw dtype '" + meta.dtype + "' (only f32le is accepted)");
  check_dims(meta.dims);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  const std::size_t expected = meta.dims.count() * sizeof(float);
  if (bytes != expected)
    throw FormatError(path.string() + ": file holds " + std::to_string(bytes) +
                      " bytes, dims require " + std::to_string(expected));
  std::vector<float> values(meta.dims.count());
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected)))
    throw IoError("short read from " + path.string());
  return make_volume(meta.dims, std::move(values));
}

void save_raw_volume(const std::filesystem::path& path, const VolumeGrid& volume) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(volume.values.data()),
            static_cast<std::streamsize>(volume.values.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

VolumeGrid normalize_volume(const VolumeGrid& volume) {
  const auto [lo, hi] = volume.raw_range;
  if (!(hi > lo)) throw InvalidArgument("cannot normalize a constant volume");
  VolumeGrid out;
  out.dims = volume.dims;
  out.raw_range = volume.raw_range;
  out.normalized = true;
  out.values.resize(volume.values.size());
  const double scale = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < volume.values.size(); ++i) {
    const double x = (static_cast<double>(volume.values[i]) - lo) * scale;
    out.values[i] = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
  return out;
}

Scalar sample_trilinear(const VolumeGrid& volume, const Vec3& p) {
  if (!inside_domain(p)) throw InvalidArgument("sample point outside [-1,1]^3");
  const auto [i, fx] = locate_cell(p[0], volume.dims.nx - 1);
  const auto [j, fy] = locate_cell(p[1], volume.dims.ny - 1);
  const auto [k, fz] = locate_cell(p[2], volume.dims.nz - 1);
  const auto at = [&](int di, int dj, int dk) -> Scalar {
    return volume.values[volume.index(i + di, j + dj, k + dk)];
  };
  const Scalar c00 = at(0, 0, 0) * (1 - fx) + at(1, 0, 0) * fx;
  const Scalar c10 = at(0, 1, 0) * (1 - fx) + at(1, 1, 0) * fx;
  const Scalar c01 = at(0, 0, 1) * (1 - fx) + at(1, 0, 1) * fx;
  const Scalar c11 = at(0, 1, 1) * (1 - fx) + at(1, 1, 1) * fx;
  const Scalar c0 = c00 * (1 - fy) + c10 * fy;
  const Scalar c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

TrainingBatch sample_training_batch(const VolumeGrid& volume, std::size_t batch_size, Rng& rng) {
  if (!volume.normalized) throw InvalidArgument("training batches require a normalized volume");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  TrainingBatch batch;
  batch.coords.resize(static_cast<Eigen::Index>(batch_size), 3);
  batch.targets.resize(static_cast<Eigen::Index>(batch_size));
  batch.indices.resize(batch_size);
  const std::size_t n = volume.values.size();
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t idx = uniform_index(rng, n);
    batch.indices[b] = idx;
    const Vec3 p = volume.vertex_position(idx);
    const auto row = static_cast<Eigen::Index>(b);
    batch.coords(row, 0) = p[0];
    batch.coords(row, 1) = p[1];
    batch.coords(row, 2) = p[2];
    batch.targets[row] = volume.values[idx];
  }
  return batch;
}

Matrix vertex_coordinates(const Dims& dims, std::size_t begin, std::size_t end) {
  Matrix coords(static_cast<Eigen::Index>(end - begin), 3);
  const auto nx = static_cast<std::size_t>(dims.nx);
  const auto ny = static_cast<std::size_t>(dims.ny);
  for (std::size_t i = begin; i < end; ++i) {
    const auto row = static_cast<Eigen::Index>(i - begin);
    coords(row, 0) = vertex_coordinate(static_cast<int>(i % nx), dims.nx);
    coords(row, 1) = vertex_coordinate(static_cast<int>((i / nx) % ny), dims.ny);
    coords(row, 2) = vertex_coordinate(static_cast<int>(i / (nx * ny)), dims.nz);
  }
  return coords;
}

}  // namespace usrn
