// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "usrn/metrics.hpp"
#include "usrn/render.hpp"
#include "usrn/text_config.hpp"
#include "usrn/training.hpp"
#include "usrn/volume.hpp"

namespace usrn {

/// Where the training volume comes from: a raw file if `raw_path` is set,
/// otherwise the synthetic field.
struct VolumeSource {
  std::string raw_path;
  std::string synthetic_name = "demo";  // demo, gaussian-mixture, shell, linear-ramp, constant
  std::uint64_t demo_seed = 0;
  int demo_blobs = 4;
  SyntheticSpec synthetic{{64, 64, 64}, {}};
};

struct RenderSettings {
  Camera camera;
  Scalar step = 0;      // 0: half a voxel diagonal
  Scalar step_ref = 0;  // 0: same as step
  Scalar opacity_threshold = 0.99;
  Rgba background{1, 1, 1, 1};
  Scalar variance_floor = 1e-6;
  std::string transfer_function;  // empty: built-in ramp
  Scalar top_fraction = 0.05;     // overlay renders
};

struct MetricSettings {
  std::vector<Scalar> jist_fractions{0.01, 0.05};
  int jist_radius = 1;
  Scalar nll_floor = 1e-6;
  std::size_t chunk = 16384;
};

struct SweepSettings {
  std::vector<Scalar> lambda_max;
  std::vector<int> members;
};

struct RunConfig {
  VolumeSource volume;
  TrainConfig train;
  RenderSettings render;
  MetricSettings metrics;
  SweepSettings sweep;
};

/// Builds a config from a parsed table. Unknown keys, wrong value types and
/// out-of-range values raise ConfigError.
RunConfig run_config_from_table(const TextTable& table);

/// Applies `key=value` (value in config syntax; bare words are taken as strings).
void apply_override(TextTable& table, const std::string& assignment);

/// Reads `path` (may be empty for all defaults) and applies overrides in order.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Every documented key with its default value, in file syntax.
std::string default_config_text();

/// Normalized training volume for the configured source.
VolumeGrid load_volume(const VolumeSource& source);
/// The synthetic field the source describes (demo fields are expanded from their seed).
SyntheticSpec resolve_synthetic(const VolumeSource& source);

/// Resolved training and volume settings, recorded in checkpoints.
std::map<std::string, std::string> config_echo(const RunConfig& cfg);

RenderConfig render_config_for(const RenderSettings& settings, const Dims& dims);
TransferFunction transfer_function_for(const RenderSettings& settings);
EvaluationSettings evaluation_settings_for(const MetricSettings& settings);

}  // namespace usrn
