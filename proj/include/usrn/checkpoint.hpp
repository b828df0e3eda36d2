// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "usrn/models.hpp"

namespace usrn {

/// Layout: "USRN", u32 version, u32 header length, JSON header, then every
/// tensor as little-endian f64 in header order. All integers little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
  std::int64_t steps_completed = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // echo of the run configuration
};

struct TensorRecord {
  std::string name;
  std::vector<std::size_t> shape;
};

struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  ModelKind kind = ModelKind::Rmdsrn;
  EncoderSpec encoder;
  MlpSpec decoder;
  int members = 1;  // decoders or ensemble members; 1 for single-network kinds
  int mcd_passes = 5;
  Scalar variance_floor = kVarianceFloor;
  std::uint64_t inference_seed = 0;
  TrainingMetadata training;
  std::vector<TensorRecord> tensors;
  std::size_t parameter_count = 0;
};

void save_checkpoint(const UncertainModel& model, const TrainingMetadata& training,
                     const std::filesystem::path& path);

/// Throws FileNotFound, VersionError (before reading any tensor) or FormatError
/// for bad magic, a malformed header or a size that does not match the header.
UncertainModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Reads and validates only the header.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Human-readable multi-line summary.
std::string describe(const CheckpointInfo& info);

}  // namespace usrn
