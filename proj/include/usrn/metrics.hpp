// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "usrn/common.hpp"
#include "usrn/volume.hpp"

namespace usrn {

/// 10 log10(peak^2 / MSE). Identical fields return +infinity.
Scalar psnr(std::span<const Scalar> pred, std::span<const Scalar> truth, Scalar peak = 1);

/// Sample Pearson correlation of two flattened fields. Throws if either is constant.
Scalar pearson_correlation(std::span<const Scalar> a, std::span<const Scalar> b);

/// ceil(p * n) with a 1e-9 guard against representation error (0.01 * 100 is 1, not 2).
std::size_t top_count(std::size_t n, Scalar fraction);

/// Indices of the top ceil(p * N) values; ties break by value descending, then index ascending.
std::vector<std::size_t> top_fraction_indices(std::span<const Scalar> values, Scalar fraction);

/// Membership mask of top_fraction_indices.
std::vector<char> top_fraction_mask(std::span<const Scalar> values, Scalar fraction);

/// Expands a voxel set by every voxel within Chebyshev distance `radius` (26-connectivity).
std::vector<char> dilate_mask(const std::vector<char>& mask, const Dims& dims, int radius);

/// |A intersect dilate(B, radius)| / |A union B| where A is the top-p variance set
/// and B the top-p error set. The union uses the undilated sets.
Scalar jaccard_spatial_tolerance(std::span<const Scalar> variance, std::span<const Scalar> error,
                                 const Dims& dims, Scalar fraction, int radius = 1);

/// Mean over voxels of 0.5 ln(2 pi v) + (y - mu)^2 / (2 v), v = max(variance, floor).
Scalar gaussian_nll(std::span<const Scalar> mean, std::span<const Scalar> variance,
                    std::span<const Scalar> truth, Scalar variance_floor = 1e-6);

/// One evaluation row: `model, psnr_db, corr, jist_1pct, jist_5pct, nll`.
struct MetricRow {
  std::string model;
  Scalar psnr_db = 0;
  Scalar corr = 0;
  Scalar jist_1pct = 0;
  Scalar jist_5pct = 0;
  Scalar nll = 0;
};

std::string metric_csv_header();
std::string metric_csv_line(const MetricRow& row);

struct EvaluationSettings {
  Scalar jist_low = 0.01;
  Scalar jist_high = 0.05;
  int jist_radius = 1;
  Scalar nll_floor = 1e-6;
};

/// Scores mean/variance fields against ground truth. The error field is
/// (mean - truth)^2. A constant variance field (e.g. zero everywhere) has an
/// undefined correlation, reported as NaN.
MetricRow evaluate_fields(const std::string& label, std::span<const Scalar> mean,
                          std::span<const Scalar> variance, const VolumeGrid& truth,
                          const EvaluationSettings& settings = {});

}  // namespace usrn
