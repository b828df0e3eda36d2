// SPDX-License-Identifier: Apache-2.0
#include "usrn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "usrn/errors.hpp"

namespace usrn {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidArgument(std::string(what) + ": field sizes differ");
  if (a == 0) throw InvalidArgument(std::string(what) + ": empty field");
}

void require_fraction(Scalar p) {
  if (!(p > 0 && p <= 1)) throw InvalidArgument("top fraction must be in (0, 1]");
}

}  // namespace

Scalar psnr(std::span<const Scalar> pred, std::span<const Scalar> truth, Scalar peak) {
  require_same_size(pred.size(), truth.size(), "psnr");
  if (!(peak > 0)) throw InvalidArgument("psnr: peak must be > 0");
  Scalar sse = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Scalar d = pred[i] - truth[i];
    sse += d * d;
  }
  const Scalar mse = sse / static_cast<Scalar>(pred.size());
  if (mse == 0) return std::numeric_limits<Scalar>::infinity();
  return 10 * std::log10(peak * peak / mse);
}

Scalar pearson_correlation(std::span<const Scalar> a, std::span<const Scalar> b) {
  require_same_size(a.size(), b.size(), "pearson_correlation");
  const auto n = static_cast<Scalar>(a.size());
  const Scalar ma = std::accumulate(a.begin(), a.end(), Scalar(0)) / n;
  const Scalar mb = std::accumulate(b.begin(), b.end(), Scalar(0)) / n;
  Scalar sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Scalar da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) throw NumericError("correlation is undefined for a constant field");
  return std::clamp(sab / std::sqrt(saa * sbb), Scalar(-1), Scalar(1));
}

std::size_t top_count(std::size_t n, Scalar fraction) {
  require_fraction(fraction);
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<Scalar>(n) - 1e-9));
  return std::clamp<std::size_t>(k, n == 0 ? 0 : 1, n);
}

std::vector<std::size_t> top_fraction_indices(std::span<const Scalar> values, Scalar fraction) {
  const std::size_t k = top_count(values.size(), fraction);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t x, std::size_t y) {
    if (values[x] != values[y]) return values[x] > values[y];
    return x < y;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

std::vector<char> top_fraction_mask(std::span<const Scalar> values, Scalar fraction) {
  std::vector<char> mask(values.size(), 0);
  for (std::size_t i : top_fraction_indices(values, fraction)) mask[i] = 1;
  return mask;
}

std::vector<char> dilate_mask(const std::vector<char>& mask, const Dims& dims, int radius) {
  if (mask.size() != dims.count()) throw InvalidArgument("dilate_mask: mask does not match dims");
  if (radius < 0) throw InvalidArgument("dilation radius must be >= 0");
  if (radius == 0) return mask;
  std::vector<char> out(mask.size(), 0);
  const auto nx = static_cast<std::ptrdiff_t>(dims.nx), ny = static_cast<std::ptrdiff_t>(dims.ny),
             nz = static_cast<std::ptrdiff_t>(dims.nz);
  for (std::ptrdiff_t z = 0; z < nz; ++z)
    for (std::ptrdiff_t y = 0; y < ny; ++y)
      for (std::ptrdiff_t x = 0; x < nx; ++x) {
        if (!mask[static_cast<std::size_t>(x + nx * (y + ny * z))]) continue;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, z - radius); k <= std::min(nz - 1, z + radius); ++k)
          for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, y - radius); j <= std::min(ny - 1, y + radius); ++j)
            for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, x - radius); i <= std::min(nx - 1, x + radius);
                 ++i)
              out[static_cast<std::size_t>(i + nx * (j + ny * k))] = 1;
      }
  return out;
}

Scalar jaccard_spatial_tolerance(std::span<const Scalar> variance, std::span<const Scalar> error,
                                 const Dims& dims, Scalar fraction, int radius) {
  require_same_size(variance.size(), error.size(), "jaccard_spatial_tolerance");
  if (variance.size() != dims.count()) throw InvalidArgument("jaccard_spatial_tolerance: field does not match dims");
  require_fraction(fraction);
  const std::vector<char> a = top_fraction_mask(variance, fraction);
  const std::vector<char> b = top_fraction_mask(error, fraction);
  const std::vector<char> b_dilated = dilate_mask(b, dims, radius);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b_dilated[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return static_cast<Scalar>(inter) / static_cast<Scalar>(uni);
}

Scalar gaussian_nll(std::span<const Scalar> mean, std::span<const Scalar> variance,
                    std::span<const Scalar> truth, Scalar variance_floor) {
  require_same_size(mean.size(), variance.size(), "gaussian_nll");
  require_same_size(mean.size(), truth.size(), "gaussian_nll");
  if (!(variance_floor > 0)) throw InvalidArgument("gaussian_nll: variance floor must be > 0");
  Scalar sum = 0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const Scalar v = std::max(variance[i], variance_floor);
    const Scalar d = truth[i] - mean[i];
    sum += 0.5 * std::log(2 * std::numbers::pi_v<Scalar> * v) + d * d / (2 * v);
  }
  return sum / static_cast<Scalar>(mean.size());
}

std::string metric_csv_header() { return "model,psnr_db,corr,jist_1pct,jist_5pct,nll"; }

std::string metric_csv_line(const MetricRow& row) {
  std::ostringstream out;
  out.precision(10);
  out << row.model << ',' << row.psnr_db << ',' << row.corr << ',' << row.jist_1pct << ',' << row.jist_5pct
      << ',' << row.nll;
  return out.str();
}

MetricRow evaluate_fields(const std::string& label, std::span<const Scalar> mean,
                          std::span<const Scalar> variance, const VolumeGrid& truth,
                          const EvaluationSettings& settings) {
  const std::size_t n = truth.dims.count();
  require_same_size(mean.size(), n, "evaluate_fields");
  require_same_size(variance.size(), n, "evaluate_fields");
  std::vector<Scalar> gt(truth.values.begin(), truth.values.end());
  std::vector<Scalar> error(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar d = mean[i] - gt[i];
    error[i] = d * d;
  }
  MetricRow row;
  row.model = label;
  row.psnr_db = psnr(mean, gt, 1);
  try {
    row.corr = pearson_correlation(variance, error);
  } catch (const NumericError&) {
    row.corr = std::numeric_limits<Scalar>::quiet_NaN();
  }
  row.jist_1pct = jaccard_spatial_tolerance(variance, error, truth.dims, settings.jist_low, settings.jist_radius);
  row.jist_5pct = jaccard_spatial_tolerance(variance, error, truth.dims, settings.jist_high, settings.jist_radius);
  row.nll = gaussian_nll(mean, variance, gt, settings.nll_floor);
  return row;
}

}  // namespace usrn
