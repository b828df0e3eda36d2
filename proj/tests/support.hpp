// SPDX-License-Identifier: Apache-2.0
// Seeded input generators and brute-force reference implementations for tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "usrn/common.hpp"
#include "usrn/volume.hpp"

namespace usrn::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  Scalar real(Scalar lo, Scalar hi) { return uniform(rng_, lo, hi); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform_index(rng_, static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool coin(Scalar p = 0.5) { return uniform01(rng_) < p; }

  Vector vector(Eigen::Index n, Scalar lo, Scalar hi) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = real(lo, hi);
    return v;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols, Scalar lo, Scalar hi) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = real(lo, hi);
    return m;
  }
  std::vector<Scalar> values(std::size_t n, Scalar lo, Scalar hi) {
    std::vector<Scalar> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  /// Values drawn from a small set so ties are common.
  std::vector<Scalar> tied_values(std::size_t n, int levels) {
    std::vector<Scalar> v(n);
    for (auto& x : v) x = integer(0, levels - 1);
    return v;
  }
  Matrix coords(Eigen::Index n) { return matrix(n, 3, -1, 1); }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

/// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("usrn_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

// ---------------------------------------------------------------------------
// Reference implementations. Written as plain loops, independent of the library.

struct RefStats {
  std::vector<Scalar> mean, variance;
};

inline RefStats ref_ensemble_stats(const std::vector<std::vector<Scalar>>& members) {
  const std::size_t m = members.size(), b = members[0].size();
  RefStats s{std::vector<Scalar>(b, 0), std::vector<Scalar>(b, 0)};
  for (std::size_t j = 0; j < b; ++j) {
    long double sum = 0;
    for (std::size_t i = 0; i < m; ++i) sum += members[i][j];
    const long double mu = sum / m;
    long double ss = 0;
    for (std::size_t i = 0; i < m; ++i) ss += (members[i][j] - mu) * (members[i][j] - mu);
    s.mean[j] = static_cast<Scalar>(mu);
    s.variance[j] = static_cast<Scalar>(ss / (m - 1));
  }
  return s;
}

inline std::vector<std::vector<Scalar>> rows_of(const Matrix& m) {
  std::vector<std::vector<Scalar>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

inline Scalar ref_member_loss(const std::vector<std::vector<Scalar>>& members, const std::vector<Scalar>& y) {
  long double total = 0;
  for (const auto& row : members)
    for (std::size_t b = 0; b < y.size(); ++b) total += (row[b] - y[b]) * (row[b] - y[b]);
  return static_cast<Scalar>(total / y.size());
}

inline std::vector<long double> ref_density(const std::vector<Scalar>& v) {
  long double sum = 0;
  for (Scalar x : v) sum += x;
  std::vector<long double> d(v.size());
  long double total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d[i] = std::max<long double>(v[i] / (sum + 1e-12L), 1e-12L);
    total += d[i];
  }
  for (auto& x : d) x /= total;
  return d;
}

inline Scalar ref_kl_regularizer(const std::vector<Scalar>& variances, const std::vector<Scalar>& sq_errors) {
  const auto fv = ref_density(variances), fe = ref_density(sq_errors);
  long double total = 0;
  for (std::size_t b = 0; b < fv.size(); ++b) total += fe[b] * std::log(fe[b] / fv[b]);
  return static_cast<Scalar>(total / fv.size());
}

inline Scalar ref_gaussian_nll(const std::vector<Scalar>& mu, const std::vector<Scalar>& var,
                               const std::vector<Scalar>& y, Scalar floor) {
  long double total = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const long double v = std::max(var[i], floor);
    total += 0.5L * std::log(2 * std::numbers::pi_v<long double> * v) + (y[i] - mu[i]) * (y[i] - mu[i]) / (2 * v);
  }
  return static_cast<Scalar>(total / mu.size());
}

inline Scalar ref_psnr(const std::vector<Scalar>& a, const std::vector<Scalar>& b, Scalar peak) {
  long double sse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<Scalar>(10 * std::log10(peak * peak / (sse / a.size())));
}

inline Scalar ref_pearson(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  // Single-pass textbook form.
  long double n = a.size(), sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += static_cast<long double>(a[i]) * b[i];
    saa += static_cast<long double>(a[i]) * a[i];
    sbb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<Scalar>((n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb)));
}

/// Top-k set by full sort on (value desc, index asc).
inline std::set<std::size_t> ref_top_set(const std::vector<Scalar>& v, Scalar p) {
  std::size_t k = static_cast<std::size_t>(std::ceil(p * v.size() - 1e-9));
  k = std::max<std::size_t>(k, 1);
  std::vector<std::pair<Scalar, std::size_t>> order;
  for (std::size_t i = 0; i < v.size(); ++i) order.emplace_back(v[i], i);
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
    return x.first > y.first || (x.first == y.first && x.second < y.second);
  });
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.insert(order[i].second);
  return out;
}

/// Dilation by comparing every voxel against every set member.
inline std::set<std::size_t> ref_dilate(const std::set<std::size_t>& s, const Dims& d, int r) {
  std::set<std::size_t> out;
  for (std::size_t v = 0; v < d.count(); ++v) {
    const int vx = static_cast<int>(v % d.nx), vy = static_cast<int>((v / d.nx) % d.ny),
              vz = static_cast<int>(v / (static_cast<std::size_t>(d.nx) * d.ny));
    for (std::size_t m : s) {
      const int mx = static_cast<int>(m % d.nx), my = static_cast<int>((m / d.nx) % d.ny),
                mz = static_cast<int>(m / (static_cast<std::size_t>(d.nx) * d.ny));
      if (std::max({std::abs(vx - mx), std::abs(vy - my), std::abs(vz - mz)}) <= r) {
        out.insert(v);
        break;
      }
    }
  }
  return out;
}

inline Scalar ref_jist(const std::vector<Scalar>& var, const std::vector<Scalar>& err, const Dims& d, Scalar p,
                       int r) {
  const auto a = ref_top_set(var, p), b = ref_top_set(err, p);
  const auto bd = ref_dilate(b, d, r);
  std::size_t inter = 0;
  for (std::size_t x : a) inter += bd.count(x);
  std::set<std::size_t> uni = a;
  uni.insert(b.begin(), b.end());
  return static_cast<Scalar>(inter) / static_cast<Scalar>(uni.size());
}

inline Scalar ref_lambda(Scalar lo, Scalar hi, Scalar r, long t, long t_max) {
  const long double e = static_cast<long double>(t - 1) / (t_max - 1);
  return static_cast<Scalar>(lo + (hi - lo) * (std::pow(static_cast<long double>(r), e) - 1) / (r - 1));
}

/// Trilinear blend written as an explicit sum over the 8 corners.
template <typename At>
Scalar ref_trilinear(const Dims& d, const Vec3& p, At at) {
  Scalar total = 0;
  int base[3];
  Scalar frac[3];
  for (int a = 0; a < 3; ++a) {
    const Scalar pos = (p[a] + 1) / 2 * (d[a] - 1);
    base[a] = std::min(static_cast<int>(std::floor(pos)), d[a] - 2);
    frac[a] = pos - base[a];
  }
  for (int c = 0; c < 8; ++c) {
    Scalar w = 1;
    int idx[3];
    for (int a = 0; a < 3; ++a) {
      const int bit = (c >> a) & 1;
      idx[a] = base[a] + bit;
      w *= bit ? frac[a] : 1 - frac[a];
    }
    total += w * at(idx[0], idx[1], idx[2]);
  }
  return total;
}

}  // namespace usrn::testing
