#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "nailguard/tensor.hpp"

namespace ngtest {

/// Exact fraction over 64-bit integers, always reduced.
struct Ratio {
  long long num = 0;
  long long den = 1;

  Ratio() = default;
  Ratio(long long n, long long d) : num(n), den(d) {
    if (den == 0) {
      num = 0;
      den = 1;
    }
    const long long g = std::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Ratio operator+(const Ratio& o) const { return {num * o.den + o.num * den, den * o.den}; }
  Ratio operator*(const Ratio& o) const { return {num * o.num, den * o.den}; }
  Ratio operator/(const Ratio& o) const { return o.num == 0 ? Ratio{} : Ratio{num * o.den, den * o.num}; }
};

struct BruteMetrics {
  std::vector<Ratio> precision, recall, f1;
  std::vector<long long> support;
  Ratio accuracy, macro_precision, macro_recall, macro_f1;
};

/// Counts straight off the label vectors; never builds a confusion matrix.
inline BruteMetrics brute_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  BruteMetrics m;
  long long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = Ratio(correct, static_cast<long long>(truth.size()));
  Ratio sp, sr, sf;
  for (int c = 0; c < k; ++c) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
    }
    const Ratio p(tp, tp + fp), r(tp, tp + fn);
    // 2pr/(p+r) = 2tp/(2tp+fp+fn)
    const Ratio f(2 * tp, 2 * tp + fp + fn);
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    m.support.push_back(tp + fn);
    sp = sp + p;
    sr = sr + r;
    sf = sf + f;
  }
  m.macro_precision = sp * Ratio(1, k);
  m.macro_recall = sr * Ratio(1, k);
  m.macro_f1 = sf * Ratio(1, k);
  return m;
}

/// Half-pixel bilinear sample with edge clamping, written per pixel.
inline double bilinear_at(const nailguard::Grid& g, int oy, int ox, int out_h, int out_w) {
  const double sy = std::clamp((oy + 0.5) * g.height / out_h - 0.5, 0.0, g.height - 1.0);
  const double sx = std::clamp((ox + 0.5) * g.width / out_w - 0.5, 0.0, g.width - 1.0);
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, g.height - 1);
  const int x1 = std::min(x0 + 1, g.width - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * g.at(y0, x0) + fx * g.at(y0, x1)) + fy * ((1 - fx) * g.at(y1, x0) + fx * g.at(y1, x1));
}

/// Grad-CAM with explicit loops: channel means, weighted sum, ReLU,
/// upsample, min-max normalise.
inline nailguard::Grid loop_grad_cam(const nailguard::Tensor3& A, const nailguard::Tensor3& G, int out_h,
                                     int out_w) {
  std::vector<double> alpha(static_cast<std::size_t>(A.channels), 0.0);
  for (int k = 0; k < A.channels; ++k) {
    double s = 0;
    for (int y = 0; y < A.height; ++y) {
      for (int x = 0; x < A.width; ++x) s += G.at(y, x, k);
    }
    alpha[static_cast<std::size_t>(k)] = s / (A.height * A.width);
  }
  nailguard::Grid raw(A.height, A.width);
  for (int y = 0; y < A.height; ++y) {
    for (int x = 0; x < A.width; ++x) {
      double s = 0;
      for (int k = 0; k < A.channels; ++k) s += alpha[static_cast<std::size_t>(k)] * A.at(y, x, k);
      raw.at(y, x) = s > 0 ? s : 0;
    }
  }
  nailguard::Grid up(out_h, out_w);
  double lo = 1e300, hi = -1e300;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      up.at(y, x) = bilinear_at(raw, y, x, out_h, out_w);
      lo = std::min(lo, up.at(y, x));
      hi = std::max(hi, up.at(y, x));
    }
  }
  for (auto& v : up.data) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return up;
}

/// Shapley values by averaging marginal contributions over all n!
/// orderings (independent of the subset-weight formula).
inline std::vector<double> permutation_shapley(int n, const std::function<double(std::uint64_t)>& v) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  long long count = 0;
  do {
    std::uint64_t s = 0;
    for (int i : order) {
      const double before = v(s);
      s |= 1ULL << i;
      phi[static_cast<std::size_t>(i)] += v(s) - before;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= static_cast<double>(count);
  return phi;
}

}  // namespace ngtest
