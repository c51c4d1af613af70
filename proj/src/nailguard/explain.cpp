#include "nailguard/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include <opencv2/imgproc.hpp>

#include "nailguard/errors.hpp"
#include "nailguard/pipeline.hpp"
#include "nailguard/random.hpp"

using nlohmann::json;

namespace nailguard {

std::string method_name(AttributionMethod m) { return m == AttributionMethod::gradcam ? "gradcam" : "shapley"; }

AttributionMethod parse_method(std::string_view name) {
  if (name == "gradcam") return AttributionMethod::gradcam;
  if (name == "shapley") return AttributionMethod::shapley;
  throw InvalidArgument("unknown explanation method '" + std::string(name) + "' (expected gradcam or shapley)");
}

Grid grad_cam_from_maps(const Tensor3& activations, const Tensor3& gradients, int out_h, int out_w) {
  if (!activations.same_shape(gradients)) throw InvalidArgument("activations and gradients differ in shape");
  const int h = activations.height;
  const int w = activations.width;
  const int k = activations.channels;
  std::vector<double> alpha(static_cast<std::size_t>(k), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < k; ++c) alpha[static_cast<std::size_t>(c)] += gradients.at(y, x, c);
    }
  }
  for (double& a : alpha) a /= static_cast<double>(h) * w;

  Grid raw(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int c = 0; c < k; ++c) s += alpha[static_cast<std::size_t>(c)] * activations.at(y, x, c);
      raw.at(y, x) = std::max(0.0, s);
    }
  }
  Grid up = resize_bilinear(raw, out_h, out_w);
  const auto [lo_it, hi_it] = std::minmax_element(up.data.begin(), up.data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(up.data.begin(), up.data.end(), 0.0);
    return up;
  }
  for (double& v : up.data) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return up;
}

AttributionMap grad_cam(const Classifier& classifier, const Tensor3& image, int target_category) {
  const FeatureMapsAndGrads fg = classifier.activations_and_grads(image, target_category);
  return {grad_cam_from_maps(fg.activations, fg.gradients, image.height, image.width), AttributionMethod::gradcam,
          target_category};
}

Segmentation segment_grid(int height, int width, int rows, int cols) {
  if (rows < 1 || cols < 1) throw InvalidArgument("grid must have at least one row and column");
  if (height % rows != 0 || width % cols != 0) {
    throw InvalidArgument("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not divide " +
                          std::to_string(height) + "x" + std::to_string(width) + " evenly");
  }
  if (rows * cols > 64) throw InvalidArgument("at most 64 segments are supported");
  Segmentation seg{Grid(height, width), rows * cols, rows, cols};
  const int bh = height / rows;
  const int bw = width / cols;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) seg.ids.at(y, x) = (y / bh) * cols + x / bw;
  }
  return seg;
}

std::string baseline_name(Baseline b) { return b == Baseline::blur ? "blur" : "gray"; }

Baseline parse_baseline(std::string_view name) {
  if (name == "blur") return Baseline::blur;
  if (name == "gray") return Baseline::gray;
  throw InvalidArgument("unknown baseline '" + std::string(name) + "' (expected blur or gray)");
}

Tensor3 make_baseline(const Tensor3& image, Baseline kind) {
  if (kind == Baseline::gray) return Tensor3(image.height, image.width, image.channels, 0.5);
  cv::Mat src(image.height, image.width, CV_64FC(image.channels), const_cast<double*>(image.data.data()));
  Tensor3 out(image.height, image.width, image.channels);
  cv::Mat dst(image.height, image.width, CV_64FC(image.channels), out.data.data());
  cv::GaussianBlur(src, dst, cv::Size(0, 0), 8.0, 8.0, cv::BORDER_REPLICATE);
  return out;
}

std::vector<double> shapley_exact(int n, const ValueFunction& v) {
  if (n < 1) throw InvalidArgument("need at least one segment");
  if (n > kMaxExactSegments) {
    throw InvalidArgument("exact Shapley supports at most 12 segments (got " + std::to_string(n) +
                          "); use sampled mode");
  }
  const Coalition full = (Coalition{1} << n) - 1;
  std::vector<double> values(static_cast<std::size_t>(full) + 1);
  for (Coalition s = 0; s <= full; ++s) values[s] = v(s);

  // weight[k] = k!(n-k-1)!/n!
  std::vector<double> weight(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    weight[static_cast<std::size_t>(k)] =
        std::exp(std::lgamma(k + 1.0) + std::lgamma(static_cast<double>(n - k)) - std::lgamma(n + 1.0));
  }
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (Coalition s = 0; s <= full; ++s) {
    const int size = std::popcount(s);
    for (int i = 0; i < n; ++i) {
      const Coalition bit = Coalition{1} << i;
      if (s & bit) continue;
      phi[static_cast<std::size_t>(i)] += weight[static_cast<std::size_t>(size)] * (values[s | bit] - values[s]);
    }
  }
  return phi;
}

std::vector<double> shapley_sampled(int n, const ValueFunction& v, int samples, std::uint64_t seed) {
  if (n < 1 || n > 64) throw InvalidArgument("sampled Shapley supports 1..64 segments");
  if (samples < 1) throw InvalidArgument("samples must be >= 1");
  std::unordered_map<Coalition, double> memo;
  auto value = [&](Coalition s) {
    auto it = memo.find(s);
    if (it != memo.end()) return it->second;
    const double r = v(s);
    memo.emplace(s, r);
    return r;
  };
  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < samples; ++t) {
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    Coalition s = 0;
    double prev = value(s);
    for (int i : order) {
      s |= Coalition{1} << i;
      const double cur = value(s);
      phi[static_cast<std::size_t>(i)] += cur - prev;
      prev = cur;
    }
  }
  for (double& p : phi) p /= samples;
  return phi;
}

namespace {

Tensor3 compose(const Tensor3& image, const Tensor3& baseline, const Segmentation& seg, Coalition keep) {
  Tensor3 out = baseline;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!(keep & (Coalition{1} << seg.id_at(y, x)))) continue;
      const std::size_t o = image.index(y, x, 0);
      std::copy_n(image.data.begin() + static_cast<std::ptrdiff_t>(o), image.channels,
                  out.data.begin() + static_cast<std::ptrdiff_t>(o));
    }
  }
  return out;
}

}  // namespace

ShapleyResult shapley_attribution(const Classifier& classifier, const Tensor3& image, const Segmentation& seg,
                                  int target_category, const ShapleyOptions& options) {
  if (target_category < 0 || target_category >= kNumCategories) {
    throw InvalidArgument("target category outside 0..5: " + std::to_string(target_category));
  }
  if (seg.ids.height != image.height || seg.ids.width != image.width) {
    throw InvalidArgument("segmentation and image differ in size");
  }
  const Tensor3 baseline = make_baseline(image, options.baseline);
  const ValueFunction v = [&](Coalition s) {
    return classifier.predict(compose(image, baseline, seg, s))[static_cast<std::size_t>(target_category)];
  };
  ShapleyResult r;
  r.phi = options.exact ? shapley_exact(seg.count, v) : shapley_sampled(seg.count, v, options.samples, options.seed);
  r.base_value = v(0);
  r.full_value = v(seg.count == 64 ? ~Coalition{0} : (Coalition{1} << seg.count) - 1);
  return r;
}

Grid to_pixel_map(const ShapleyResult& result, const Segmentation& seg) {
  if (static_cast<int>(result.phi.size()) != seg.count) throw InvalidArgument("phi and segmentation disagree");
  double scale = 0.0;
  for (double p : result.phi) scale = std::max(scale, std::abs(p));
  Grid out(seg.ids.height, seg.ids.width, 0.5);
  if (scale == 0.0) return out;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double p = result.phi[static_cast<std::size_t>(seg.ids.data[i])];
    out.data[i] = std::clamp(0.5 + 0.5 * p / scale, 0.0, 1.0);
  }
  return out;
}

std::array<std::uint8_t, 3> jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto channel = [v](double centre) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0) * 255.0));
  };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

RgbImage overlay_image(const RgbImage& image, const Grid& map, double alpha) {
  if (image.height != map.height || image.width != map.width) {
    throw InvalidArgument("overlay map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                          " but the image is " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0, 1]");
  RgbImage out(image.height, image.width);
  for (std::size_t p = 0; p < map.data.size(); ++p) {
    const auto color = jet(map.data[p]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double blended = (1.0 - alpha) * image.pixels[p * 3 + c] + alpha * color[c];
      out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(blended));
    }
  }
  return out;
}

std::vector<std::uint8_t> overlay(const RgbImage& image, const Grid& map, double alpha) {
  return encode_png(overlay_image(image, map, alpha));
}

json to_json(const AttributionMap& map) {
  json rows = json::array();
  for (int y = 0; y < map.values.height; ++y) {
    json row = json::array();
    for (int x = 0; x < map.values.width; ++x) row.push_back(map.values.at(y, x));
    rows.push_back(std::move(row));
  }
  return {{"method", method_name(map.method)},
          {"target", map.target_category},
          {"height", map.values.height},
          {"width", map.values.width},
          {"values", std::move(rows)}};
}

json to_json(const ShapleyResult& result, const Segmentation& seg, int target_category) {
  return {{"method", "shapley"},
          {"target", target_category},
          {"segments", {{"rows", seg.rows}, {"cols", seg.cols}, {"count", seg.count}}},
          {"phi", result.phi},
          {"base_value", result.base_value},
          {"full_value", result.full_value}};
}

}  // namespace nailguard
