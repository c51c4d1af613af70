#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/models.hpp"
#include "nailguard/tensor.hpp"

namespace nailguard {

enum class AttributionMethod { gradcam, shapley };

std::string method_name(AttributionMethod m);
/// Throws InvalidArgument for anything but "gradcam" / "shapley".
AttributionMethod parse_method(std::string_view name);

/// Values in [0, 1].
struct AttributionMap {
  Grid values;
  AttributionMethod method = AttributionMethod::gradcam;
  int target_category = 0;
};

/// L = relu(sum_k mean(G_k) * A_k), bilinearly resized to out_h x out_w,
/// then min-max normalised. A flat map becomes all zeros.
Grid grad_cam_from_maps(const Tensor3& activations, const Tensor3& gradients, int out_h, int out_w);

AttributionMap grad_cam(const Classifier& classifier, const Tensor3& image, int target_category);

struct Segmentation {
  Grid ids;  // integer-valued, row-major block ids 0..count-1
  int count = 0;
  int rows = 0;
  int cols = 0;

  int id_at(int y, int x) const { return static_cast<int>(ids.at(y, x)); }
};

/// rows x cols blocks; both must divide the image dimensions exactly.
Segmentation segment_grid(int height, int width, int rows = 4, int cols = 4);

enum class Baseline { blur, gray };

std::string baseline_name(Baseline b);
Baseline parse_baseline(std::string_view name);

/// Gaussian blur (sigma 8 px) of the image, or uniform mid-gray.
Tensor3 make_baseline(const Tensor3& image, Baseline kind);

/// Segment membership bitmask: bit i set keeps segment i intact.
using Coalition = std::uint64_t;
using ValueFunction = std::function<double(Coalition)>;

inline constexpr int kMaxExactSegments = 12;

/// phi_i = sum_{S not containing i} |S|!(n-|S|-1)!/n! (v(S+i) - v(S)).
/// Throws InvalidArgument for n > 12.
std::vector<double> shapley_exact(int n, const ValueFunction& v);

/// Mean marginal contribution over `samples` seeded random orderings.
/// Coalition values are memoised.
std::vector<double> shapley_sampled(int n, const ValueFunction& v, int samples, std::uint64_t seed);

struct ShapleyOptions {
  bool exact = true;
  int samples = 2000;
  std::uint64_t seed = 0;
  Baseline baseline = Baseline::blur;
};

struct ShapleyResult {
  std::vector<double> phi;
  double base_value = 0.0;  // v(empty): everything replaced by the baseline
  double full_value = 0.0;  // v(all): intact image
};

/// v(S) = probability of `target_category` with segments outside S taken
/// from the baseline image.
ShapleyResult shapley_attribution(const Classifier& classifier, const Tensor3& image, const Segmentation& seg,
                                  int target_category, const ShapleyOptions& options = {});

/// 0.5 + 0.5 * phi / max|phi| per segment; all-zero phi gives 0.5 everywhere.
Grid to_pixel_map(const ShapleyResult& result, const Segmentation& seg);

/// Jet colormap for v in [0, 1] (clamped), 0-255 per channel.
std::array<std::uint8_t, 3> jet(double v);

/// round((1 - alpha) * pixel + alpha * jet(map)) per channel.
RgbImage overlay_image(const RgbImage& image, const Grid& map, double alpha = 0.4);
std::vector<std::uint8_t> overlay(const RgbImage& image, const Grid& map, double alpha = 0.4);

nlohmann::json to_json(const AttributionMap& map);
nlohmann::json to_json(const ShapleyResult& result, const Segmentation& seg, int target_category);

}  // namespace nailguard
