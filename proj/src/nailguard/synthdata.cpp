#include "nailguard/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <opencv2/imgproc.hpp>

#include "nailguard/errors.hpp"
#include "nailguard/random.hpp"
#include "nailguard/taxonomy.hpp"

namespace fs = std::filesystem;

namespace nailguard {
namespace {

// Category indices in canonical order.
enum Category { kMelanoma = 0, kHealthy, kOnychogryphosis, kBlueFinger, kClubbing, kPitting };

struct Rgb {
  double r, g, b;
};

// Base nail hue per category.
constexpr std::array<Rgb, 6> kNailColor{{
    {226, 186, 166},  // melanoma: beige nail under the streak
    {240, 190, 190},  // healthy: pink
    {222, 192, 120},  // onychogryphosis: yellowish, thickened
    {156, 152, 206},  // blue finger: bluish-purple
    {232, 152, 162},  // clubbing: reddish, bulged
    {236, 208, 200},  // pitting: pale with dents
}};

cv::Scalar bgr(const Rgb& c) { return {c.b, c.g, c.r}; }

Rgb jitter(const Rgb& c, Rng& rng, double amount) {
  return {std::clamp(c.r + rng.uniform(-amount, amount), 0.0, 255.0),
          std::clamp(c.g + rng.uniform(-amount, amount), 0.0, 255.0),
          std::clamp(c.b + rng.uniform(-amount, amount), 0.0, 255.0)};
}

}  // namespace

RgbImage render_synthetic_nail(int category, std::size_t index, const SynthSpec& spec) {
  if (category < 0 || category >= kNumCategories) throw InvalidArgument("category outside 0..5");
  const int size = spec.image_size;
  const double s = size / 224.0;
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(category) * 1'000'003ULL + index));

  const Rgb skin = jitter({222, 170, 138}, rng, 12);
  cv::Mat img(size, size, CV_8UC3, bgr(skin));

  const double cx = size / 2.0 + rng.uniform(-12, 12) * s;
  const double cy = size * 0.48 + rng.uniform(-10, 10) * s;
  const double scale = rng.uniform(0.92, 1.08);

  // Finger.
  const Rgb finger = jitter({208, 156, 126}, rng, 8);
  cv::ellipse(img, cv::Point2d(cx, cy + 40 * s), cv::Size2d(96 * s * scale, 150 * s * scale), 0, 0, 360,
              bgr(finger), cv::FILLED, cv::LINE_AA);

  double ax = 78 * s * scale;
  double ay = 96 * s * scale;
  if (category == kClubbing) {
    ax *= 1.22;
    ay *= 0.98;
  }
  const cv::Point2d centre(cx, cy);
  const cv::Size2d axes(ax, ay);
  const Rgb nail = jitter(kNailColor[static_cast<std::size_t>(category)], rng, 10);

  cv::Mat mask(size, size, CV_8UC1, cv::Scalar(0));
  cv::ellipse(mask, centre, axes, 0, 0, 360, cv::Scalar(255), cv::FILLED, cv::LINE_8);
  cv::ellipse(img, centre, axes, 0, 0, 360, bgr(nail), cv::FILLED, cv::LINE_AA);

  // Lunula near the cuticle (bottom of the nail).
  if (category != kBlueFinger && category != kOnychogryphosis) {
    const Rgb lunula{std::min(255.0, nail.r + 20), std::min(255.0, nail.g + 30), std::min(255.0, nail.b + 30)};
    cv::ellipse(img, cv::Point2d(cx, cy + ay * 0.75), cv::Size2d(ax * 0.55, ay * 0.25), 0, 180, 360, bgr(lunula),
                cv::FILLED, cv::LINE_AA);
  }

  cv::Mat motif = img.clone();
  switch (category) {
    case kMelanoma: {
      const double x = cx + rng.uniform(-20, 20) * s;
      const double half = rng.uniform(10, 14) * s;
      cv::rectangle(motif, cv::Point2d(x - half, cy - ay), cv::Point2d(x + half, cy + ay), bgr(jitter({40, 26, 20}, rng, 6)),
                    cv::FILLED, cv::LINE_AA);
      break;
    }
    case kPitting: {
      const int dots = 5 + static_cast<int>(rng.below(8));  // 5..12
      for (int i = 0; i < dots; ++i) {
        const double r = std::sqrt(rng.uniform()) * 0.8;
        const double t = rng.uniform(0, 2 * 3.141592653589793);
        const cv::Point2d p(cx + r * ax * std::cos(t), cy + r * ay * std::sin(t));
        cv::circle(motif, p, static_cast<int>(std::lround(rng.uniform(5, 8) * s)), bgr(jitter({90, 60, 52}, rng, 8)),
                   cv::FILLED, cv::LINE_AA);
      }
      break;
    }
    default:
      break;
  }
  motif.copyTo(img, mask);

  if (category == kOnychogryphosis) {
    // Thick curved claw-like rim plus overgrowth at the free edge.
    cv::ellipse(img, centre, axes, 0, 0, 360, bgr(jitter({150, 112, 42}, rng, 8)),
                static_cast<int>(std::lround(9 * s)), cv::LINE_AA);
    cv::ellipse(img, cv::Point2d(cx + 6 * s, cy - ay * 0.9), cv::Size2d(ax * 0.9, ay * 0.45), 0, 180, 360,
                bgr(jitter({170, 132, 58}, rng, 8)), static_cast<int>(std::lround(7 * s)), cv::LINE_AA);
  } else if (category == kClubbing) {
    cv::ellipse(img, centre, axes, 0, 0, 360, bgr(jitter({168, 80, 92}, rng, 8)), static_cast<int>(std::lround(4 * s)),
                cv::LINE_AA);
  } else if (category == kBlueFinger) {
    // Cyanotic tint on the fingertip around the nail.
    cv::Mat tint(size, size, CV_8UC3, bgr({120, 120, 190}));
    cv::Mat ring(size, size, CV_8UC1, cv::Scalar(0));
    cv::ellipse(ring, centre, cv::Size2d(ax * 1.35, ay * 1.25), 0, 0, 360, cv::Scalar(255), cv::FILLED);
    cv::Mat blended;
    cv::addWeighted(img, 0.7, tint, 0.3, 0.0, blended);
    cv::Mat ring_only = ring & ~mask;
    blended.copyTo(img, ring_only);
  }

  const double gain = rng.uniform(0.93, 1.07);
  RgbImage out(size, size);
  for (int y = 0; y < size; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      std::uint8_t* px = out.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = row[x][2 - c] * gain + rng.normal() * 4.0;
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::vector<std::string> generate_synthetic_dataset(const SynthSpec& spec, const fs::path& root) {
  if (spec.image_size < 16) throw InvalidArgument("synthetic image size must be at least 16");
  const auto& taxonomy = LabelTaxonomy::canonical();
  std::vector<std::string> written;
  for (int c = 0; c < kNumCategories; ++c) {
    const fs::path dir = root / taxonomy.name(c);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < spec.per_category; ++i) {
      char name[128];
      std::snprintf(name, sizeof(name), "%s_%04zu.png", taxonomy.name(c).c_str(), i);
      write_file_bytes(dir / name, encode_png(render_synthetic_nail(c, i, spec)));
      written.push_back(taxonomy.name(c) + "/" + name);
    }
  }
  return written;
}

}  // namespace nailguard
