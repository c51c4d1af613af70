#include "nailguard/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nailguard/errors.hpp"
#include "nailguard/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nailguard {

void AugmentationConfig::validate() const {
  if (!(rotation_max_degrees >= 0.0)) throw InvalidArgument("rotation_max_degrees must be >= 0");
  if (!(brightness_jitter >= 0.0 && brightness_jitter <= 1.0)) {
    throw InvalidArgument("brightness_jitter must be in [0, 1]");
  }
  if (!(contrast_jitter >= 0.0 && contrast_jitter <= 1.0)) throw InvalidArgument("contrast_jitter must be in [0, 1]");
}

json to_json(const AugmentationConfig& cfg) {
  return {{"enabled", cfg.enabled},
          {"horizontal_flip", cfg.horizontal_flip},
          {"rotation_max_degrees", cfg.rotation_max_degrees},
          {"brightness_jitter", cfg.brightness_jitter},
          {"contrast_jitter", cfg.contrast_jitter}};
}

AugmentationConfig augmentation_from_json(const json& j) {
  AugmentationConfig cfg;
  cfg.enabled = j.value("enabled", cfg.enabled);
  cfg.horizontal_flip = j.value("horizontal_flip", cfg.horizontal_flip);
  cfg.rotation_max_degrees = j.value("rotation_max_degrees", cfg.rotation_max_degrees);
  cfg.brightness_jitter = j.value("brightness_jitter", cfg.brightness_jitter);
  cfg.contrast_jitter = j.value("contrast_jitter", cfg.contrast_jitter);
  cfg.validate();
  return cfg;
}

std::array<double, 6> one_hot(int label) {
  if (label < 0 || label >= 6) throw InvalidArgument("label index outside 0..5: " + std::to_string(label));
  std::array<double, 6> row{};
  row[static_cast<std::size_t>(label)] = 1.0;
  return row;
}

void ImageBatch::push_back(Tensor3 image, int label, std::string id) {
  images.push_back(std::move(image));
  labels.push_back(one_hot(label));
  sample_ids.push_back(std::move(id));
}

int ImageBatch::label_index(std::size_t i) const {
  const auto& row = labels.at(i);
  int index = -1;
  for (int j = 0; j < 6; ++j) {
    const double v = row[static_cast<std::size_t>(j)];
    if (v == 1.0 && index < 0) {
      index = j;
    } else if (v != 0.0) {
      throw InvalidArgument("label row " + std::to_string(i) + " is not one-hot");
    }
  }
  if (index < 0) throw InvalidArgument("label row " + std::to_string(i) + " is not one-hot");
  return index;
}

namespace {

struct Tap {
  int i0, i1;
  double frac;
};

Tap source_tap(int dst, int dst_size, int src_size) {
  double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
  const int i0 = static_cast<int>(std::floor(s));
  const int i1 = std::min(i0 + 1, src_size - 1);
  return {i0, i1, s - i0};
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

// Bilinear read at fractional coordinates, clamped to the border.
double sample_clamped(const Tensor3& img, double sy, double sx, int c) {
  sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;
  const double top = lerp(img.at(y0, x0, c), img.at(y0, x1, c), fx);
  const double bottom = lerp(img.at(y1, x0, c), img.at(y1, x1, c), fx);
  return lerp(top, bottom, fy);
}

}  // namespace

Tensor3 resize_bilinear(const Tensor3& src, int height, int width) {
  if (src.height <= 0 || src.width <= 0) throw InvalidArgument("cannot resize an empty image");
  if (height <= 0 || width <= 0) throw InvalidArgument("resize target must be positive");
  Tensor3 dst(height, width, src.channels);
  std::vector<Tap> xs(static_cast<std::size_t>(width));
  for (int x = 0; x < width; ++x) xs[static_cast<std::size_t>(x)] = source_tap(x, width, src.width);
  for (int y = 0; y < height; ++y) {
    const Tap ty = source_tap(y, height, src.height);
    for (int x = 0; x < width; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < src.channels; ++c) {
        const double top = lerp(src.at(ty.i0, tx.i0, c), src.at(ty.i0, tx.i1, c), tx.frac);
        const double bottom = lerp(src.at(ty.i1, tx.i0, c), src.at(ty.i1, tx.i1, c), tx.frac);
        dst.at(y, x, c) = lerp(top, bottom, ty.frac);
      }
    }
  }
  return dst;
}

Grid resize_bilinear(const Grid& src, int height, int width) {
  Tensor3 t(src.height, src.width, 1);
  t.data = src.data;
  Tensor3 r = resize_bilinear(t, height, width);
  Grid out(height, width);
  out.data = std::move(r.data);
  return out;
}

Tensor3 to_unit_tensor(const RgbImage& image) {
  Tensor3 t(image.height, image.width, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t.data[i] = image.pixels[i] / 255.0;
  return t;
}

RgbImage to_rgb(const Tensor3& pixels) {
  if (pixels.channels != 3) throw InvalidArgument("expected a 3-channel image");
  RgbImage out(pixels.height, pixels.width);
  for (std::size_t i = 0; i < pixels.data.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels.data[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

PreprocessedImage preprocess(const RgbImage& image, std::string sample_id) {
  Tensor3 unit = to_unit_tensor(image);
  if (unit.height != kInputSize || unit.width != kInputSize) unit = resize_bilinear(unit, kInputSize, kInputSize);
  clip_unit(unit);
  return {std::move(sample_id), std::move(unit)};
}

PreprocessedImage load_and_resize(std::span<const std::uint8_t> image_bytes, std::string sample_id) {
  RgbImage decoded = decode_image(image_bytes, sample_id);
  return preprocess(decoded, std::move(sample_id));
}

Tensor3 flip_horizontal(const Tensor3& img) {
  Tensor3 out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

Tensor3 rotate(const Tensor3& img, double degrees) {
  if (degrees == 0.0) return img;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = (img.height - 1) / 2.0;
  const double cx = (img.width - 1) / 2.0;
  Tensor3 out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_clamped(img, sy, sx, c);
    }
  }
  return out;
}

Tensor3 scale_brightness(const Tensor3& img, double factor) {
  Tensor3 out = img;
  for (double& v : out.data) v *= factor;
  return out;
}

Tensor3 stretch_contrast(const Tensor3& img, double factor) {
  if (img.data.empty()) return img;
  const bool constant = std::all_of(img.data.begin(), img.data.end(), [&](double v) { return v == img.data[0]; });
  if (constant) return img;
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  Tensor3 out = img;
  for (double& v : out.data) v = (v - mean) * factor + mean;
  return out;
}

void clip_unit(Tensor3& img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

AugmentationDraw draw_augmentation(const AugmentationConfig& cfg, std::uint64_t seed) {
  AugmentationDraw d;
  if (!cfg.enabled) return d;
  Rng rng(seed);
  // Fixed draw order so each field is reproducible regardless of the others.
  const bool flip = rng.bernoulli(0.5);
  const double angle = rng.uniform(-1.0, 1.0);
  const double brightness = rng.uniform(-1.0, 1.0);
  const double contrast = rng.uniform(-1.0, 1.0);
  d.flip = cfg.horizontal_flip && flip;
  d.angle_degrees = angle * cfg.rotation_max_degrees;
  d.brightness = 1.0 + brightness * cfg.brightness_jitter;
  d.contrast = 1.0 + contrast * cfg.contrast_jitter;
  return d;
}

Tensor3 apply_augmentation(const Tensor3& img, const AugmentationDraw& draw) {
  Tensor3 out = draw.flip ? flip_horizontal(img) : img;
  if (draw.angle_degrees != 0.0) out = rotate(out, draw.angle_degrees);
  if (draw.brightness != 1.0) out = scale_brightness(out, draw.brightness);
  if (draw.contrast != 1.0) out = stretch_contrast(out, draw.contrast);
  clip_unit(out);
  return out;
}

PreprocessedImage augment(const PreprocessedImage& img, const AugmentationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!cfg.enabled) return img;
  return {img.source_id, apply_augmentation(img.pixels, draw_augmentation(cfg, seed))};
}

std::vector<std::vector<std::size_t>> plan_batches(std::size_t n, std::size_t batch_size,
                                                   std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

DatasetImageSource::DatasetImageSource(const DatasetManifest& manifest, fs::path root, bool cache)
    : root_(root.empty() ? manifest.source_root : std::move(root)), cache_enabled_(cache) {
  for (const auto& e : manifest.entries) paths_[e.id] = e.path;
}

Tensor3 DatasetImageSource::load(const std::string& sample_id) const {
  if (cache_enabled_) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(sample_id);
    if (it != cache_.end()) {
      Tensor3 t(kInputSize, kInputSize, kInputChannels);
      std::copy(it->second.begin(), it->second.end(), t.data.begin());
      return t;
    }
  }
  auto path_it = paths_.find(sample_id);
  if (path_it == paths_.end()) throw NotFound("sample not in manifest: " + sample_id);
  PreprocessedImage img = load_and_resize(read_file_bytes(root_ / path_it->second), sample_id);
  if (cache_enabled_) {
    std::lock_guard lock(mu_);
    cache_.emplace(sample_id, std::vector<float>(img.pixels.data.begin(), img.pixels.data.end()));
    // Round through float so cached and uncached loads agree exactly.
    for (double& v : img.pixels.data) v = static_cast<float>(v);
  }
  return std::move(img.pixels);
}

void MemoryImageSource::add(const std::string& sample_id, Tensor3 pixels) { images_[sample_id] = std::move(pixels); }

Tensor3 MemoryImageSource::load(const std::string& sample_id) const {
  auto it = images_.find(sample_id);
  if (it == images_.end()) throw NotFound("no image for sample " + sample_id);
  return it->second;
}

LabeledSet labeled_partition(const DatasetManifest& manifest, const SplitAssignment& split, Partition part) {
  LabeledSet set;
  for (const auto& e : manifest.entries) {
    auto it = split.assignment.find(e.id);
    if (it == split.assignment.end()) throw InvalidArgument("sample missing from split: " + e.id);
    if (it->second != part) continue;
    set.ids.push_back(e.id);
    set.labels.push_back(e.category);
  }
  return set;
}

BatchStream::BatchStream(const LabeledSet& set, Partition part, std::size_t batch_size, std::uint64_t shuffle_seed,
                         const ImageSource& source, AugmentationConfig augmentation)
    : set_(set), part_(part), seed_(shuffle_seed), source_(&source), augmentation_(std::move(augmentation)) {
  augmentation_.validate();
  const bool train = part_ == Partition::train;
  plan_ = plan_batches(set.size(), batch_size, train ? std::optional(shuffle_seed) : std::nullopt);
}

bool BatchStream::next(ImageBatch& out) {
  if (cursor_ >= plan_.size()) return false;
  out = ImageBatch{};
  const bool train = part_ == Partition::train;
  for (std::size_t idx : plan_[cursor_]) {
    Tensor3 img = source_->load(set_.ids[idx]);
    if (train && augmentation_.enabled) {
      img = apply_augmentation(img, draw_augmentation(augmentation_, derive_seed(seed_, idx)));
    }
    out.push_back(std::move(img), set_.labels[idx], set_.ids[idx]);
  }
  ++cursor_;
  return true;
}

std::vector<std::string> BatchStream::id_order() const {
  std::vector<std::string> ids;
  for (const auto& batch : plan_) {
    for (std::size_t idx : batch) ids.push_back(set_.ids[idx]);
  }
  return ids;
}

BatchStream make_batches(const LabeledSet& set, Partition part, std::size_t batch_size, std::uint64_t shuffle_seed,
                         const ImageSource& source, AugmentationConfig augmentation) {
  return BatchStream(set, part, batch_size, shuffle_seed, source, std::move(augmentation));
}

}  // namespace nailguard
