#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nailguard/dataset.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/tensor.hpp"

namespace nailguard {

inline constexpr int kInputSize = 224;
inline constexpr int kInputChannels = 3;
inline constexpr std::size_t kDefaultBatchSize = 32;

/// 224x224x3 array of values in [0, 1].
struct PreprocessedImage {
  std::string source_id;
  Tensor3 pixels;
};

struct AugmentationConfig {
  bool enabled = true;
  bool horizontal_flip = true;
  double rotation_max_degrees = 15.0;
  double brightness_jitter = 0.1;
  double contrast_jitter = 0.1;

  /// Throws InvalidArgument for negative rotation or jitter outside [0, 1].
  void validate() const;
  static AugmentationConfig disabled() {
    AugmentationConfig cfg;
    cfg.enabled = false;
    return cfg;
  }
};

nlohmann::json to_json(const AugmentationConfig& cfg);
AugmentationConfig augmentation_from_json(const nlohmann::json& j);

/// Concrete random choices for one augmentation application.
struct AugmentationDraw {
  bool flip = false;
  double angle_degrees = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
};

struct ImageBatch {
  std::vector<Tensor3> images;
  std::vector<std::array<double, 6>> labels;  // one-hot rows
  std::vector<std::string> sample_ids;

  std::size_t size() const noexcept { return images.size(); }
  void push_back(Tensor3 image, int label, std::string id);
  /// Index of the single 1 in row i. Throws InvalidArgument when the row is
  /// not one-hot.
  int label_index(std::size_t i) const;
};

std::array<double, 6> one_hot(int label);

/// Half-pixel-centred bilinear resampling with edge clamping.
Tensor3 resize_bilinear(const Tensor3& src, int height, int width);
Grid resize_bilinear(const Grid& src, int height, int width);

Tensor3 to_unit_tensor(const RgbImage& image);
RgbImage to_rgb(const Tensor3& pixels);

PreprocessedImage preprocess(const RgbImage& image, std::string sample_id);
/// Decode, resize to 224x224, scale to [0, 1]. Throws DecodeError carrying
/// the sample id.
PreprocessedImage load_and_resize(std::span<const std::uint8_t> image_bytes, std::string sample_id = {});

Tensor3 flip_horizontal(const Tensor3& img);
/// Rotation about the image centre, bilinear, border replicated.
Tensor3 rotate(const Tensor3& img, double degrees);
Tensor3 scale_brightness(const Tensor3& img, double factor);
/// (x - mean) * factor + mean, mean taken over every value.
Tensor3 stretch_contrast(const Tensor3& img, double factor);
void clip_unit(Tensor3& img);

AugmentationDraw draw_augmentation(const AugmentationConfig& cfg, std::uint64_t seed);
Tensor3 apply_augmentation(const Tensor3& img, const AugmentationDraw& draw);
PreprocessedImage augment(const PreprocessedImage& img, const AugmentationConfig& cfg, std::uint64_t seed);

/// Index batches over n items. Shuffled when a seed is given; the final
/// partial batch is kept.
std::vector<std::vector<std::size_t>> plan_batches(std::size_t n, std::size_t batch_size,
                                                   std::optional<std::uint64_t> shuffle_seed);

/// Supplies preprocessed images by sample id.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Tensor3 load(const std::string& sample_id) const = 0;
};

/// Reads manifest entries from disk, caching the resized arrays as floats.
class DatasetImageSource final : public ImageSource {
 public:
  DatasetImageSource(const DatasetManifest& manifest, std::filesystem::path root = {}, bool cache = true);
  Tensor3 load(const std::string& sample_id) const override;

 private:
  std::map<std::string, std::string> paths_;
  std::filesystem::path root_;
  bool cache_enabled_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::vector<float>> cache_;
};

/// In-memory images, used by tests and the synthetic pipeline.
class MemoryImageSource final : public ImageSource {
 public:
  void add(const std::string& sample_id, Tensor3 pixels);
  Tensor3 load(const std::string& sample_id) const override;

 private:
  std::map<std::string, Tensor3> images_;
};

/// Sample ids with their category indices.
struct LabeledSet {
  std::vector<std::string> ids;
  std::vector<int> labels;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
};

LabeledSet labeled_partition(const DatasetManifest& manifest, const SplitAssignment& split, Partition part);

/// Lazily materialised batches. Training partitions are shuffled with the
/// epoch seed and augmented; val/test keep manifest order and are never
/// augmented.
class BatchStream {
 public:
  BatchStream(const LabeledSet& set, Partition part, std::size_t batch_size, std::uint64_t shuffle_seed,
              const ImageSource& source, AugmentationConfig augmentation = {});

  bool next(ImageBatch& out);
  std::size_t batch_count() const noexcept { return plan_.size(); }
  /// Id order of the whole epoch.
  std::vector<std::string> id_order() const;

 private:
  LabeledSet set_;
  Partition part_;
  std::uint64_t seed_;
  const ImageSource* source_;
  AugmentationConfig augmentation_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t cursor_ = 0;
};

BatchStream make_batches(const LabeledSet& set, Partition part, std::size_t batch_size, std::uint64_t shuffle_seed,
                         const ImageSource& source, AugmentationConfig augmentation = {});

}  // namespace nailguard
