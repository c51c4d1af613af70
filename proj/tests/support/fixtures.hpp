#pragma once

#include <unistd.h>

#include <cstdint>
#include <cmath>
#include <cstdio>
#include <span>
#include <filesystem>
#include <string>
#include <vector>

#include "nailguard/dataset.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/models.hpp"
#include "nailguard/pipeline.hpp"
#include "nailguard/random.hpp"
#include "nailguard/tensor.hpp"

namespace ngtest {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    nailguard::Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
    path_ = fs::temp_directory_path() / ("nailguard-" + tag + "-" + std::to_string(rng.next() % 1000000007ULL));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline nailguard::Tensor3 random_image(nailguard::Rng& rng, int h = 224, int w = 224, int c = 3) {
  nailguard::Tensor3 t(h, w, c);
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

inline nailguard::RgbImage random_rgb(nailguard::Rng& rng, int h, int w) {
  nailguard::RgbImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Smooth blob image: a bright disc whose colour depends on `label`, so a
/// small model can separate the labels after a few steps.
inline nailguard::Tensor3 blob_image(int label, nailguard::Rng& rng) {
  nailguard::Tensor3 t(224, 224, 3, 0.2);
  const double cy = 112 + rng.uniform(-10, 10);
  const double cx = 112 + rng.uniform(-10, 10);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) > 60.0 * 60.0) continue;
      t.at(y, x, label % 3) = 0.9;
      t.at(y, x, (label + 1) % 3) = label < 3 ? 0.1 : 0.7;
    }
  }
  return t;
}

/// Random head weights so predictions are not uniform. Pooled tap features
/// of a unit-interval image are O(100), so 0.003 * logit_scale keeps the
/// logits O(logit_scale).
inline nailguard::Classifier seeded_classifier(std::uint64_t seed, double logit_scale = 1.0) {
  nailguard::Classifier clf = nailguard::build_classifier("tiny_test", seed);
  nailguard::Rng rng(seed ^ 0xabcdefULL);
  for (auto& w : clf.head_weight().value) w = 0.003 * logit_scale * rng.normal();
  for (auto& b : clf.head_bias().value) b = 0.1 * rng.normal();
  return clf;
}

/// True when x[index] +- h crosses a ReLU or max-pool boundary. Inside one
/// linear region the logits are affine in each input, so their second
/// difference vanishes; a central difference is only a valid oracle there.
inline bool straddles_kink(const nailguard::Classifier& clf, nailguard::Tensor3 image, std::size_t index, double h) {
  const double saved = image.data[index];
  auto logits = [&](double v) {
    image.data[index] = v;
    return clf.forward(std::span<const nailguard::Tensor3>(&image, 1)).logits[0];
  };
  const auto up = logits(saved + h);
  const auto mid = logits(saved);
  const auto down = logits(saved - h);
  for (std::size_t j = 0; j < up.size(); ++j) {
    if (std::abs(up[j] - 2 * mid[j] + down[j]) > 1e-9 * (1.0 + std::abs(mid[j]))) return true;
  }
  return false;
}

/// Small labelled in-memory data set: `per_label` blob images per category.
struct ToyData {
  nailguard::MemoryImageSource source;
  nailguard::LabeledSet train;
  nailguard::LabeledSet val;
};

inline void fill_toy(ToyData& d, std::size_t per_label_train, std::size_t per_label_val, std::uint64_t seed,
                     int labels = 6) {
  nailguard::Rng rng(seed);
  for (int c = 0; c < labels; ++c) {
    for (std::size_t i = 0; i < per_label_train + per_label_val; ++i) {
      const std::string id = "toy/" + std::to_string(c) + "/" + std::to_string(i);
      d.source.add(id, blob_image(c, rng));
      auto& set = i < per_label_train ? d.train : d.val;
      set.ids.push_back(id);
      set.labels.push_back(c);
    }
  }
}

/// Manifest with synthetic entries only (no files); sizes per category.
inline nailguard::DatasetManifest fake_manifest(const std::vector<std::size_t>& sizes) {
  nailguard::DatasetManifest m;
  m.source_root = "/nonexistent";
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const std::string& name = m.taxonomy.name(static_cast<int>(c));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%05zu.png", i);
      nailguard::ManifestEntry e;
      e.path = name + "/" + buf;
      e.id = e.path;
      e.category = static_cast<int>(c);
      e.checksum = std::string(64, '0');
      m.entries.push_back(e);
    }
  }
  return m;
}

}  // namespace ngtest
