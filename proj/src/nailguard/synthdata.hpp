#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nailguard/image_io.hpp"

namespace nailguard {

struct SynthSpec {
  std::size_t per_category = 100;
  std::uint64_t seed = 0;
  int image_size = 224;
};

/// Draws one synthetic nail image of the given category. Same (spec seed,
/// category, index) always yields the same pixels.
RgbImage render_synthetic_nail(int category, std::size_t index, const SynthSpec& spec);

/// Writes <root>/<category name>/<category name>_NNNN.png for every category
/// and returns the written paths (relative to root) in category order.
std::vector<std::string> generate_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& root);

}  // namespace nailguard
