#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nailguard {

inline constexpr int kNumCategories = 6;

/// Ordered set of the six nail categories. Index order is the canonical
/// reporting order and the order of classifier outputs.
class LabelTaxonomy {
 public:
  /// acral_lentiginous_melanoma, healthy_nail, onychogryphosis, blue_finger,
  /// clubbing, pitting.
  static const LabelTaxonomy& canonical();

  /// Throws InvalidArgument unless there are exactly six distinct names.
  explicit LabelTaxonomy(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  int size() const noexcept { return static_cast<int>(names_.size()); }

  std::optional<int> index_of(std::string_view name) const;

  /// Resolves a directory or user-supplied label: case-insensitive, with
  /// spaces, hyphens and underscores treated alike. Also accepts the
  /// "onycholysis" and "blue fingernail" aliases.
  std::optional<int> resolve(std::string_view label) const;

  bool operator==(const LabelTaxonomy&) const = default;

 private:
  std::vector<std::string> names_;
};

/// Lowercase, trimmed, runs of space/underscore/hyphen collapsed to '_'.
std::string normalize_label(std::string_view label);

}  // namespace nailguard
