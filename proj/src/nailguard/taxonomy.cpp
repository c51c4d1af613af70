#include "nailguard/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "nailguard/errors.hpp"

namespace nailguard {

const LabelTaxonomy& LabelTaxonomy::canonical() {
  static const LabelTaxonomy taxonomy({"acral_lentiginous_melanoma", "healthy_nail", "onychogryphosis",
                                       "blue_finger", "clubbing", "pitting"});
  return taxonomy;
}

LabelTaxonomy::LabelTaxonomy(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() != static_cast<std::size_t>(kNumCategories)) {
    throw InvalidArgument("taxonomy must have exactly 6 categories, got " + std::to_string(names_.size()));
  }
  std::set<std::string> distinct(names_.begin(), names_.end());
  if (distinct.size() != names_.size()) throw InvalidArgument("taxonomy category names must be distinct");
}

std::optional<int> LabelTaxonomy::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

std::optional<int> LabelTaxonomy::resolve(std::string_view label) const {
  std::string key = normalize_label(label);
  if (key == "onycholysis") key = "onychogryphosis";
  if (key == "blue_fingernail" || key == "blue_fingernails") key = "blue_finger";
  for (int i = 0; i < size(); ++i) {
    if (normalize_label(names_[static_cast<std::size_t>(i)]) == key) return i;
  }
  return std::nullopt;
}

std::string normalize_label(std::string_view label) {
  std::string out;
  bool pending_sep = false;
  for (char raw : label) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch) || raw == '_' || raw == '-') {
      pending_sep = true;
      continue;
    }
    if (pending_sep && !out.empty()) out.push_back('_');
    pending_sep = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

}  // namespace nailguard
