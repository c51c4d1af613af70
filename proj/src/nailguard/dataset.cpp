#include "nailguard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nailguard/digest.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nailguard {

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw NotFound("sample not in manifest: " + id);
}

IngestResult ingest(const fs::path& root, const LabelTaxonomy& taxonomy) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());

  IngestResult result;
  result.manifest.taxonomy = taxonomy;
  result.manifest.source_root = root;

  std::vector<std::pair<int, fs::path>> category_dirs;
  for (const auto& dirent : fs::directory_iterator(root)) {
    if (!dirent.is_directory()) continue;
    const std::string name = dirent.path().filename().string();
    if (name.starts_with('.')) continue;
    auto category = taxonomy.resolve(name);
    if (!category) throw InvalidArgument("unknown category directory '" + name + "' under " + root.string());
    category_dirs.emplace_back(*category, dirent.path());
  }

  for (const auto& [category, dir] : category_dirs) {
    for (const auto& dirent : fs::recursive_directory_iterator(dir)) {
      if (!dirent.is_regular_file()) continue;
      if (dirent.path().filename().string().starts_with('.')) continue;
      const std::string rel = fs::relative(dirent.path(), root).generic_string();
      std::vector<std::uint8_t> bytes;
      try {
        bytes = read_file_bytes(dirent.path());
        decode_image(bytes, rel);
      } catch (const Error& e) {
        result.skipped.push_back({rel, e.what()});
        continue;
      }
      result.manifest.entries.push_back({rel, rel, category, sha256_hex(bytes)});
    }
  }

  std::sort(result.manifest.entries.begin(), result.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return std::tie(a.category, a.path) < std::tie(b.category, b.path);
            });
  std::sort(result.skipped.begin(), result.skipped.end(),
            [](const SkippedFile& a, const SkippedFile& b) { return a.path < b.path; });
  return result;
}

const char* partition_name(Partition p) noexcept {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "train";
}

Partition parse_partition(std::string_view name) {
  if (name == "train") return Partition::train;
  if (name == "val" || name == "validation") return Partition::val;
  if (name == "test") return Partition::test;
  throw InvalidArgument("unknown partition '" + std::string(name) + "'");
}

std::size_t SplitAssignment::count(Partition p) const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [p](const auto& kv) { return kv.second == p; }));
}

std::vector<std::string> SplitAssignment::members(const DatasetManifest& manifest, Partition p) const {
  std::vector<std::string> ids;
  for (const auto& e : manifest.entries) {
    auto it = assignment.find(e.id);
    if (it != assignment.end() && it->second == p) ids.push_back(e.id);
  }
  return ids;
}

SplitAssignment split(const DatasetManifest& manifest, std::uint64_t seed) {
  if (manifest.total() == 0) throw InvalidArgument("cannot split an empty manifest");
  SplitAssignment out;
  out.seed = seed;

  std::array<std::vector<std::string>, kNumCategories> by_category;
  for (const auto& e : manifest.entries) {
    if (e.category < 0 || e.category >= kNumCategories) {
      throw InvalidArgument("manifest entry " + e.id + " has category outside 0..5");
    }
    by_category[static_cast<std::size_t>(e.category)].push_back(e.id);
  }

  for (int c = 0; c < kNumCategories; ++c) {
    auto& ids = by_category[static_cast<std::size_t>(c)];
    const std::size_t n = ids.size();
    if (n == 0) continue;
    if (n < 3) {
      out.warnings.push_back("category '" + manifest.taxonomy.name(c) + "' has only " + std::to_string(n) +
                             " samples; all assigned to train");
      for (const auto& id : ids) out.assignment[id] = Partition::train;
      continue;
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(ids);
    const std::size_t n_test = n / 10;
    const std::size_t n_val = n / 5;
    for (std::size_t i = 0; i < n; ++i) {
      const Partition p = i < n_test ? Partition::test : (i < n_test + n_val ? Partition::val : Partition::train);
      out.assignment[ids[i]] = p;
    }
  }
  return out;
}

std::array<std::size_t, kNumCategories> category_distribution(const DatasetManifest& manifest) {
  std::array<std::size_t, kNumCategories> counts{};
  for (const auto& e : manifest.entries) ++counts.at(static_cast<std::size_t>(e.category));
  return counts;
}

json to_json(const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"id", e.id}, {"path", e.path}, {"category", e.category}, {"checksum", e.checksum}});
  }
  return {{"taxonomy", manifest.taxonomy.names()},
          {"source_root", manifest.source_root.generic_string()},
          {"entries", std::move(entries)},
          {"total", manifest.total()}};
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.taxonomy = LabelTaxonomy(j.at("taxonomy").get<std::vector<std::string>>());
    m.source_root = j.value("source_root", std::string{});
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry{e.at("id").get<std::string>(), e.at("path").get<std::string>(), e.at("category").get<int>(),
                          e.at("checksum").get<std::string>()};
      if (entry.category < 0 || entry.category >= kNumCategories) {
        throw InvalidArgument("manifest entry " + entry.id + " has category outside 0..5");
      }
      m.entries.push_back(std::move(entry));
    }
    if (j.at("total").get<std::size_t>() != m.entries.size()) {
      throw InvalidArgument("manifest total does not match the number of entries");
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed manifest: ") + e.what());
  }
}

json to_json(const SplitAssignment& s) {
  json assignment = json::object();
  for (const auto& [id, p] : s.assignment) assignment[id] = partition_name(p);
  return {{"seed", s.seed}, {"ratios", s.ratios}, {"assignment", std::move(assignment)}};
}

SplitAssignment split_from_json(const json& j) {
  try {
    SplitAssignment s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratios = j.at("ratios").get<std::array<double, 3>>();
    for (const auto& [id, p] : j.at("assignment").items()) s.assignment[id] = parse_partition(p.get<std::string>());
    return s;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed split: ") + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void save_manifest(const DatasetManifest& manifest, const fs::path& path) { write_json_file(path, to_json(manifest)); }
DatasetManifest load_manifest(const fs::path& path) { return manifest_from_json(read_json_file(path)); }
void save_split(const SplitAssignment& s, const fs::path& path) { write_json_file(path, to_json(s)); }
SplitAssignment load_split(const fs::path& path) { return split_from_json(read_json_file(path)); }

}  // namespace nailguard
