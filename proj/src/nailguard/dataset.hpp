#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nailguard/taxonomy.hpp"

namespace nailguard {

struct ManifestEntry {
  std::string id;    // stable: the posix relative path under the source root
  std::string path;  // relative to source_root
  int category = 0;
  std::string checksum;  // sha256 of the file contents

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  LabelTaxonomy taxonomy = LabelTaxonomy::canonical();
  std::filesystem::path source_root;
  std::vector<ManifestEntry> entries;  // sorted by (category, path)

  std::size_t total() const noexcept { return entries.size(); }
  const ManifestEntry& find(const std::string& id) const;

  bool operator==(const DatasetManifest&) const = default;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct IngestResult {
  DatasetManifest manifest;
  std::vector<SkippedFile> skipped;
};

/// Walks `root`, expecting one subdirectory per category. Every regular,
/// non-hidden file is decoded; failures land in `skipped`. Unknown
/// subdirectories are a hard InvalidArgument naming the directory.
IngestResult ingest(const std::filesystem::path& root,
                    const LabelTaxonomy& taxonomy = LabelTaxonomy::canonical());

enum class Partition { train, val, test };

const char* partition_name(Partition p) noexcept;
Partition parse_partition(std::string_view name);

inline constexpr std::array<double, 3> kSplitRatios{0.7, 0.2, 0.1};

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::array<double, 3> ratios = kSplitRatios;
  std::map<std::string, Partition> assignment;
  std::vector<std::string> warnings;  // not persisted

  std::size_t count(Partition p) const;
  /// Ids of one partition in manifest order.
  std::vector<std::string> members(const DatasetManifest& manifest, Partition p) const;
};

/// Stratified split. For a category of size n: floor(0.1n) test,
/// floor(0.2n) val, the remainder train. Categories with fewer than three
/// samples go entirely to train (with a warning).
SplitAssignment split(const DatasetManifest& manifest, std::uint64_t seed);

std::array<std::size_t, kNumCategories> category_distribution(const DatasetManifest& manifest);

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const nlohmann::json& j);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment load_split(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace nailguard
