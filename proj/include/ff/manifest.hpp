#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ff {

// Fixed alphabetical class -> index mapping, recorded in every report.
enum class ClassLabel { kCnv = 0, kDme = 1, kDrusen = 2, kNormal = 3 };

constexpr int kNumClasses = 4;
constexpr std::array<std::string_view, 4> kClassNames = {"CNV", "DME", "DRUSEN",
                                                         "NORMAL"};

std::string_view to_string(ClassLabel label);
ClassLabel class_from_string(std::string_view name);  // case-insensitive

struct ManifestEntry {
  std::string image_id;  // relative path with '/' separators; unique
  std::string relative_path;
  ClassLabel label;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;  // sorted by relative path
  std::string root_digest;

  std::array<std::int64_t, 4> per_class_counts() const;
  const ManifestEntry& find(const std::string& image_id) const;
};

// Scans <root>/<CLASS>/<images> (JPEG/PNG by extension). Directories outside
// the four class names raise UnknownClassDirectory; a missing or empty class
// raises EmptyClass. Deterministic: entries sorted, digest over the entry
// list.
DatasetManifest build_manifest(const std::filesystem::path& root);

// Recomputes the digest for an in-memory manifest (used when tests fabricate
// manifests without touching the filesystem).
std::string manifest_digest(const std::vector<ManifestEntry>& entries);

}  // namespace ff
