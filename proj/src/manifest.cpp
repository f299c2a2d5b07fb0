#include "ff/manifest.hpp"

#include <algorithm>
#include <cctype>

#include "ff/digest.hpp"
#include "ff/errors.hpp"

namespace ff {

namespace {

std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::string_view to_string(ClassLabel label) {
  return kClassNames[static_cast<std::size_t>(label)];
}

ClassLabel class_from_string(std::string_view name) {
  const std::string upper = to_upper(name);
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (upper == kClassNames[i]) return static_cast<ClassLabel>(i);
  }
  throw UnknownClassDirectory("unknown class '" + std::string(name) + "'");
}

std::array<std::int64_t, 4> DatasetManifest::per_class_counts() const {
  std::array<std::int64_t, 4> counts{0, 0, 0, 0};
  for (const auto& e : entries) counts[static_cast<std::size_t>(e.label)] += 1;
  return counts;
}

const ManifestEntry& DatasetManifest::find(const std::string& image_id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), image_id,
                             [](const ManifestEntry& e, const std::string& id) {
                               return e.image_id < id;
                             });
  if (it == entries.end() || it->image_id != image_id) {
    throw InvalidConfig("manifest: unknown image id '" + image_id + "'");
  }
  return *it;
}

std::string manifest_digest(const std::vector<ManifestEntry>& entries) {
  Sha256 h;
  for (const auto& e : entries) {
    h.update(e.image_id);
    h.update("|");
    h.update(e.relative_path);
    h.update("|");
    h.update(to_string(e.label));
    h.update("\n");
  }
  return h.hex();
}

DatasetManifest build_manifest(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IOFailure("dataset root is not a directory: " + root.string());
  }

  DatasetManifest manifest;
  manifest.root = root;

  std::array<bool, 4> seen{false, false, false, false};
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string dir_name = entry.path().filename().string();
    const ClassLabel label = class_from_string(dir_name);  // throws on strangers
    seen[static_cast<std::size_t>(label)] = true;

    for (const auto& file : std::filesystem::directory_iterator(entry.path())) {
      if (!file.is_regular_file() || !has_image_extension(file.path())) continue;
      ManifestEntry me;
      me.relative_path = dir_name + "/" + file.path().filename().string();
      me.image_id = me.relative_path;
      me.label = label;
      manifest.entries.push_back(std::move(me));
    }
  }

  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.relative_path < b.relative_path;
            });

  const auto counts = manifest.per_class_counts();
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i] || counts[i] == 0) {
      throw EmptyClass("class " + std::string(kClassNames[i]) +
                       " is missing or empty under " + root.string());
    }
  }

  manifest.root_digest = manifest_digest(manifest.entries);
  return manifest;
}

}  // namespace ff
