#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ff/manifest.hpp"

namespace ff {

enum class Protocol { kFull500, kKshot };

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);

// Published per-class distribution of the 10,000-image benchmark subset:
// train 119/122/121/138, val 357/364/365/414, test 1904/1944/1944/2208.
struct Full500Counts {
  std::array<std::int64_t, 4> train;
  std::array<std::int64_t, 4> val;
  std::array<std::int64_t, 4> test;
  std::array<std::int64_t, 4> total;
};
const Full500Counts& full500_counts();

struct SplitCounts {
  std::int64_t train = 0, val = 0, test = 0;
};

struct SplitPlan {
  Protocol protocol = Protocol::kFull500;
  int k = 0;  // KSHOT only
  std::uint64_t seed = 0;
  std::string manifest_digest;
  std::vector<std::string> train, val, test;  // image ids, each sorted
  std::array<SplitCounts, 4> per_class;

  std::int64_t total() const {
    return static_cast<std::int64_t>(train.size() + val.size() + test.size());
  }
};

// Seeded per-class permutation. If a class holds more images than the
// published total, a subsample of exactly that total is drawn first;
// fewer raises InsufficientImages. Counts match the published table exactly.
SplitPlan make_full_split(const DatasetManifest& manifest, std::uint64_t seed);

// Exactly k training images per class; the per-class remainder r splits
// floor(r/10) validation, r - floor(r/10) test. Classes need > k images.
SplitPlan make_kshot_split(const DatasetManifest& manifest, int k, std::uint64_t seed);

std::string split_to_json(const SplitPlan& plan);
SplitPlan split_from_json(const std::string& json_text);
void save_split(const SplitPlan& plan, const std::filesystem::path& file);
SplitPlan load_split(const std::filesystem::path& file);

}  // namespace ff
