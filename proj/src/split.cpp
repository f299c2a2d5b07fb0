#include "ff/split.hpp"

#include <algorithm>
#include <fstream>

#include "ff/errors.hpp"
#include "ff/rng.hpp"
#include "json.hpp"

namespace ff {

namespace {

constexpr std::uint64_t kStreamSplitBase = 0x5B000000;

std::array<std::vector<std::string>, 4> ids_by_class(const DatasetManifest& manifest) {
  std::array<std::vector<std::string>, 4> by_class;
  for (const auto& e : manifest.entries) {
    by_class[static_cast<std::size_t>(e.label)].push_back(e.image_id);
  }
  // Manifest order is already sorted; sort defensively so fabricated
  // manifests shuffle from the same canonical base.
  for (auto& ids : by_class) std::sort(ids.begin(), ids.end());
  return by_class;
}

void append_sorted(std::vector<std::string>& dst, std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  dst.insert(dst.end(), std::make_move_iterator(ids.begin()),
             std::make_move_iterator(ids.end()));
}

}  // namespace

std::string_view to_string(Protocol p) {
  return p == Protocol::kFull500 ? "FULL_500" : "KSHOT";
}

Protocol protocol_from_string(std::string_view s) {
  std::string upper(s);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "FULL_500" || upper == "FULL") return Protocol::kFull500;
  if (upper == "KSHOT" || upper == "K_SHOT") return Protocol::kKshot;
  throw InvalidConfig("unknown protocol '" + std::string(s) + "'");
}

const Full500Counts& full500_counts() {
  static const Full500Counts counts = {
      {119, 122, 121, 138},
      {357, 364, 365, 414},
      {1904, 1944, 1944, 2208},
      {2380, 2430, 2430, 2760},
  };
  return counts;
}

SplitPlan make_full_split(const DatasetManifest& manifest, std::uint64_t seed) {
  const Full500Counts& table = full500_counts();
  auto by_class = ids_by_class(manifest);

  SplitPlan plan;
  plan.protocol = Protocol::kFull500;
  plan.seed = seed;
  plan.manifest_digest = manifest.root_digest;

  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& ids = by_class[c];
    const std::int64_t need = table.total[c];
    if (static_cast<std::int64_t>(ids.size()) < need) {
      throw InsufficientImages("class " + std::string(kClassNames[c]) + " has " +
                               std::to_string(ids.size()) + " images, protocol needs " +
                               std::to_string(need));
    }
    Rng rng(Rng::derive(seed, kStreamSplitBase + c));
    rng.shuffle(ids);
    // Oversized classes are first subsampled to the published total; the
    // shuffled prefix is that subsample.
    auto cursor = ids.begin();
    std::vector<std::string> train_ids(cursor, cursor + table.train[c]);
    cursor += table.train[c];
    std::vector<std::string> val_ids(cursor, cursor + table.val[c]);
    cursor += table.val[c];
    std::vector<std::string> test_ids(cursor, cursor + table.test[c]);

    plan.per_class[c] = {table.train[c], table.val[c], table.test[c]};
    append_sorted(plan.train, std::move(train_ids));
    append_sorted(plan.val, std::move(val_ids));
    append_sorted(plan.test, std::move(test_ids));
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

SplitPlan make_kshot_split(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 1) throw InvalidConfig("kshot: k must be >= 1");
  auto by_class = ids_by_class(manifest);

  SplitPlan plan;
  plan.protocol = Protocol::kKshot;
  plan.k = k;
  plan.seed = seed;
  plan.manifest_digest = manifest.root_digest;

  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& ids = by_class[c];
    if (static_cast<std::int64_t>(ids.size()) <= k) {
      throw InsufficientImages("class " + std::string(kClassNames[c]) + " has " +
                               std::to_string(ids.size()) +
                               " images, k-shot needs more than " + std::to_string(k));
    }
    Rng rng(Rng::derive(seed, kStreamSplitBase + c));
    rng.shuffle(ids);

    const std::int64_t remainder = static_cast<std::int64_t>(ids.size()) - k;
    const std::int64_t val_n = remainder / 10;  // 1:9 with floor on val
    const std::int64_t test_n = remainder - val_n;

    auto cursor = ids.begin();
    std::vector<std::string> train_ids(cursor, cursor + k);
    cursor += k;
    std::vector<std::string> val_ids(cursor, cursor + val_n);
    cursor += val_n;
    std::vector<std::string> test_ids(cursor, ids.end());

    plan.per_class[c] = {k, val_n, test_n};
    append_sorted(plan.train, std::move(train_ids));
    append_sorted(plan.val, std::move(val_ids));
    append_sorted(plan.test, std::move(test_ids));
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

std::string split_to_json(const SplitPlan& plan) {
  nlohmann::json j;
  j["protocol"] = std::string(to_string(plan.protocol));
  if (plan.protocol == Protocol::kKshot) j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["manifest_digest"] = plan.manifest_digest;
  j["class_order"] = kClassNames;
  nlohmann::json per_class;
  for (std::size_t c = 0; c < plan.per_class.size(); ++c) {
    per_class[std::string(kClassNames[c])] = {{"train", plan.per_class[c].train},
                                              {"val", plan.per_class[c].val},
                                              {"test", plan.per_class[c].test}};
  }
  j["per_class_counts"] = per_class;
  j["train"] = plan.train;
  j["val"] = plan.val;
  j["test"] = plan.test;
  return j.dump(2) + "\n";
}

SplitPlan split_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SplitPlan plan;
  plan.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  plan.k = j.value("k", 0);
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.manifest_digest = j.value("manifest_digest", "");
  plan.train = j.at("train").get<std::vector<std::string>>();
  plan.val = j.at("val").get<std::vector<std::string>>();
  plan.test = j.at("test").get<std::vector<std::string>>();
  if (j.contains("per_class_counts")) {
    for (std::size_t c = 0; c < kClassNames.size(); ++c) {
      const auto& pc = j["per_class_counts"].at(std::string(kClassNames[c]));
      plan.per_class[c] = {pc.at("train").get<std::int64_t>(),
                           pc.at("val").get<std::int64_t>(),
                           pc.at("test").get<std::int64_t>()};
    }
  }
  return plan;
}

void save_split(const SplitPlan& plan, const std::filesystem::path& file) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IOFailure("cannot write " + tmp);
    out << split_to_json(plan);
  }
  std::filesystem::rename(tmp, file);
}

SplitPlan load_split(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IOFailure("cannot open split plan " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return split_from_json(text);
}

}  // namespace ff
