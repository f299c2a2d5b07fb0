#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ff/image.hpp"
#include "ff/tensor.hpp"

namespace ff {

// Canonical ordering; feature fusion always concatenates in this order.
enum class BackboneId { kResNet18 = 0, kDenseNet121 = 1, kInceptionV3 = 2 };

constexpr std::array<BackboneId, 3> kAllBackbones = {
    BackboneId::kResNet18, BackboneId::kDenseNet121, BackboneId::kInceptionV3};

std::string_view to_string(BackboneId id);
BackboneId backbone_from_string(std::string_view name);

struct Normalization {
  std::array<float, 3> mean;
  std::array<float, 3> stddev;
};

struct BackboneSpec {
  BackboneId id;
  int feature_dim;         // width after global average pooling
  int input_size;          // pixels per side
  Normalization normalization;
  std::filesystem::path weight_source;  // named-tensor archive
};

// Fixed per-architecture facts: 512 / 1024 / 2048 output widths, 224 input,
// ImageNet channel statistics. weight_source is filled from weights_dir when
// given (<backbone_id>.weights, lowercase).
BackboneSpec backbone_spec(BackboneId id, const std::filesystem::path& weights_dir = {});
std::filesystem::path weights_path(BackboneId id, const std::filesystem::path& weights_dir);

// One named tensor the architecture requires from its archive. trainable
// distinguishes weights from batch-norm running statistics; only trainable
// tensors count toward parameter totals.
struct TensorSpecEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  bool trainable;
};

// Full tensor table for the headless architecture (classifier excluded; the
// Inception V3 auxiliary branch is excluded entirely). Declaration order is
// canonical and used for digests.
const std::vector<TensorSpecEntry>& backbone_tensor_specs(BackboneId id);

// Sum of shape products over trainable tensors.
std::int64_t headless_param_count(BackboneId id);
// Parameters of the architecture's published 1000-class classifier.
std::int64_t published_head_param_count(BackboneId id);

struct PreprocessedImage {
  Tensor pixels;  // 3 x input_size x input_size
  std::string source_id;
};

// Grayscale (or RGB collapsed to gray) -> replicate to 3 channels ->
// bilinear resize -> per-channel normalization.
PreprocessedImage preprocess(const RawImage& raw, const BackboneSpec& spec,
                             std::string source_id = {});

// Stable identifier of the preprocessing function + constants; part of every
// feature-cache key so stale features are never served.
std::string preprocess_digest(const BackboneSpec& spec);

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A loaded, weight-frozen, headless feature extractor. Immutable after
// construction; safe to share across threads.
class FrozenBackbone {
 public:
  const BackboneSpec& spec() const;
  std::int64_t param_count_headless() const;
  const std::string& weights_digest() const;

  // Batch of preprocessed images -> (batch x feature_dim) pooled features.
  // Rows follow input order. threads = 0 picks hardware concurrency.
  FeatureMatrix extract(std::span<const PreprocessedImage> batch, int threads = 0) const;

  // Re-hashes the loaded tensors; equals weights_digest() unless something
  // mutated frozen state.
  std::string recompute_digest() const;

 private:
  friend FrozenBackbone load_frozen_backbone(const BackboneSpec&);
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

// Reads spec.weight_source, validates every required tensor (MissingTensor /
// ShapeMismatch), and freezes the result.
FrozenBackbone load_frozen_backbone(const BackboneSpec& spec);

// Writes an archive with seeded random weights matching the architecture's
// tensor table. Stand-in for a real pretrained export: same file format,
// same names, same shapes.
void write_synthetic_weights(BackboneId id, const std::filesystem::path& file,
                             std::uint64_t seed);

}  // namespace ff
