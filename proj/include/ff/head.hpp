#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ff/backbone.hpp"
#include "ff/rng.hpp"

namespace ff {

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// The only trainable component of the system: Linear -> BatchNorm -> ReLU ->
// Dropout -> FC over fused backbone features.
struct TaskHeadConfig {
  int input_dim = 0;
  int hidden_dim = 1024;
  int num_classes = 4;
  double dropout_p = 0.5;

  // input*hidden + hidden + 2*hidden + hidden*classes + classes
  std::int64_t trainable_param_count() const;
  void validate() const;
};

enum class HeadMode { kTrain, kEval };

struct TaskHead {
  TaskHeadConfig config;
  Eigen::MatrixXd linear_w;  // hidden x input
  Eigen::VectorXd linear_b;
  Eigen::VectorXd bn_scale, bn_shift;
  Eigen::VectorXd bn_running_mean, bn_running_var;
  Eigen::MatrixXd fc_w;  // classes x hidden
  Eigen::VectorXd fc_b;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  // Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, BN
  // scale 1 / shift 0, running stats (0, 1). Fill order is fixed so a seed
  // pins every byte.
  static TaskHead init(const TaskHeadConfig& config, std::uint64_t seed);
};

// Gradients for the six trainable tensors, same layouts as TaskHead.
struct HeadGrads {
  Eigen::MatrixXd linear_w;
  Eigen::VectorXd linear_b, bn_scale, bn_shift;
  Eigen::MatrixXd fc_w;
  Eigen::VectorXd fc_b;
};

// Activations recorded by the training-mode forward for the backward pass.
struct HeadForwardCache {
  Eigen::MatrixXd input;       // B x D
  Eigen::MatrixXd centered;    // pre-BN minus batch mean
  Eigen::MatrixXd normalized;  // x-hat
  Eigen::VectorXd inv_std;     // 1/sqrt(var_b + eps)
  Eigen::MatrixXd relu_mask;   // 0/1
  Eigen::MatrixXd drop_mask;   // 0 or 1/(1-p)
  Eigen::MatrixXd dropped;     // input to FC
};

// Deterministic EVAL forward: BN running statistics, Dropout identity.
Eigen::MatrixXd head_forward(const TaskHead& head, const Eigen::MatrixXd& batch);

// Mode-dispatching forward. TRAIN uses batch statistics (batch size >= 2),
// draws a dropout mask from rng, and updates running statistics.
Eigen::MatrixXd head_forward(TaskHead& head, const Eigen::MatrixXd& batch, HeadMode mode,
                             Rng* dropout_rng = nullptr, HeadForwardCache* cache = nullptr);

// Backward through FC/Dropout/ReLU/BN(batch stats)/Linear given dL/dlogits.
HeadGrads head_backward(const TaskHead& head, const HeadForwardCache& cache,
                        const Eigen::MatrixXd& dlogits);

// --- feature fusion ---------------------------------------------------------

struct FusedFeature {
  std::vector<float> vector;
  std::string source_id;
  std::vector<BackboneId> order;
};

// Ordered concatenation; lengths are validated against each backbone's width.
FusedFeature fuse(std::span<const std::vector<float>> features,
                  std::span<const BackboneId> order, std::string source_id = {});

// Row-wise fusion of per-backbone feature matrices (same row count each).
FeatureMatrix fuse_rows(std::span<const FeatureMatrix> per_backbone,
                        std::span<const BackboneId> order);

std::int64_t fused_input_dim(std::span<const BackboneId> order);

// --- parameter accounting ----------------------------------------------------

enum class CountMode { kFrozen, kFromScratch };

struct ParamReport {
  std::int64_t trainable = 0;
  std::int64_t total = 0;
};

// FROZEN counts only the head as trainable; FROM_SCRATCH counts the headless
// backbones plus the head. total is the whole system either way.
ParamReport count_params(std::span<const BackboneId> backbones, const TaskHeadConfig& head,
                         CountMode mode);

// "3.677 M"-style formatting: count / 1e6, 3 decimals, half away from zero.
std::string format_millions(std::int64_t count);

// --- checkpoints -------------------------------------------------------------

struct HeadCheckpointMeta {
  std::vector<BackboneId> backbone_order;
  std::uint64_t seed = 0;
  std::string selection;
  int selected_epoch = 0;
};

// Named-tensor archive plus a "<file>.json" sidecar with config + metadata.
void save_head_checkpoint(const TaskHead& head, const HeadCheckpointMeta& meta,
                          const std::filesystem::path& file);
TaskHead load_head_checkpoint(const std::filesystem::path& file,
                              HeadCheckpointMeta* meta = nullptr);

}  // namespace ff
