#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "ff/adam.hpp"
#include "ff/head.hpp"

namespace ff {

enum class Selection { kBestValAccuracy, kFinalEpoch };

std::string_view to_string(Selection s);
Selection selection_from_string(std::string_view s);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  AdamHyperparams adam;
  Selection selection = Selection::kBestValAccuracy;

  void validate() const;
};

struct EpochStats {
  int epoch;            // 1-based
  double train_loss;    // mean cross-entropy over the epoch's samples
  double val_accuracy;  // EVAL-mode accuracy after the epoch
};

struct TrainResult {
  TaskHead head;  // checkpoint chosen by cfg.selection
  std::vector<EpochStats> history;
  int selected_epoch = 0;
};

// Shuffled mini-batch Adam over head parameters only. All randomness
// (shuffling, dropout) derives from cfg.seed; identical inputs + seed give
// bitwise-identical results. A trailing batch smaller than 2 is merged into
// its predecessor so BatchNorm always sees at least two samples.
TrainResult train_head(TaskHead head, const Eigen::MatrixXd& train_x,
                       const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                       const std::vector<int>& val_y, const TrainConfig& cfg);

// EVAL-mode argmax per row; ties break toward the lowest class index.
std::vector<int> predict(const TaskHead& head, const Eigen::MatrixXd& features);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace ff
