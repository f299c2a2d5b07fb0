#include "ff/trainer.hpp"

#include <array>
#include <cstdio>
#include <numeric>

#include "ff/errors.hpp"
#include "ff/loss.hpp"

namespace ff {

namespace {

// Derivation streams off TrainConfig::seed.
constexpr std::uint64_t kStreamDropout = 0xD0;
constexpr std::uint64_t kStreamShuffleBase = 0x51000000;

std::array<ParamView, 6> trainable_views(TaskHead& head) {
  return {{{head.linear_w.data(), head.linear_w.size()},
           {head.linear_b.data(), head.linear_b.size()},
           {head.bn_scale.data(), head.bn_scale.size()},
           {head.bn_shift.data(), head.bn_shift.size()},
           {head.fc_w.data(), head.fc_w.size()},
           {head.fc_b.data(), head.fc_b.size()}}};
}

std::array<GradView, 6> grad_views(const HeadGrads& g) {
  return {{{g.linear_w.data(), g.linear_w.size()},
           {g.linear_b.data(), g.linear_b.size()},
           {g.bn_scale.data(), g.bn_scale.size()},
           {g.bn_shift.data(), g.bn_shift.size()},
           {g.fc_w.data(), g.fc_w.size()},
           {g.fc_b.data(), g.fc_b.size()}}};
}

double eval_accuracy(const TaskHead& head, const Eigen::MatrixXd& x,
                     const std::vector<int>& y) {
  if (x.rows() == 0) return 0.0;
  const std::vector<int> preds = predict(head, x);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (preds[i] == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

}  // namespace

std::string_view to_string(Selection s) {
  return s == Selection::kBestValAccuracy ? "best" : "final";
}

Selection selection_from_string(std::string_view s) {
  if (s == "best") return Selection::kBestValAccuracy;
  if (s == "final") return Selection::kFinalEpoch;
  throw InvalidConfig("unknown selection '" + std::string(s) + "' (use best|final)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidConfig("train: epochs must be >= 1");
  if (batch_size < 2) throw InvalidConfig("train: batch_size must be >= 2");
  adam.validate();
}

TrainResult train_head(TaskHead head, const Eigen::MatrixXd& train_x,
                       const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                       const std::vector<int>& val_y, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = train_x.rows();
  if (n < 2) throw BatchTooSmall("train_head: need at least 2 training samples");
  if (train_x.cols() != head.config.input_dim) {
    throw DimensionError("train_head: train feature width != head input_dim");
  }
  if (val_x.rows() > 0 && val_x.cols() != head.config.input_dim) {
    throw DimensionError("train_head: val feature width != head input_dim");
  }
  if (static_cast<Eigen::Index>(train_y.size()) != n ||
      static_cast<Eigen::Index>(val_y.size()) != val_x.rows()) {
    throw LengthMismatch("train_head: label count != sample count");
  }
  for (int y : train_y) {
    if (y < 0 || y >= head.config.num_classes) {
      throw OutOfRangeLabel("train_head: label " + std::to_string(y) + " out of range");
    }
  }
  if (cfg.selection == Selection::kBestValAccuracy && val_x.rows() == 0) {
    throw InvalidConfig("train_head: best-checkpoint selection needs validation data");
  }

  Rng dropout_rng(Rng::derive(cfg.seed, kStreamDropout));
  AdamState adam;
  {
    auto views = trainable_views(head);
    adam = AdamState::zeros_like(views);
  }

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));
  TaskHead best = head;
  double best_acc = -1.0;
  int best_epoch = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, kStreamShuffleBase + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    // Consecutive chunks; a trailing chunk of one sample joins its
    // predecessor (BatchNorm needs >= 2).
    std::vector<std::pair<std::size_t, std::size_t>> batches;  // [begin, end)
    for (std::size_t begin = 0; begin < order.size();) {
      const std::size_t end = std::min(begin + static_cast<std::size_t>(cfg.batch_size),
                                       order.size());
      batches.emplace_back(begin, end);
      begin = end;
    }
    if (batches.size() >= 2 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    for (const auto& [begin, end] : batches) {
      const Eigen::Index bsize = static_cast<Eigen::Index>(end - begin);
      Eigen::MatrixXd xb(bsize, head.config.input_dim);
      std::vector<int> yb(static_cast<std::size_t>(bsize));
      for (Eigen::Index i = 0; i < bsize; ++i) {
        const std::size_t src = order[begin + static_cast<std::size_t>(i)];
        xb.row(i) = train_x.row(static_cast<Eigen::Index>(src));
        yb[static_cast<std::size_t>(i)] = train_y[src];
      }

      HeadForwardCache cache;
      const Eigen::MatrixXd logits =
          head_forward(head, xb, HeadMode::kTrain, &dropout_rng, &cache);
      Eigen::MatrixXd dlogits;
      const double loss = softmax_cross_entropy_mean(logits, yb, &dlogits);
      loss_sum += loss * static_cast<double>(bsize);

      const HeadGrads grads = head_backward(head, cache, dlogits);
      auto pviews = trainable_views(head);
      auto gviews = grad_views(grads);
      adam_step(adam, pviews, gviews, cfg.adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.val_accuracy = eval_accuracy(head, val_x, val_y);
    result.history.push_back(stats);

    if (stats.val_accuracy > best_acc) {
      best_acc = stats.val_accuracy;
      best = head;
      best_epoch = epoch;
    }
  }

  if (cfg.selection == Selection::kBestValAccuracy) {
    result.head = std::move(best);
    result.selected_epoch = best_epoch;
  } else {
    result.head = std::move(head);
    result.selected_epoch = cfg.epochs;
  }
  return result;
}

std::vector<int> predict(const TaskHead& head, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd logits = head_forward(head, features);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,val_accuracy\n";
  char line[128];
  for (const EpochStats& e : history) {
    std::snprintf(line, sizeof(line), "%d,%.12g,%.12g\n", e.epoch, e.train_loss,
                  e.val_accuracy);
    out += line;
  }
  return out;
}

}  // namespace ff
