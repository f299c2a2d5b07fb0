#include "ff/loss.hpp"

#include <cmath>

#include "ff/errors.hpp"

namespace ff {

namespace {
constexpr double kProbFloor = 1e-12;
constexpr double kSimplexTol = 1e-6;
}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - peak).exp().matrix();
  return e / e.sum();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out.row(r) = softmax(logits.row(r).transpose()).transpose();
  }
  return out;
}

double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0) {
    throw InvalidDistribution("cross_entropy: p and q sizes disagree");
  }
  if (p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > kSimplexTol) {
    throw InvalidDistribution("cross_entropy: p is not a probability distribution");
  }
  int ones = 0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) == 1.0) {
      ++ones;
    } else if (q(i) != 0.0) {
      throw InvalidDistribution("cross_entropy: q must be one-hot");
    }
  }
  if (ones != 1) throw InvalidDistribution("cross_entropy: q must have exactly one 1");

  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) != 0.0) loss -= q(i) * std::log(std::max(p(i), kProbFloor));
  }
  return loss;
}

double softmax_cross_entropy_mean(const Eigen::MatrixXd& logits,
                                  const std::vector<int>& labels,
                                  Eigen::MatrixXd* dlogits) {
  const Eigen::Index b = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != b || b == 0) {
    throw LengthMismatch("softmax_cross_entropy_mean: batch/label count disagree");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) {
      throw OutOfRangeLabel("softmax_cross_entropy_mean: label " + std::to_string(y) +
                            " outside [0," + std::to_string(logits.cols()) + ")");
    }
  }

  const Eigen::MatrixXd probs = softmax_rows(logits);
  double total = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    total -= std::log(std::max(probs(r, labels[static_cast<std::size_t>(r)]), kProbFloor));
  }
  if (dlogits) {
    *dlogits = probs;
    for (Eigen::Index r = 0; r < b; ++r) {
      (*dlogits)(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    }
    *dlogits /= static_cast<double>(b);
  }
  return total / static_cast<double>(b);
}

}  // namespace ff
