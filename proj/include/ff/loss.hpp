#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ff {

// Numerically stable row-wise softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// -sum_i q_i ln(p_i) for a predicted distribution p and one-hot truth q.
// p must sum to 1 within 1e-6 with nonnegative entries and q must be one-hot
// (InvalidDistribution otherwise); p is clamped at 1e-12 before the log.
double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Mean softmax cross-entropy over a batch of logits with integer labels.
// When dlogits is non-null it receives d(mean loss)/d(logits).
double softmax_cross_entropy_mean(const Eigen::MatrixXd& logits,
                                  const std::vector<int>& labels,
                                  Eigen::MatrixXd* dlogits = nullptr);

}  // namespace ff
