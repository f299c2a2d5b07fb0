#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace ff {

struct AdamHyperparams {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Flat views over parameter / gradient storage; Adam is agnostic to tensor
// structure.
struct ParamView {
  double* data;
  std::int64_t size;
};
struct GradView {
  const double* data;
  std::int64_t size;
};

struct AdamState {
  std::int64_t t = 0;                // completed steps
  std::vector<Eigen::VectorXd> m;    // first moment, zero-initialized
  std::vector<Eigen::VectorXd> n;    // second moment, elementwise >= 0

  static AdamState zeros_like(std::span<const ParamView> params);
};

// One update:
//   m <- b1 m + (1-b1) g
//   n <- b2 n + (1-b2) g^2
//   m^ = m / (1 - b1^t),  n^ = n / (1 - b2^t)     (t incremented first)
//   theta <- theta - alpha * m^ / (sqrt(n^) + eps)
void adam_step(AdamState& state, std::span<const ParamView> params,
               std::span<const GradView> grads, const AdamHyperparams& hp);

}  // namespace ff
