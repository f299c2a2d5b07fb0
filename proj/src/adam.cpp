#include "ff/adam.hpp"

#include <cmath>

#include "ff/errors.hpp"

namespace ff {

void AdamHyperparams::validate() const {
  if (!(alpha > 0.0 || alpha == 0.0)) throw InvalidConfig("adam: alpha must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidConfig("adam: beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("adam: beta2 must lie in [0,1)");
  if (!(epsilon > 0.0)) throw InvalidConfig("adam: epsilon must be > 0");
}

AdamState AdamState::zeros_like(std::span<const ParamView> params) {
  AdamState s;
  s.m.reserve(params.size());
  s.n.reserve(params.size());
  for (const ParamView& p : params) {
    s.m.push_back(Eigen::VectorXd::Zero(p.size));
    s.n.push_back(Eigen::VectorXd::Zero(p.size));
  }
  return s;
}

void adam_step(AdamState& state, std::span<const ParamView> params,
               std::span<const GradView> grads, const AdamHyperparams& hp) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeMismatch("adam_step: tensor count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamView& p = params[i];
    const GradView& g = grads[i];
    if (p.size != g.size || p.size != state.m[i].size()) {
      throw ShapeMismatch("adam_step: tensor " + std::to_string(i) + " size mismatch");
    }
    double* m = state.m[i].data();
    double* n = state.n[i].data();
    for (std::int64_t j = 0; j < p.size; ++j) {
      const double gj = g.data[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
      n[j] = hp.beta2 * n[j] + (1.0 - hp.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double n_hat = n[j] / bc2;
      p.data[j] -= hp.alpha * m_hat / (std::sqrt(n_hat) + hp.epsilon);
    }
  }
}

}  // namespace ff
