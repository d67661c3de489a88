#include "unimom/diff/adam.hpp"

#include <cmath>

#include "unimom/error.hpp"

namespace unimom::diff {

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.values()) v *= scale;
    }
  }
  return norm;
}

void Adam::step(std::span<Parameter> params, std::vector<Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].shape() != params[p].value.shape()) {
      throw ShapeError("adam: gradient shape " + to_string(grads[p].shape()) +
                       " does not match parameter '" + params[p].name + "' of shape " +
                       to_string(params[p].value.shape()));
    }
    if (!grads[p].all_finite()) {
      throw DomainError("adam: non-finite gradient for parameter '" + params[p].name + "'");
    }
  }
  if (m_.empty()) {
    for (const Parameter& p : params) {
      m_.push_back(Tensor::zeros_like(p.value));
      v_.push_back(Tensor::zeros_like(p.value));
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter count changed between steps");
  }
  clip_global_norm(grads, config_.clip_norm);

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* w = params[p].value.data();
    double* m = m_[p].data();
    double* v = v_[p].data();
    const double* g = grads[p].data();
    for (std::size_t i = 0; i < params[p].value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace unimom::diff
