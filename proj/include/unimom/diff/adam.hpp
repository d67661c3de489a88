#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unimom/diff/tensor.hpp"

namespace unimom::diff {

/// A named trainable tensor.
struct Parameter {
  std::string name;
  Tensor value;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global-norm gradient clip applied before every step; <= 0 disables it.
  double clip_norm = 5.0;
};

/// Rescale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

/// Bias-corrected Adam. Moments are created lazily on the first step and
/// must keep matching the parameter shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Apply one update. Throws DomainError naming the parameter if a gradient
  /// holds NaN or Inf, and ShapeError on misaligned inputs. Gradients are
  /// taken by value because clipping rescales them.
  void step(std::span<Parameter> params, std::vector<Tensor> grads);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace unimom::diff
