#pragma once

// Multi-gate mixture-of-experts network with three regression heads (fast,
// medium, slow) and a capital allocation head.
//
// Per asset row: n_experts stacked LSTMs read the feature sequence and emit
// their last hidden state. Each task gate maps the row's last-step features
// to a softmax over experts; the gated mixture feeds a tanh FNN producing a
// score in (-1, 1). The allocation gate maps the cross-sectional mean of the
// last-step features to a softmax over the three tasks. Each task's score
// vector is pooled per date into (mean, std, mean |y|), scaled by its gate
// weight, and concatenated with the gate output to form the 12 inputs of the
// allocation FNN, whose softmax output is the task mix for that date.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "unimom/diff/adam.hpp"
#include "unimom/diff/tape.hpp"
#include "unimom/model/input.hpp"

namespace unimom::model {

inline constexpr std::size_t kNumTasks = 3;
inline constexpr std::array<const char*, kNumTasks> kTaskNames{"fast", "medium", "slow"};
inline constexpr std::size_t kCanInputs = 4 * kNumTasks;

struct MmoeConfig {
  std::size_t n_experts = 3;
  std::size_t lstm_layers = 1;
  std::size_t lstm_hidden = 64;
  std::size_t task_layers = 2;  // affine layers per head, output layer included
  std::size_t task_hidden = 64;
  std::size_t sequence_length = 63;
  std::uint64_t seed = 0;

  bool operator==(const MmoeConfig&) const = default;
};

/// kStrict accepts only the hyperparameter search-space values. kRelaxed
/// accepts any positive size (toy models for tests and gradient checks).
enum class Validation { kStrict, kRelaxed };

/// Throws Error naming the offending field.
void validate(const MmoeConfig& config, Validation mode = Validation::kStrict);

std::string describe(const MmoeConfig& config);

class MmoeModel {
 public:
  MmoeModel() = default;

  const MmoeConfig& config() const { return config_; }
  std::vector<diff::Parameter>& parameters() { return params_; }
  const std::vector<diff::Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Index of the named parameter; throws Error if absent.
  std::size_t index_of(const std::string& name) const;

  bool operator==(const MmoeModel&) const;

 private:
  friend MmoeModel init_model(const MmoeConfig&, Validation);
  friend MmoeModel load_checkpoint(const std::filesystem::path&);

  MmoeConfig config_;
  std::vector<diff::Parameter> params_;
};

/// Glorot-uniform affine weights, zero biases except LSTM forget gates (1).
/// Deterministic in config.seed.
MmoeModel init_model(const MmoeConfig& config, Validation mode = Validation::kStrict);

/// Number of scalars a model of this shape holds, without building it.
std::size_t parameter_count(const MmoeConfig& config);

/// Prefix of the names of every parameter group, for tests and reporting:
/// "expert<e>", "gate.<task>", "gate.can", "head.<task>", "can".
std::vector<std::string> parameter_groups(const MmoeConfig& config);

struct ForwardResult {
  std::array<diff::Var, kNumTasks> scores;       // [R, 1] each
  diff::Var allocation;                          // [D, 3]
  std::array<diff::Var, kNumTasks> task_gates;   // [R, n_experts] each
  diff::Var allocation_gate;                     // [D, 3]
};

/// Leaves for every model parameter, in parameters() order.
std::vector<diff::Var> bind(diff::Tape& tape, const MmoeModel& model, bool trainable);

/// Builds the network on `tape`. `params` are leaves in parameters() order.
/// When `frozen_scores` is given, those [R, 1] tensors replace the task
/// head outputs as constants and the expert/task paths are not built.
/// Throws Error for an empty batch.
ForwardResult forward(diff::Tape& tape, const MmoeModel& model, std::span<const diff::Var> params,
                      const BatchInput& input,
                      const std::array<diff::Tensor, kNumTasks>* frozen_scores = nullptr);

/// Plain-value outputs of an inference pass.
struct Prediction {
  std::array<std::vector<double>, kNumTasks> scores;  // per row
  std::vector<std::array<double, kNumTasks>> allocation;  // per date
};

Prediction predict(const MmoeModel& model, const BatchInput& input);

/// Versioned binary dump of config and named parameters; reload is bit-exact.
void save_checkpoint(const MmoeModel& model, const std::filesystem::path& path);
MmoeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace unimom::model
