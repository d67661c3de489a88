#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape owns every value produced during a forward pass. Operations append a
// node holding the output value, the ids of their inputs, and (when any input
// requires a gradient and the tape is recording) a closure that pushes the
// output gradient back to the inputs. Nodes are appended in evaluation order,
// so the node list is already topologically sorted and backward() is a single
// reverse sweep.

#include <cstddef>
#include <functional>
#include <vector>

#include "unimom/diff/tensor.hpp"

namespace unimom::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar loss with respect to the leaf variables of a tape.
class GradientMap {
 public:
  /// Gradient for `leaf`; a zero tensor when the loss does not depend on it.
  const Tensor& operator[](const Var& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::size_t> slot_;  // node id -> index into grads_, or npos
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// A non-recording tape never stores backward closures; use it for inference.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient on backward().
  Var variable(Tensor value);

  /// Populate gradients for every leaf variable reachable from `loss`.
  /// Throws if `loss` is not a one-element tensor or the tape is empty.
  GradientMap backward(const Var& loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Operation-author interface.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  bool any_requires_grad(std::initializer_list<Var> inputs) const;
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  friend class Var;
  friend class GradientMap;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    bool has_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace unimom::diff
