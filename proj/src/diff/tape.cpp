#include "unimom/diff/tape.hpp"

#include <limits>

#include "unimom/error.hpp"

namespace unimom::diff {

namespace {
constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();
}

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->nodes_[id_].value;
}

bool Var::requires_grad() const { return tape_ && tape_->nodes_[id_].requires_grad; }

const Tensor& GradientMap::operator[](const Var& leaf) const {
  if (leaf.tape() != tape_ || leaf.id() >= slot_.size() || slot_[leaf.id()] == kNoSlot) {
    throw Error("gradient requested for a Var that is not a leaf variable of this tape");
  }
  return grads_[slot_[leaf.id()]];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

bool Tape::any_requires_grad(std::initializer_list<Var> inputs) const {
  if (!record_) return false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error("operation mixes Vars from different tapes");
    if (nodes_[v.id()].requires_grad) return true;
  }
  return false;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (std::size_t id : inputs) {
      if (nodes_[id].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

GradientMap Tape::backward(const Var& loss) {
  if (nodes_.empty()) throw Error("backward() on an empty tape");
  if (loss.tape() != this) throw Error("backward() on a Var from another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (nodes_[loss.id()].requires_grad) {
    grad(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  GradientMap out;
  out.tape_ = this;
  out.slot_.assign(nodes_.size(), kNoSlot);
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (!n.is_leaf || !n.requires_grad) continue;
    out.slot_[id] = out.grads_.size();
    out.grads_.push_back(n.has_grad ? n.grad : Tensor::zeros_like(n.value));
  }
  // Interior gradients are no longer needed.
  for (Node& n : nodes_) {
    if (!n.is_leaf) {
      n.grad = Tensor();
      n.has_grad = false;
    }
  }
  return out;
}

}  // namespace unimom::diff
