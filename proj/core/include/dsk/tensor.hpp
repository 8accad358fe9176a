#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dsk {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tape;

// Dense row-major f64 tensor. A tensor produced by an operation on at least
// one tracked input is itself tracked: it carries the id of the node that
// produced it on the owning tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t i) const;

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double item() const;

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Same values, no tape association.
  Tensor detached() const;

 private:
  friend class Tape;

  Shape shape_;
  std::vector<double> values_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Gradients of a scalar loss with respect to the leaves watched on a tape.
class Gradients {
 public:
  // Empty span means "no path from the loss": the gradient is zero.
  std::span<const double> of(const Tensor& leaf) const;
  std::vector<double> dense(const Tensor& leaf) const;

 private:
  friend class Tape;
  std::unordered_map<int, std::vector<double>> by_node_;
};

// Records operations for reverse-mode differentiation. A tape is used by a
// single thread; independent tapes may live on different threads.
class Tape {
 public:
  using Backward = std::function<void(std::span<const double> grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `t` as a differentiable leaf and returns the tracked copy.
  Tensor watch(Tensor t);

  // Registers the output of an operation. `inputs` holds node ids of tracked
  // inputs (untracked inputs are -1 and skipped).
  Tensor record(Tensor out, std::vector<int> inputs, Backward fn);

  // Accumulation target for a backward function. Returns an empty span for
  // untracked inputs.
  std::span<double> grad_of(int node);

  Gradients backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::size_t numel = 0;
    std::vector<int> inputs;
    Backward fn;  // empty for leaves
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// Named parameter collection with deterministic (lexicographic) ordering.
using ParameterSet = std::map<std::string, Tensor>;

// Watches every parameter on `tape`, returning the tracked copies.
ParameterSet watch_all(Tape& tape, const ParameterSet& params);

std::size_t parameter_count(const ParameterSet& params);

}  // namespace dsk
