#include "dsk/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace dsk {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_numel(shape_) != values_.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape_) + " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape()); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size()) {
    throw std::out_of_range("dim " + std::to_string(i) + " out of range for shape " +
                            shape_string(shape_));
  }
  return shape_[i];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw std::invalid_argument("item() on non-scalar tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

Tensor Tensor::detached() const { return Tensor(shape_, values_); }

std::span<const double> Gradients::of(const Tensor& leaf) const {
  auto it = by_node_.find(leaf.node());
  if (it == by_node_.end()) return {};
  return it->second;
}

std::vector<double> Gradients::dense(const Tensor& leaf) const {
  auto g = of(leaf);
  if (g.empty()) return std::vector<double>(leaf.size(), 0.0);
  return {g.begin(), g.end()};
}

Tensor Tape::watch(Tensor t) {
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), {}, {}});
  return t;
}

Tensor Tape::record(Tensor out, std::vector<int> inputs, Backward fn) {
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{out.size(), std::move(inputs), std::move(fn)});
  return out;
}

std::span<double> Tape::grad_of(int node) {
  if (node < 0) return {};
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].numel, 0.0);
  return g;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {1.0};

  Gradients out;
  for (int i = loss.node(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;
    if (!node.fn) {
      out.by_node_.emplace(i, std::move(g));
      continue;
    }
    node.fn(g, *this);
    // Interior gradients are no longer needed once propagated.
    std::vector<double>().swap(g);
  }
  grads_.clear();
  return out;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

ParameterSet watch_all(Tape& tape, const ParameterSet& params) {
  ParameterSet bound;
  for (const auto& [name, t] : params) bound.emplace(name, tape.watch(t.detached()));
  return bound;
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

}  // namespace dsk
