#include "title_forge/tensor.hpp"

#include <algorithm>
#include <atomic>

#include "title_forge/error.hpp"

namespace title_forge {
namespace {
std::atomic<std::uint64_t> next_generation{1};
}

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw Error(Errc::ShapeMismatch, "shape " + shape_string(shape) + " does not hold " +
                                         std::to_string(values.size()) + " values");
  }
  for (auto d : shape) {
    if (d == 0) throw Error(Errc::ShapeMismatch, "zero extent in shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw Error(Errc::NotScalar, "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <class T>
void BasicTensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(node_->shape, node_->value, node_->requires_grad);
}

template <class T>
BasicTape<T>::BasicTape() : generation_(next_generation.fetch_add(1)) {}

template <class T>
void BasicTape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(Errc::NotScalar, "backward needs a one-element loss");
  }
  const auto& node = loss.node();
  if (!open_ || node->tape != this || node->generation != generation_) {
    throw Error(Errc::TapeClosed, "loss was not produced by the current recording of this tape");
  }
  open_ = false;
  node->ensure_grad();
  node->grad[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

template <class T>
void BasicTape<T>::reset() {
  nodes_.clear();
  generation_ = next_generation.fetch_add(1);
  open_ = true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace title_forge
