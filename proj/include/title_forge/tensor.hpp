#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace title_forge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

template <class T>
class BasicTape;

namespace detail {

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  const BasicTape<T>* tape = nullptr;
  std::uint64_t generation = 0;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

/// Dense row-major array. Copies share storage (handle semantics), which is
/// what lets recorded operations reach their inputs during backward; use
/// clone() for an independent copy.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T& at(std::size_t row, std::size_t col) { return node_->value[row * node_->shape.back() + col]; }
  const T& at(std::size_t row, std::size_t col) const { return node_->value[row * node_->shape.back() + col]; }

  /// Value of a one-element tensor; throws Error(NotScalar) otherwise.
  T item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  /// Zeroes an existing gradient buffer (allocation stays lazy).
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy of the values; not connected to any tape.
  BasicTensor clone() const;

  const std::shared_ptr<detail::TensorNode<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::TensorNode<T>> node_;
};

/// Ordered record of executed operations. Operations record themselves on
/// the tape made active by a TapeScope on the current thread; with no active
/// tape nothing is recorded (inference). Each recording supports one
/// backward pass; reset() discards it and starts a new one.
template <class T>
class BasicTape {
 public:
  using BackwardFn = std::function<void()>;

  BasicTape();
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  void record(BackwardFn fn) { nodes_.push_back(std::move(fn)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }
  bool open() const noexcept { return open_; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded node once, newest
  /// first. Gradients add into existing buffers. Throws Error(NotScalar) or
  /// Error(TapeClosed) when the loss was not produced by the current
  /// recording.
  void backward(const BasicTensor<T>& loss);

  void reset();

  static BasicTape* active() noexcept { return active_; }

 private:
  template <class>
  friend class TapeScope;

  std::vector<BackwardFn> nodes_;
  std::uint64_t generation_;
  bool open_ = true;

  static inline thread_local BasicTape* active_ = nullptr;
};

/// Makes a tape the active recorder for the current thread.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(BasicTape<T>& tape) : previous_(BasicTape<T>::active_) { BasicTape<T>::active_ = &tape; }
  ~TapeScope() { BasicTape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

using Tensor = BasicTensor<float>;
using Tape = BasicTape<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class BasicTape<float>;
extern template class BasicTape<double>;

}  // namespace title_forge
