#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "mas/rng.hpp"

namespace mas::ndgrad {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Eigen peels unaligned prefixes with scalar
/// code, so results would otherwise depend on where malloc put a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl;

/// Record of the operation that produced a tensor. `backward` reads the
/// output's gradient and accumulates into the gradients of `inputs`.
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  Buffer values;
  Buffer grad;  // empty when no gradient has been allocated
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  /// Allocates a zero gradient on first use.
  std::span<double> grad_buffer();
};

/// Dense n-dimensional array of doubles that may participate in reverse-mode
/// differentiation.
///
/// Tensor is a handle: copies share storage and graph position, which is what
/// lets an operation record its parents. Use clone() or detach() for an
/// independent value.
class Tensor {
 public:
  Tensor();
  explicit Tensor(std::shared_ptr<TensorImpl> impl);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, CounterRng& rng, double stddev, bool requires_grad = false);
  static Tensor uniform(Shape shape, CounterRng& rng, double lo, double hi, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  /// Mutable view for leaves (parameters, inputs). Mutating a tensor that is
  /// already on a graph invalidates that graph's gradients.
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double at(std::size_t flat_index) const { return impl_->values.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool on_graph() const { return static_cast<bool>(impl_->node); }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  /// Same values, no graph, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of values that keeps the gradient requirement but not the graph.
  Tensor clone() const;

  /// Reverse-mode pass from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed.
  void backward() const;

  /// Drops the producing node so the graph behind this tensor can be freed.
  void release_graph();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Trainable tensor with a model-unique name.
struct Parameter {
  Tensor tensor;
  std::string name;
  bool trainable = true;
};

/// Whether new operations record graph nodes on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result; attaches a node when grad mode is on and any input
/// requires a gradient.
Tensor make_result(const char* op, Shape shape, Buffer values,
                   std::vector<std::shared_ptr<TensorImpl>> inputs,
                   std::function<void(TensorImpl&)> backward);

}  // namespace detail

}  // namespace mas::ndgrad
