#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mtln {

/// Extents, outermost first. 4-D activations are NCHW.
using Dims = std::vector<int>;

std::size_t element_count(const Dims& dims);
std::string to_string(const Dims& dims);

namespace detail {
struct TensorNode;
}

class Tape;

/// Dense f32 array with an optional gradient buffer.
///
/// A Tensor is a cheap handle: copies share the same node. Values never change
/// after construction. Tracked tensors take part in reverse-mode
/// differentiation; leaves (parameters, inputs under test) are tracked
/// explicitly, op outputs inherit tracking from their inputs.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Dims dims, std::vector<float> values, bool tracked = false);

  static Tensor zeros(Dims dims, bool tracked = false);
  static Tensor filled(Dims dims, float value, bool tracked = false);
  static Tensor scalar(float value, bool tracked = false);

  bool defined() const { return node_ != nullptr; }
  const Dims& dims() const;
  int dim(std::size_t axis) const;
  std::size_t rank() const { return dims().size(); }
  std::size_t size() const;
  std::span<const float> values() const;
  float item() const;
  std::uint64_t id() const;

  bool tracked() const;
  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const float> grad() const;
  /// Gradient buffer for accumulation; allocated as zeros on first use.
  std::span<float> grad_buffer() const;
  void zero_grad() const;

  /// Same values in a fresh node, untracked.
  Tensor detached() const;
  /// Same values in a fresh tracked leaf node.
  Tensor as_leaf() const;

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of the ops executed since the last backward pass.
///
/// Ops append entries in execution order, so the record is already
/// topologically sorted. backward() walks it in reverse and then clears it;
/// calling backward() again without a new forward pass is an error.
class Tape {
 public:
  /// Receives the gradient of the entry's output and accumulates into the
  /// gradients of the inputs it captured.
  using BackwardFn = std::function<void(std::span<const float> grad_output)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  /// Registers `output` as computed from `inputs`. If recording and any input
  /// is tracked, the output becomes tracked and `fn` is stored for backward.
  Tensor record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn fn);
  Tensor record(Tensor output, std::span<const Tensor> inputs, BackwardFn fn);

  /// Propagates d(loss)/d(.) to every tracked tensor recorded on this tape
  /// and consumes the tape.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool recording_;
  bool consumed_ = false;
};

/// Throws NumericError naming `op` if any value is NaN or infinite.
void require_finite(std::span<const float> values, const char* op);

}  // namespace mtln
