#include "mtln/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "mtln/error.hpp"

namespace mtln {

namespace detail {

struct TensorNode {
  Dims dims;
  std::vector<float> values;
  std::vector<float> grad;
  bool tracked = false;
  std::uint64_t id = 0;
};

}  // namespace detail

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

const Dims kEmptyDims{};

}  // namespace

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d < 0) throw ShapeError("negative extent in " + to_string(dims));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

void require_finite(std::span<const float> values, const char* op) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

Tensor::Tensor(Dims dims, std::vector<float> values, bool tracked) {
  if (element_count(dims) != values.size()) {
    throw ShapeError("Tensor: " + std::to_string(values.size()) + " values for dims " + to_string(dims));
  }
  node_ = std::make_shared<detail::TensorNode>();
  node_->dims = std::move(dims);
  node_->values = std::move(values);
  node_->tracked = tracked;
  node_->id = next_id();
}

Tensor Tensor::zeros(Dims dims, bool tracked) { return filled(std::move(dims), 0.0f, tracked); }

Tensor Tensor::filled(Dims dims, float value, bool tracked) {
  const std::size_t n = element_count(dims);
  return Tensor(std::move(dims), std::vector<float>(n, value), tracked);
}

Tensor Tensor::scalar(float value, bool tracked) { return Tensor({1}, {value}, tracked); }

const Dims& Tensor::dims() const { return node_ ? node_->dims : kEmptyDims; }

int Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("Tensor::dim: axis out of range for " + to_string(dims()));
  return node_->dims[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->values.size() : 0; }

std::span<const float> Tensor::values() const {
  if (!node_) return {};
  return node_->values;
}

float Tensor::item() const {
  if (size() != 1) throw ShapeError("Tensor::item on tensor of dims " + to_string(dims()));
  return node_->values[0];
}

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

bool Tensor::tracked() const { return node_ && node_->tracked; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<float> Tensor::grad_buffer() const {
  if (!node_) throw Error("grad_buffer on undefined tensor");
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const { return Tensor(dims(), std::vector<float>(values().begin(), values().end())); }

Tensor Tensor::as_leaf() const {
  return Tensor(dims(), std::vector<float>(values().begin(), values().end()), true);
}

Tensor Tape::record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  return record(std::move(output), std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(fn));
}

Tensor Tape::record(Tensor output, std::span<const Tensor> inputs, BackwardFn fn) {
  if (!output.defined()) throw Error("Tape::record: undefined output");
  if (!recording_) return output;
  const bool any_tracked = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.tracked(); });
  if (!any_tracked) return output;
  output.node_->tracked = true;
  entries_.push_back(Entry{output, std::move(fn)});
  consumed_ = false;
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (entries_.empty()) {
    throw Error(consumed_ ? "Tape::backward: tape already consumed; run a new forward pass"
                          : "Tape::backward: nothing recorded on this tape");
  }
  if (loss.size() != 1) throw ShapeError("Tape::backward: loss must be a scalar, got " + to_string(loss.dims()));
  const auto owner = std::find_if(entries_.begin(), entries_.end(),
                                  [&](const Entry& e) { return e.output.id() == loss.id(); });
  if (owner == entries_.end()) throw Error("Tape::backward: loss was not produced on this tape");

  loss.grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn(it->output.grad());
  }
  entries_.clear();
  consumed_ = true;
}

}  // namespace mtln
