#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srl/error.hpp"

namespace srl::ad {

using Shape = std::vector<std::size_t>;
using Buffer = std::vector<double>;
using BufferPtr = std::shared_ptr<Buffer>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// A named trainable buffer pair. Parameters outlive any tape; a tape step
/// registers them as leaves so backward() accumulates straight into `grad`.
struct Parameter {
  std::string name;
  Shape shape;
  BufferPtr value;
  BufferPtr grad;

  static Parameter zeros(std::string name, Shape shape);

  std::size_t size() const { return value->size(); }
  void zero_grad();
};

using ParameterSet = std::vector<Parameter>;

/// Deep copy with identical names/shapes (target-network construction).
ParameterSet clone_parameters(const ParameterSet& params);
/// True when both sets list the same names and shapes in the same order.
bool manifest_matches(const ParameterSet& a, const ParameterSet& b);

class Tape;

/// Handle to a tape node: dense row-major float64 values plus, when the node
/// participates in differentiation, a same-shape gradient buffer.
class Array {
 public:
  Array() = default;

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values->size(); }
  // 2-d accessors; throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const {
    return {node_->values->data(), node_->values->size()};
  }
  std::span<const double> grad() const;
  double scalar() const;

  bool requires_grad() const { return node_->requires_grad; }
  int node_id() const { return node_->id; }
  bool valid() const { return node_ != nullptr; }

 private:
  friend class Tape;
  struct Node {
    Shape shape;
    BufferPtr values;
    BufferPtr grad;  // allocated only when requires_grad
    bool requires_grad = false;
    int id = -1;
  };
  using NodePtr = std::shared_ptr<Node>;
  explicit Array(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

/// Reverse-mode tape, rebuilt per training step (define-by-run). Operations
/// are recorded in construction order, which is already topological; backward
/// replays the records once, in reverse. Single-threaded by design.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ------------------------------------------------------------
  /// Fresh array owning its buffers. Throws ShapeError when the value count
  /// does not match the shape.
  Array array(Shape shape, Buffer values, bool requires_grad);
  Array constant(Shape shape, Buffer values) {
    return array(std::move(shape), std::move(values), false);
  }
  Array zeros(Shape shape, bool requires_grad = false);
  /// Registers a parameter as a differentiable leaf (buffers shared).
  Array leaf(const Parameter& p);
  /// Shares the parameter's values without tracking gradients (detached).
  Array frozen(const Parameter& p);

  // ---- elementwise (equal shapes; no implicit broadcasting) ---------------
  Array add(const Array& a, const Array& b);
  Array sub(const Array& a, const Array& b);
  Array mul(const Array& a, const Array& b);
  Array scale(const Array& a, double c);
  Array relu(const Array& a);
  Array sigmoid(const Array& a);
  Array tanh(const Array& a);
  /// |tau - 1(u<0)| * u^2, elementwise.
  Array expectile(const Array& u, double tau);

  // ---- shape adaptation (explicit, never implicit) -------------------------
  Array reshape(const Array& a, Shape shape);
  Array transpose(const Array& a);
  Array row(const Array& a, std::size_t i);
  Array col(const Array& a, std::size_t j);
  /// Stacks k vectors of length n into an [n x k] matrix (inputs as columns).
  Array stack_cols(std::span<const Array> columns);
  /// [n x p], [n x q] -> [n x (p+q)], rows concatenated.
  Array concat_cols(const Array& a, const Array& b);

  // ---- linear algebra ------------------------------------------------------
  Array matmul(const Array& a, const Array& b);
  /// Adds a length-m bias vector to every row of an [n x m] matrix.
  Array add_bias(const Array& a, const Array& bias);
  /// Scales row i of an [n x m] matrix by s[i].
  Array scale_rows(const Array& a, const Array& s);
  /// Row-wise dot product of two [n x m] matrices -> [n].
  Array rowwise_dot(const Array& a, const Array& b);
  Array sum(const Array& a);  // -> scalar [1]
  Array mean(const Array& a);

  // ---- table lookup --------------------------------------------------------
  /// Gathers rows of `table` ([rows x d]); backward scatter-adds into the
  /// looked-up rows only. Out-of-range ids throw DataError.
  Array embedding(const Array& table, std::span<const std::int32_t> ids);

  // ---- fused numeric kernels ----------------------------------------------
  /// Row-wise softmax with max-subtraction. Non-finite input throws.
  Array softmax_rows(const Array& a);
  Array softmax(const Array& logits);  // 1-d convenience wrapper
  /// -log softmax(row)[target], one value per row; always >= 0.
  Array cross_entropy_rows(const Array& logits, std::span<const std::int32_t> targets);
  Array cross_entropy(const Array& logits, std::int32_t target);
  /// Row-wise cosine similarity; denominator floored at 1e-8 (floor hits are
  /// counted and readable via cosine_floor_hits()).
  Array cosine_rows(const Array& u, const Array& v);
  Array cosine_similarity(const Array& u, const Array& v);
  /// Per-row layer normalization with learned gain/bias.
  Array layer_norm_rows(const Array& a, const Array& gain, const Array& bias);

  // ---- reverse pass --------------------------------------------------------
  /// Seeds d(loss)/d(loss) = 1 and replays records in reverse, visiting each
  /// exactly once. `loss` must be scalar. Gradients accumulate additively.
  void backward(const Array& loss);

  std::size_t record_count() const { return records_.size(); }
  std::size_t node_count() const { return static_cast<std::size_t>(next_id_); }
  std::uint64_t cosine_floor_hits() const { return cosine_floor_hits_; }

 private:
  Array make(Shape shape, bool requires_grad);
  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> records_;
  int next_id_ = 0;
  std::uint64_t cosine_floor_hits_ = 0;
};

inline constexpr double kCosineFloor = 1e-8;

}  // namespace srl::ad
