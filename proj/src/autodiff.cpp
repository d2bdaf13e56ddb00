#include "srl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srl::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Parameter Parameter::zeros(std::string name, Shape shape) {
  const std::size_t n = shape_size(shape);
  Parameter p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.value = std::make_shared<Buffer>(n, 0.0);
  p.grad = std::make_shared<Buffer>(n, 0.0);
  return p;
}

void Parameter::zero_grad() { std::fill(grad->begin(), grad->end(), 0.0); }

ParameterSet clone_parameters(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const Parameter& p : params) {
    Parameter c;
    c.name = p.name;
    c.shape = p.shape;
    c.value = std::make_shared<Buffer>(*p.value);
    c.grad = std::make_shared<Buffer>(p.grad->size(), 0.0);
    out.push_back(std::move(c));
  }
  return out;
}

bool manifest_matches(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape) return false;
  }
  return true;
}

std::size_t Array::rows() const {
  if (shape().size() != 2) throw ShapeError("rows(): array is not 2-d: " + shape_str(shape()));
  return shape()[0];
}

std::size_t Array::cols() const {
  if (shape().size() != 2) throw ShapeError("cols(): array is not 2-d: " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Array::grad() const {
  if (!node_->requires_grad) throw ShapeError("grad(): array does not track gradients");
  return {node_->grad->data(), node_->grad->size()};
}

double Array::scalar() const {
  if (size() != 1) throw ShapeError("scalar(): array has " + std::to_string(size()) + " elements");
  return (*node_->values)[0];
}

namespace {

void check_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void check_finite(std::span<const double> xs, const char* op) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Array Tape::make(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  auto node = std::make_shared<Array::Node>();
  node->shape = std::move(shape);
  node->values = std::make_shared<Buffer>(n, 0.0);
  if (requires_grad) node->grad = std::make_shared<Buffer>(n, 0.0);
  node->requires_grad = requires_grad;
  node->id = next_id_++;
  return Array(std::move(node));
}

Array Tape::array(Shape shape, Buffer values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("array: shape " + shape_str(shape) + " expects " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  Array out = make(std::move(shape), requires_grad);
  *out.node_->values = std::move(values);
  return out;
}

Array Tape::zeros(Shape shape, bool requires_grad) { return make(std::move(shape), requires_grad); }

Array Tape::leaf(const Parameter& p) {
  auto node = std::make_shared<Array::Node>();
  node->shape = p.shape;
  node->values = p.value;
  node->grad = p.grad;
  node->requires_grad = true;
  node->id = next_id_++;
  return Array(std::move(node));
}

Array Tape::frozen(const Parameter& p) {
  auto node = std::make_shared<Array::Node>();
  node->shape = p.shape;
  node->values = p.value;
  node->requires_grad = false;
  node->id = next_id_++;
  return Array(std::move(node));
}

Array Tape::add(const Array& a, const Array& b) {
  check_same_shape(a, b, "add");
  Array out = make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *b.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i];
      }
    });
  }
  return out;
}

Array Tape::sub(const Array& a, const Array& b) {
  check_same_shape(a, b, "sub");
  Array out = make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *b.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] -= g[i];
      }
    });
  }
  return out;
}

Array Tape::mul(const Array& a, const Array& b) {
  check_same_shape(a, b, "mul");
  Array out = make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *b.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        const auto& bv2 = *bn->values;
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * bv2[i];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        const auto& av2 = *an->values;
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i] * av2[i];
      }
    });
  }
  return out;
}

Array Tape::scale(const Array& a, double c) {
  Array out = make(a.shape(), a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_, c] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * c;
    });
  }
  return out;
}

Array Tape::relu(const Array& a) {
  Array out = make(a.shape(), a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      const auto& av2 = *an->values;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av2[i] > 0.0) ag[i] += g[i];
      }
    });
  }
  return out;
}

Array Tape::sigmoid(const Array& a) {
  Array out = make(a.shape(), a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-av[i]));
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      const auto& y = *on->values;
      for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

Array Tape::tanh(const Array& a) {
  Array out = make(a.shape(), a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      const auto& y = *on->values;
      for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return out;
}

Array Tape::expectile(const Array& u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("expectile: tau must be in (0,1)");
  Array out = make(u.shape(), u.requires_grad());
  const auto& uv = *u.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double w = uv[i] < 0.0 ? 1.0 - tau : tau;
    ov[i] = w * uv[i] * uv[i];
  }
  if (out.requires_grad()) {
    record([un = u.node_, on = out.node_, tau] {
      auto& ug = *un->grad;
      const auto& g = *on->grad;
      const auto& uv2 = *un->values;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = uv2[i] < 0.0 ? 1.0 - tau : tau;
        ug[i] += g[i] * 2.0 * w * uv2[i];
      }
    });
  }
  return out;
}

Array Tape::reshape(const Array& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  // Values are write-once, so the buffer can be shared; the gradient buffer
  // stays per-node and is forwarded elementwise.
  auto node = std::make_shared<Array::Node>();
  node->shape = std::move(shape);
  node->values = a.node_->values;
  node->requires_grad = a.requires_grad();
  if (node->requires_grad) node->grad = std::make_shared<Buffer>(a.size(), 0.0);
  node->id = next_id_++;
  Array out(std::move(node));
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
    });
  }
  return out;
}

Array Tape::transpose(const Array& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Array out = make({m, n}, a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) ov[j * n + i] = av[i * m + j];
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_, n, m] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ag[i * m + j] += g[j * n + i];
    });
  }
  return out;
}

Array Tape::row(const Array& a, std::size_t i) {
  const std::size_t n = a.rows(), m = a.cols();
  if (i >= n) throw ShapeError("row: index " + std::to_string(i) + " out of range");
  Array out = make({m}, a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  std::copy_n(av.data() + i * m, m, ov.data());
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_, i, m] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      for (std::size_t j = 0; j < m; ++j) ag[i * m + j] += g[j];
    });
  }
  return out;
}

Array Tape::col(const Array& a, std::size_t j) {
  const std::size_t n = a.rows(), m = a.cols();
  if (j >= m) throw ShapeError("col: index " + std::to_string(j) + " out of range");
  Array out = make({n}, a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i * m + j];
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_, j, n, m] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      for (std::size_t i = 0; i < n; ++i) ag[i * m + j] += g[i];
    });
  }
  return out;
}

Array Tape::stack_cols(std::span<const Array> columns) {
  if (columns.empty()) throw ShapeError("stack_cols: no columns");
  const std::size_t n = columns[0].size();
  const std::size_t k = columns.size();
  bool any_grad = false;
  for (const Array& c : columns) {
    if (c.shape().size() != 1 || c.size() != n) {
      throw ShapeError("stack_cols: columns must all be vectors of equal length");
    }
    any_grad = any_grad || c.requires_grad();
  }
  Array out = make({n, k}, any_grad);
  auto& ov = *out.node_->values;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& cv = *columns[j].node_->values;
    for (std::size_t i = 0; i < n; ++i) ov[i * k + j] = cv[i];
  }
  if (out.requires_grad()) {
    std::vector<Array::NodePtr> ins;
    ins.reserve(k);
    for (const Array& c : columns) ins.push_back(c.node_);
    record([ins = std::move(ins), on = out.node_, n, k] {
      const auto& g = *on->grad;
      for (std::size_t j = 0; j < k; ++j) {
        if (!ins[j]->requires_grad) continue;
        auto& cg = *ins[j]->grad;
        for (std::size_t i = 0; i < n; ++i) cg[i] += g[i * k + j];
      }
    });
  }
  return out;
}

Array Tape::concat_cols(const Array& a, const Array& b) {
  const std::size_t n = a.rows();
  if (b.rows() != n) throw ShapeError("concat_cols: row count mismatch");
  const std::size_t p = a.cols(), q = b.cols();
  Array out = make({n, p + q}, a.requires_grad() || b.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *b.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * p, p, ov.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, ov.data() + i * (p + q) + p);
  }
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_, n, p, q] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < p; ++j) ag[i * p + j] += g[i * (p + q) + j];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < q; ++j) bg[i * q + j] += g[i * (p + q) + p + j];
      }
    });
  }
  return out;
}

Array Tape::matmul(const Array& a, const Array& b) {
  const std::size_t n = a.rows(), k = a.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = b.cols();
  Array out = make({n, m}, a.requires_grad() || b.requires_grad());
  const double* av = a.node_->values->data();
  const double* bv = b.node_->values->data();
  double* ov = out.node_->values->data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      const double* brow = bv + kk * m;
      double* orow = ov + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_, n, k, m] {
      const double* g = on->grad->data();
      if (an->requires_grad) {
        double* ag = an->grad->data();
        const double* bv2 = bn->values->data();
        // dA[i,k] += sum_j dC[i,j] * B[k,j]
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double s = 0.0;
            const double* grow = g + i * m;
            const double* brow = bv2 + kk * m;
            for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
            ag[i * k + kk] += s;
          }
        }
      }
      if (bn->requires_grad) {
        double* bg = bn->grad->data();
        const double* av2 = an->values->data();
        // dB[k,j] += sum_i A[i,k] * dC[i,j]
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av2[i * k + kk];
            const double* grow = g + i * m;
            double* brow = bg + kk * m;
            for (std::size_t j = 0; j < m; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Array Tape::add_bias(const Array& a, const Array& bias) {
  const std::size_t n = a.rows(), m = a.cols();
  if (bias.shape().size() != 1 || bias.size() != m) {
    throw ShapeError("add_bias: bias must be a vector of length " + std::to_string(m));
  }
  Array out = make({n, m}, a.requires_grad() || bias.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *bias.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) ov[i * m + j] = av[i * m + j] + bv[j];
  if (out.requires_grad()) {
    record([an = a.node_, bn = bias.node_, on = out.node_, n, m] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) bg[j] += g[i * m + j];
      }
    });
  }
  return out;
}

Array Tape::scale_rows(const Array& a, const Array& s) {
  const std::size_t n = a.rows(), m = a.cols();
  if (s.shape().size() != 1 || s.size() != n) {
    throw ShapeError("scale_rows: scale must be a vector of length " + std::to_string(n));
  }
  Array out = make({n, m}, a.requires_grad() || s.requires_grad());
  const auto& av = *a.node_->values;
  const auto& sv = *s.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) ov[i * m + j] = av[i * m + j] * sv[i];
  if (out.requires_grad()) {
    record([an = a.node_, sn = s.node_, on = out.node_, n, m] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        const auto& sv2 = *sn->values;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) ag[i * m + j] += g[i * m + j] * sv2[i];
      }
      if (sn->requires_grad) {
        auto& sg = *sn->grad;
        const auto& av2 = *an->values;
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * av2[i * m + j];
          sg[i] += acc;
        }
      }
    });
  }
  return out;
}

Array Tape::rowwise_dot(const Array& a, const Array& b) {
  check_same_shape(a, b, "rowwise_dot");
  const std::size_t n = a.rows(), m = a.cols();
  Array out = make({n}, a.requires_grad() || b.requires_grad());
  const auto& av = *a.node_->values;
  const auto& bv = *b.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += av[i * m + j] * bv[i * m + j];
    ov[i] = s;
  }
  if (out.requires_grad()) {
    record([an = a.node_, bn = b.node_, on = out.node_, n, m] {
      const auto& g = *on->grad;
      if (an->requires_grad) {
        auto& ag = *an->grad;
        const auto& bv2 = *bn->values;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) ag[i * m + j] += g[i] * bv2[i * m + j];
      }
      if (bn->requires_grad) {
        auto& bg = *bn->grad;
        const auto& av2 = *an->values;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) bg[i * m + j] += g[i] * av2[i * m + j];
      }
    });
  }
  return out;
}

Array Tape::sum(const Array& a) {
  Array out = make({1}, a.requires_grad());
  const auto& av = *a.node_->values;
  double s = 0.0;
  for (double x : av) s += x;
  (*out.node_->values)[0] = s;
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_] {
      auto& ag = *an->grad;
      const double g = (*on->grad)[0];
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
    });
  }
  return out;
}

Array Tape::mean(const Array& a) {
  if (a.size() == 0) throw ShapeError("mean: empty array");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Array Tape::embedding(const Array& table, std::span<const std::int32_t> ids) {
  const std::size_t rows = table.rows(), dim = table.cols();
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw DataError("embedding: index " + std::to_string(id) + " out of range [0, " +
                      std::to_string(rows - 1) + "]");
    }
  }
  const std::size_t n = ids.size();
  Array out = make({n, dim}, table.requires_grad());
  const auto& tv = *table.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * dim, dim, ov.data() + i * dim);
  }
  if (out.requires_grad()) {
    record([tn = table.node_, on = out.node_,
            ids = std::vector<std::int32_t>(ids.begin(), ids.end()), dim] {
      auto& tg = *tn->grad;
      const auto& g = *on->grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* trow = tg.data() + static_cast<std::size_t>(ids[i]) * dim;
        const double* grow = g.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) trow[j] += grow[j];
      }
    });
  }
  return out;
}

Array Tape::softmax_rows(const Array& a) {
  const std::size_t n = a.rows(), m = a.cols();
  if (m == 0) throw ShapeError("softmax_rows: empty rows");
  check_finite(a.values(), "softmax");
  Array out = make({n, m}, a.requires_grad());
  const auto& av = *a.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = av.data() + i * m;
    double* y = ov.data() + i * m;
    double mx = x[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < m; ++j) y[j] /= z;
  }
  if (out.requires_grad()) {
    record([an = a.node_, on = out.node_, n, m] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      const auto& y = *on->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* yi = y.data() + i * m;
        const double* gi = g.data() + i * m;
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += gi[j] * yi[j];
        double* agi = ag.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) agi[j] += yi[j] * (gi[j] - dot);
      }
    });
  }
  return out;
}

Array Tape::softmax(const Array& logits) {
  if (logits.shape().size() != 1) throw ShapeError("softmax: expected a vector");
  return reshape(softmax_rows(reshape(logits, {1, logits.size()})), {logits.size()});
}

Array Tape::cross_entropy_rows(const Array& logits, std::span<const std::int32_t> targets) {
  const std::size_t n = logits.rows(), m = logits.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy_rows: one target per row required");
  for (std::int32_t t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= m) {
      throw DataError("cross_entropy: target " + std::to_string(t) + " out of range [0, " +
                      std::to_string(m - 1) + ")");
    }
  }
  check_finite(logits.values(), "cross_entropy");
  Array out = make({n}, logits.requires_grad());
  const auto& av = *logits.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = av.data() + i * m;
    double mx = x[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(x[j] - mx);
    const double loss = std::log(z) + mx - x[static_cast<std::size_t>(targets[i])];
    ov[i] = std::max(loss, 0.0);
  }
  if (out.requires_grad()) {
    record([an = logits.node_, on = out.node_,
            targets = std::vector<std::int32_t>(targets.begin(), targets.end()), n, m] {
      auto& ag = *an->grad;
      const auto& g = *on->grad;
      const auto& av2 = *an->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* x = av2.data() + i * m;
        double mx = x[0];
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += std::exp(x[j] - mx);
        double* agi = ag.data() + i * m;
        const double gi = g[i];
        for (std::size_t j = 0; j < m; ++j) {
          const double p = std::exp(x[j] - mx) / z;
          const double onehot = j == static_cast<std::size_t>(targets[i]) ? 1.0 : 0.0;
          agi[j] += gi * (p - onehot);
        }
      }
    });
  }
  return out;
}

Array Tape::cross_entropy(const Array& logits, std::int32_t target) {
  if (logits.shape().size() != 1) throw ShapeError("cross_entropy: expected a vector");
  const std::int32_t t[1] = {target};
  return reshape(cross_entropy_rows(reshape(logits, {1, logits.size()}), t), {1});
}

Array Tape::cosine_rows(const Array& u, const Array& v) {
  check_same_shape(u, v, "cosine_rows");
  const std::size_t n = u.rows(), m = u.cols();
  Array out = make({n}, u.requires_grad() || v.requires_grad());
  const auto& uv = *u.node_->values;
  const auto& vv = *v.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = uv.data() + i * m;
    const double* b = vv.data() + i * m;
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      d += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    const double prod = std::sqrt(na) * std::sqrt(nb);
    if (prod < kCosineFloor) ++cosine_floor_hits_;
    ov[i] = d / std::max(prod, kCosineFloor);
  }
  if (out.requires_grad()) {
    record([un = u.node_, vn = v.node_, on = out.node_, n, m] {
      const auto& g = *on->grad;
      const auto& uv2 = *un->values;
      const auto& vv2 = *vn->values;
      const auto& y = *on->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* a = uv2.data() + i * m;
        const double* b = vv2.data() + i * m;
        double na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          na += a[j] * a[j];
          nb += b[j] * b[j];
        }
        const double nu = std::sqrt(na), nv = std::sqrt(nb);
        const double prod = nu * nv;
        const double gi = g[i];
        if (prod < kCosineFloor) {
          // Denominator pinned at the floor: d(sim)/du = v / floor.
          if (un->requires_grad) {
            double* ug = un->grad->data() + i * m;
            for (std::size_t j = 0; j < m; ++j) ug[j] += gi * b[j] / kCosineFloor;
          }
          if (vn->requires_grad) {
            double* vg = vn->grad->data() + i * m;
            for (std::size_t j = 0; j < m; ++j) vg[j] += gi * a[j] / kCosineFloor;
          }
          continue;
        }
        const double s = y[i];
        if (un->requires_grad) {
          double* ug = un->grad->data() + i * m;
          for (std::size_t j = 0; j < m; ++j) ug[j] += gi * (b[j] / prod - s * a[j] / na);
        }
        if (vn->requires_grad) {
          double* vg = vn->grad->data() + i * m;
          for (std::size_t j = 0; j < m; ++j) vg[j] += gi * (a[j] / prod - s * b[j] / nb);
        }
      }
    });
  }
  return out;
}

Array Tape::cosine_similarity(const Array& u, const Array& v) {
  if (u.shape().size() != 1) throw ShapeError("cosine_similarity: expected vectors");
  check_same_shape(u, v, "cosine_similarity");
  const std::size_t m = u.size();
  return reshape(cosine_rows(reshape(u, {1, m}), reshape(v, {1, m})), {1});
}

Array Tape::layer_norm_rows(const Array& a, const Array& gain, const Array& bias) {
  const std::size_t n = a.rows(), m = a.cols();
  if (gain.size() != m || bias.size() != m) {
    throw ShapeError("layer_norm_rows: gain/bias must have length " + std::to_string(m));
  }
  constexpr double eps = 1e-5;
  Array out = make({n, m}, a.requires_grad() || gain.requires_grad() || bias.requires_grad());
  const auto& av = *a.node_->values;
  const auto& gv = *gain.node_->values;
  const auto& bv = *bias.node_->values;
  auto& ov = *out.node_->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = av.data() + i * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += x[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* y = ov.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) y[j] = gv[j] * (x[j] - mu) * inv + bv[j];
  }
  if (out.requires_grad()) {
    record([an = a.node_, gn = gain.node_, bn = bias.node_, on = out.node_, n, m] {
      const auto& g = *on->grad;
      const auto& av2 = *an->values;
      const auto& gv2 = *gn->values;
      for (std::size_t i = 0; i < n; ++i) {
        const double* x = av2.data() + i * m;
        const double* gi = g.data() + i * m;
        double mu = 0.0;
        for (std::size_t j = 0; j < m; ++j) mu += x[j];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t j = 0; j < m; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + eps);
        if (gn->requires_grad || bn->requires_grad) {
          auto& gg = *gn->grad;
          auto& bg = *bn->grad;
          for (std::size_t j = 0; j < m; ++j) {
            if (gn->requires_grad) gg[j] += gi[j] * (x[j] - mu) * inv;
            if (bn->requires_grad) bg[j] += gi[j];
          }
        }
        if (an->requires_grad) {
          // dL/dx via normalized activations xh = (x - mu) * inv:
          // dx = inv/m * (m*dxh - sum(dxh) - xh * sum(dxh * xh))
          double* ag = an->grad->data() + i * m;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            const double dxh = gi[j] * gv2[j];
            const double xh = (x[j] - mu) * inv;
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
          }
          for (std::size_t j = 0; j < m; ++j) {
            const double dxh = gi[j] * gv2[j];
            const double xh = (x[j] - mu) * inv;
            ag[j] += inv * (dxh - (sum_dxh + xh * sum_dxh_xh) / static_cast<double>(m));
          }
        }
      }
    });
  }
  return out;
}

void Tape::backward(const Array& loss) {
  if (!loss.valid()) throw ShapeError("backward: invalid loss array");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (loss.requires_grad()) {
    (*loss.node_->grad)[0] += 1.0;
  }
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

}  // namespace srl::ad
