#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/rng.hpp"
#include "qcaa/tensor.hpp"

namespace qcaa {

/// Per-call state threaded through model code: the tape, the dropout
/// generator and the train/eval switch.
struct ForwardContext {
  Graph& graph;
  Rng& rng;
  bool training = false;
};

namespace detail {
inline thread_local bool grad_enabled = true;
}  // namespace detail

/// Disables graph recording on this thread for its lifetime (evaluation).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

inline bool tracks(const Tensor& t) { return grad_enabled && t.defined() && t.requires_grad(); }

template <typename... Ts>
bool any_tracks(const Ts&... ts) {
  return (tracks(ts) || ...);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// Splits `shape` around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i > 1; --i) strides[i - 2] = strides[i - 1] * shape[i - 1];
  return strides;
}

// Offsets of every multi-index over `dims` (row-major order) under two stride
// sets at once.
inline void enumerate_offsets(const std::vector<std::size_t>& dims,
                              const std::vector<std::size_t>& stride_a,
                              const std::vector<std::size_t>& stride_b,
                              std::vector<std::size_t>& off_a, std::vector<std::size_t>& off_b) {
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  off_a.assign(total, 0);
  off_b.assign(total, 0);
  if (total == 0) return;
  std::vector<std::size_t> idx(dims.size(), 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t n = 0; n < total; ++n) {
    off_a[n] = oa;
    off_b[n] = ob;
    for (std::size_t k = dims.size(); k-- > 0;) {
      ++idx[k];
      oa += stride_a[k];
      ob += stride_b[k];
      if (idx[k] < dims[k]) break;
      oa -= stride_a[k] * dims[k];
      ob -= stride_b[k] * dims[k];
      idx[k] = 0;
    }
  }
}

struct ContractTerms {
  std::string a;
  std::string b;
  std::string out;
};

inline ContractTerms parse_contract_spec(std::string_view spec) {
  const auto comma = spec.find(',');
  const auto arrow = spec.find("->");
  if (comma == std::string_view::npos || arrow == std::string_view::npos || comma > arrow) {
    throw ParameterError("contraction spec must look like 'ab,bc->ac', got '" + std::string(spec) + "'");
  }
  ContractTerms t{std::string(spec.substr(0, comma)), std::string(spec.substr(comma + 1, arrow - comma - 1)),
                  std::string(spec.substr(arrow + 2))};
  for (const std::string* term : {&t.a, &t.b, &t.out}) {
    for (std::size_t i = 0; i < term->size(); ++i) {
      const char c = (*term)[i];
      if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) {
        throw ParameterError("contraction spec has invalid index '" + std::string(1, c) + "'");
      }
      if (term->find(c, i + 1) != std::string::npos) {
        throw ParameterError("contraction spec repeats index '" + std::string(1, c) + "' within one term");
      }
    }
  }
  for (char c : t.out) {
    if (t.a.find(c) == std::string::npos && t.b.find(c) == std::string::npos) {
      throw ParameterError("output index '" + std::string(1, c) + "' does not appear in any operand");
    }
  }
  for (char c : t.a) {
    if (t.b.find(c) == std::string::npos && t.out.find(c) == std::string::npos) {
      throw ParameterError("index '" + std::string(1, c) + "' appears only in the first operand");
    }
  }
  for (char c : t.b) {
    if (t.a.find(c) == std::string::npos && t.out.find(c) == std::string::npos) {
      throw ParameterError("index '" + std::string(1, c) + "' appears only in the second operand");
    }
  }
  return t;
}

struct ContractPlan {
  Shape out_shape;
  std::vector<std::size_t> out_a, out_b;      // operand offsets per output element
  std::vector<std::size_t> inner_a, inner_b;  // operand offsets per summed index tuple
};

inline ContractPlan plan_contract(const ContractTerms& t, const Shape& sa, const Shape& sb) {
  if (t.a.size() != sa.size() || t.b.size() != sb.size()) {
    throw DimensionError("contraction '" + t.a + "," + t.b + "->" + t.out + "' does not match ranks of " +
                         to_string(sa) + " and " + to_string(sb));
  }
  std::array<std::size_t, 128> extent{};
  std::array<bool, 128> seen{};
  auto bind = [&](const std::string& term, const Shape& shape) {
    for (std::size_t i = 0; i < term.size(); ++i) {
      const auto c = static_cast<unsigned char>(term[i]);
      if (seen[c] && extent[c] != shape[i]) {
        throw DimensionError("contraction index '" + std::string(1, term[i]) + "' has extent " +
                             std::to_string(shape[i]) + " but was bound to " + std::to_string(extent[c]));
      }
      seen[c] = true;
      extent[c] = shape[i];
    }
  };
  bind(t.a, sa);
  bind(t.b, sb);

  const auto stride_a = row_major_strides(sa);
  const auto stride_b = row_major_strides(sb);
  auto stride_in = [](const std::string& term, const std::vector<std::size_t>& strides, char c) {
    const auto pos = term.find(c);
    return pos == std::string::npos ? std::size_t{0} : strides[pos];
  };

  ContractPlan plan;
  std::vector<std::size_t> out_dims, out_sa, out_sb;
  for (char c : t.out) {
    out_dims.push_back(extent[static_cast<unsigned char>(c)]);
    out_sa.push_back(stride_in(t.a, stride_a, c));
    out_sb.push_back(stride_in(t.b, stride_b, c));
  }
  plan.out_shape = out_dims;
  if (plan.out_shape.empty()) plan.out_shape = {1};

  std::string summed;
  for (char c : t.a + t.b) {
    if (t.out.find(c) == std::string::npos && summed.find(c) == std::string::npos) summed.push_back(c);
  }
  std::vector<std::size_t> sum_dims, sum_sa, sum_sb;
  for (char c : summed) {
    sum_dims.push_back(extent[static_cast<unsigned char>(c)]);
    sum_sa.push_back(stride_in(t.a, stride_a, c));
    sum_sb.push_back(stride_in(t.b, stride_b, c));
  }
  enumerate_offsets(out_dims, out_sa, out_sb, plan.out_a, plan.out_b);
  enumerate_offsets(sum_dims, sum_sa, sum_sb, plan.inner_a, plan.inner_b);
  return plan;
}

inline void run_contract(const ContractPlan& plan, std::span<const double> a, std::span<const double> b,
                         std::span<double> out, bool accumulate) {
  const std::size_t n_inner = plan.inner_a.size();
  for (std::size_t o = 0; o < plan.out_a.size(); ++o) {
    const double* pa = a.data() + plan.out_a[o];
    const double* pb = b.data() + plan.out_b[o];
    double acc = 0.0;
    for (std::size_t k = 0; k < n_inner; ++k) acc += pa[plan.inner_a[k]] * pb[plan.inner_b[k]];
    out[o] = accumulate ? out[o] + acc : acc;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  const bool tracked = detail::any_tracks(a, b);
  Tensor out(a.shape(), tracked);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (tracked) {
    g.record(out, {a, b}, [a, b, out]() mutable {
      auto go = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) gt[i] += go[i];
      }
    });
  }
  return out;
}

inline Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  const bool tracked = detail::any_tracks(a, b);
  Tensor out(a.shape(), tracked);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (tracked) {
    g.record(out, {a, b}, [a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  const bool tracked = detail::any_tracks(a, b);
  Tensor out(a.shape(), tracked);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (tracked) {
    g.record(out, {a, b}, [a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto y = b.data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto x = a.data();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Graph& g, const Tensor& x, double factor) {
  const bool tracked = detail::tracks(x);
  Tensor out(x.shape(), tracked);
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * factor;
  if (tracked) {
    g.record(out, {x}, [x, out, factor]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * factor;
    });
  }
  return out;
}

/// x + b where b's shape equals the trailing dimensions of x.
inline Tensor add_broadcast(Graph& g, const Tensor& x, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.rbegin(), bs.rend(), xs.rbegin())) {
    throw DimensionError("add_broadcast: " + to_string(bs) + " is not a suffix of " + to_string(xs));
  }
  const bool tracked = detail::any_tracks(x, b);
  Tensor out(xs, tracked);
  auto o = out.data();
  auto in = x.data();
  auto bias = b.data();
  const std::size_t n = bias.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] + bias[i % n];
  if (tracked) {
    g.record(out, {x, b}, [x, b, out, n]() mutable {
      auto go = out.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i];
      }
    });
  }
  return out;
}

inline Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const bool tracked = detail::tracks(x);
  Tensor out(std::move(shape), x.values(), tracked);
  if (tracked) {
    g.record(out, {x}, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

/// Reorders axes: output axis i is input axis `axes[i]`.
inline Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& xs = x.shape();
  if (axes.size() != xs.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for rank " +
                         std::to_string(xs.size()));
  }
  std::vector<bool> used(xs.size(), false);
  for (auto a : axes) {
    if (a >= xs.size() || used[a]) throw ParameterError("permute: axes are not a permutation");
    used[a] = true;
  }
  const auto in_strides = detail::row_major_strides(xs);
  Shape out_shape(xs.size());
  std::vector<std::size_t> gather(xs.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out_shape[i] = xs[axes[i]];
    gather[i] = in_strides[axes[i]];
  }
  std::vector<std::size_t> src, unused;
  detail::enumerate_offsets(out_shape, gather, gather, src, unused);
  const bool tracked = detail::tracks(x);
  Tensor out(out_shape, tracked);
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[src[i]];
  if (tracked) {
    g.record(out, {x}, [x, out, src = std::move(src)]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[src[i]] += go[i];
    });
  }
  return out;
}

/// First `count` entries along axis 0.
inline Tensor slice_leading(Graph& g, const Tensor& x, std::size_t count) {
  const auto& xs = x.shape();
  if (xs.empty() || count > xs[0]) {
    throw DimensionError("slice_leading: cannot take " + std::to_string(count) + " rows of " + to_string(xs));
  }
  Shape shape = xs;
  shape[0] = count;
  const std::size_t n = numel(shape);
  const bool tracked = detail::tracks(x);
  Tensor out(shape, std::vector<double>(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(n)),
             tracked);
  if (tracked) {
    g.record(out, {x}, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// y = x W + b over the last axis of x. `bias` may be undefined.
inline Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor()) {
  const auto& xs = x.shape();
  if (weight.rank() != 2 || xs.empty() || xs.back() != weight.dim(0)) {
    throw DimensionError("linear: input " + to_string(xs) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t out_w = weight.dim(1);
  if (bias.defined() && bias.size() != out_w) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match width " +
                         std::to_string(out_w));
  }
  const std::size_t rows = x.size() / in;
  Shape out_shape = xs;
  out_shape.back() = out_w;
  const bool tracked = detail::any_tracks(x, weight, bias);
  Tensor out(out_shape, tracked);
  {
    auto o = out.data();
    auto xv = x.data();
    auto w = weight.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = o.data() + r * out_w;
      if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), yr);
      const double* xr = xv.data() + r * in;
      for (std::size_t k = 0; k < in; ++k) {
        const double xk = xr[k];
        const double* wk = w.data() + k * out_w;
        for (std::size_t j = 0; j < out_w; ++j) yr[j] += xk * wk[j];
      }
    }
  }
  if (tracked) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    g.record(out, std::move(inputs), [x, weight, bias, out, rows, in, out_w]() mutable {
      auto go = out.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        auto w = weight.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = go.data() + r * out_w;
          for (std::size_t k = 0; k < in; ++k) {
            const double* wk = w.data() + k * out_w;
            double acc = 0.0;
            for (std::size_t j = 0; j < out_w; ++j) acc += gr[j] * wk[j];
            gx[r * in + k] += acc;
          }
        }
      }
      if (weight.requires_grad()) {
        auto gw = weight.mutable_grad();
        auto xv = x.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = go.data() + r * out_w;
          for (std::size_t k = 0; k < in; ++k) {
            const double xk = xv[r * in + k];
            double* gwk = gw.data() + k * out_w;
            for (std::size_t j = 0; j < out_w; ++j) gwk[j] += xk * gr[j];
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < out_w; ++j) gb[j] += go[r * out_w + j];
        }
      }
    });
  }
  return out;
}

/// Two-operand Einstein contraction, e.g. contract(g, q, k, "blhe,bshe->bhls").
///
/// Indices absent from the output are summed. Every index must appear in at
/// least two of the three terms; diagonals and single-operand reductions are
/// rejected.
inline Tensor contract(Graph& g, const Tensor& a, const Tensor& b, std::string_view spec) {
  const auto terms = detail::parse_contract_spec(spec);
  const auto plan = detail::plan_contract(terms, a.shape(), b.shape());
  const bool tracked = detail::any_tracks(a, b);
  Tensor out(plan.out_shape, tracked);
  detail::run_contract(plan, a.data(), b.data(), out.data(), false);
  if (tracked) {
    g.record(out, {a, b}, [a, b, out, terms]() mutable {
      // d/da = contract(dout, b -> a), d/db = contract(a, dout -> b).
      const Shape go_shape = terms.out.empty() ? Shape{} : out.shape();
      if (a.requires_grad()) {
        const detail::ContractTerms back{terms.out, terms.b, terms.a};
        const auto p = detail::plan_contract(back, go_shape, b.shape());
        detail::run_contract(p, out.grad(), b.data(), a.mutable_grad(), true);
      }
      if (b.requires_grad()) {
        const detail::ContractTerms back{terms.a, terms.out, terms.b};
        const auto p = detail::plan_contract(back, a.shape(), go_shape);
        detail::run_contract(p, a.data(), out.grad(), b.mutable_grad(), true);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and nonlinearities

/// Softmax along `axis` with max subtraction. -inf inputs get weight 0; a
/// slice that is entirely -inf has no distribution and is rejected.
inline Tensor softmax(Graph& g, const Tensor& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  const bool tracked = detail::tracks(x);
  Tensor out(x.shape(), tracked);
  auto o = out.data();
  auto in = x.data();
  for (std::size_t outer = 0; outer < s.outer; ++outer) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = outer * s.extent * s.inner + j;
      double m = -std::numeric_limits<double>::infinity();
      bool has_nan = false;
      for (std::size_t i = 0; i < s.extent; ++i) {
        const double v = in[base + i * s.inner];
        has_nan = has_nan || std::isnan(v);
        m = std::max(m, v);
      }
      if (has_nan) {
        for (std::size_t i = 0; i < s.extent; ++i) o[base + i * s.inner] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      if (m == -std::numeric_limits<double>::infinity()) {
        throw ContractError("softmax: every entry of a slice is -inf");
      }
      double total = 0.0;
      for (std::size_t i = 0; i < s.extent; ++i) {
        const double e = std::exp(in[base + i * s.inner] - m);
        o[base + i * s.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < s.extent; ++i) o[base + i * s.inner] /= total;
    }
  }
  if (tracked) {
    g.record(out, {x}, [x, out, s]() mutable {
      auto go = out.grad();
      auto y = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t outer = 0; outer < s.outer; ++outer) {
        for (std::size_t j = 0; j < s.inner; ++j) {
          const std::size_t base = outer * s.extent * s.inner + j;
          double dot = 0.0;
          for (std::size_t i = 0; i < s.extent; ++i) dot += y[base + i * s.inner] * go[base + i * s.inner];
          for (std::size_t i = 0; i < s.extent; ++i) {
            const std::size_t k = base + i * s.inner;
            gx[k] += y[k] * (go[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

/// Standardizes each slice along `axis` (biased variance), then applies the
/// per-feature affine gamma/beta of length shape[axis].
inline Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t axis,
                         double eps) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  const auto s = detail::split_axis(x.shape(), axis);
  if (gamma.size() != s.extent || beta.size() != s.extent) {
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(s.extent) + " entries");
  }
  const bool tracked = detail::any_tracks(x, gamma, beta);
  Tensor out(x.shape(), tracked);
  const std::size_t slices = s.outer * s.inner;
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(slices);
  auto o = out.data();
  auto in = x.data();
  auto ga = gamma.data();
  auto be = beta.data();
  const double n = static_cast<double>(s.extent);
  for (std::size_t outer = 0; outer < s.outer; ++outer) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = outer * s.extent * s.inner + j;
      double mean = 0.0;
      for (std::size_t i = 0; i < s.extent; ++i) mean += in[base + i * s.inner];
      mean /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < s.extent; ++i) {
        const double d = in[base + i * s.inner] - mean;
        var += d * d;
      }
      var /= n;
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[outer * s.inner + j] = r;
      for (std::size_t i = 0; i < s.extent; ++i) {
        const std::size_t k = base + i * s.inner;
        xhat[k] = (in[k] - mean) * r;
        o[k] = xhat[k] * ga[i] + be[i];
      }
    }
  }
  if (tracked) {
    g.record(out, {x, gamma, beta},
             [x, gamma, beta, out, s, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
               auto go = out.grad();
               auto ga = gamma.data();
               const double n = static_cast<double>(s.extent);
               if (gamma.requires_grad()) {
                 auto gg = gamma.mutable_grad();
                 for (std::size_t k = 0; k < go.size(); ++k) gg[(k / s.inner) % s.extent] += go[k] * xhat[k];
               }
               if (beta.requires_grad()) {
                 auto gb = beta.mutable_grad();
                 for (std::size_t k = 0; k < go.size(); ++k) gb[(k / s.inner) % s.extent] += go[k];
               }
               if (!x.requires_grad()) return;
               auto gx = x.mutable_grad();
               for (std::size_t outer = 0; outer < s.outer; ++outer) {
                 for (std::size_t j = 0; j < s.inner; ++j) {
                   const std::size_t base = outer * s.extent * s.inner + j;
                   double sum_d = 0.0;
                   double sum_dx = 0.0;
                   for (std::size_t i = 0; i < s.extent; ++i) {
                     const std::size_t k = base + i * s.inner;
                     const double d = go[k] * ga[i];
                     sum_d += d;
                     sum_dx += d * xhat[k];
                   }
                   const double r = rstd[outer * s.inner + j];
                   for (std::size_t i = 0; i < s.extent; ++i) {
                     const std::size_t k = base + i * s.inner;
                     const double d = go[k] * ga[i];
                     gx[k] += r * (d - sum_d / n - xhat[k] * sum_dx / n);
                   }
                 }
               }
             });
  }
  return out;
}

enum class Activation { kRelu, kGelu, kTanh };

// tanh-approximate GELU; sqrt(2/pi) is pinned to this literal so every
// implementation produces the same bits.
inline constexpr double kGeluSqrt2OverPi = 0.7978845608;
inline constexpr double kGeluCubic = 0.044715;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x)));
}

inline double gelu_derivative(double x) {
  const double t = std::tanh(kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
}

inline Tensor activation(Graph& g, const Tensor& x, Activation kind) {
  const bool tracked = detail::tracks(x);
  Tensor out(x.shape(), tracked);
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    switch (kind) {
      case Activation::kRelu: o[i] = in[i] > 0.0 ? in[i] : 0.0; break;
      case Activation::kGelu: o[i] = gelu(in[i]); break;
      case Activation::kTanh: o[i] = std::tanh(in[i]); break;
    }
  }
  if (tracked) {
    g.record(out, {x}, [x, out, kind]() mutable {
      auto go = out.grad();
      auto in = x.data();
      auto y = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case Activation::kRelu: d = in[i] > 0.0 ? 1.0 : 0.0; break;
          case Activation::kGelu: d = gelu_derivative(in[i]); break;
          case Activation::kTanh: d = 1.0 - y[i] * y[i]; break;
        }
        gx[i] += go[i] * d;
      }
    });
  }
  return out;
}

/// Inverted dropout. Identity when not training or p == 0.
inline Tensor dropout(Graph& g, const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  const bool tracked = detail::tracks(x);
  Tensor out(x.shape(), tracked);
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * mask[i];
  if (tracked) {
    g.record(out, {x}, [x, out, mask = std::move(mask)]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

/// Sets entries to -inf where `mask` is nonzero. The mask covers the trailing
/// dimensions of x and is broadcast over the leading ones.
inline Tensor mask_fill(Graph& g, const Tensor& x, std::span<const std::uint8_t> mask) {
  if (mask.empty() || x.size() % mask.size() != 0) {
    throw DimensionError("mask_fill: mask of " + std::to_string(mask.size()) + " entries does not tile " +
                         to_string(x.shape()));
  }
  const bool tracked = detail::tracks(x);
  Tensor out(x.shape(), tracked);
  auto o = out.data();
  auto in = x.data();
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = mask[i % n] ? -std::numeric_limits<double>::infinity() : in[i];
  }
  if (tracked) {
    std::vector<std::uint8_t> keep(mask.begin(), mask.end());
    g.record(out, {x}, [x, out, keep = std::move(keep)]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      const std::size_t n = keep.size();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (!keep[i % n]) gx[i] += go[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(Graph& g, const Tensor& x) {
  const bool tracked = detail::tracks(x);
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total, tracked);
  if (tracked) {
    g.record(out, {x}, [x, out]() mutable {
      const double go = out.grad()[0];
      for (auto& v : x.mutable_grad()) v += go;
    });
  }
  return out;
}

inline Tensor mean(Graph& g, const Tensor& x) {
  return scale(g, sum(g, x), 1.0 / static_cast<double>(x.size()));
}

}  // namespace qcaa
