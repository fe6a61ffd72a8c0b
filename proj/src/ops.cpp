#include "title_forge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "title_forge/error.hpp"

namespace title_forge::ops {
namespace {

template <class T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

template <class T, class... In>
BasicTensor<T> make_output(Shape shape, std::vector<T> values, BasicTape<T>*& tape, const In&... inputs) {
  tape = BasicTape<T>::active();
  const bool record = tape != nullptr && (inputs.requires_grad() || ...);
  if (!record) tape = nullptr;
  BasicTensor<T> out(std::move(shape), std::move(values), record);
  if (record) {
    out.node()->tape = tape;
    out.node()->generation = tape->generation();
  }
  return out;
}

template <class T>
void require_rank2(const BasicTensor<T>& t, const char* what) {
  if (!t.defined() || t.rank() != 2) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " expects a rank-2 tensor, got " +
                                         (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

// C[m,n] += A[m,k] · B[k,n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A[m,k]ᵀ · B[m,n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] · B[n,k]ᵀ, via a transposed copy of B so the inner loop
// stays a contiguous axpy.
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, k, n, a, bt.data(), c);
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(Errc::ShapeMismatch, "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({m, n}, std::move(out), tape, a, b);
  if (tape) {
    tape->record([an = a.node(), bn = b.node(), on = result.node(), m, k, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        gemm_nt(m, n, k, on->grad.data(), bn->value.data(), an->grad.data());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        gemm_tn(m, k, n, an->value.data(), on->grad.data(), bn->grad.data());
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> matmul_transposed(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank2(a, "matmul_transposed");
  require_rank2(b, "matmul_transposed");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw Error(Errc::ShapeMismatch,
                "matmul_transposed " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  std::vector<T> out(m * n, T(0));
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({m, n}, std::move(out), tape, a, b);
  if (tape) {
    tape->record([an = a.node(), bn = b.node(), on = result.node(), m, k, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        gemm_nn(m, n, k, on->grad.data(), bn->value.data(), an->grad.data());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        gemm_tn(m, n, k, on->grad.data(), an->value.data(), bn->grad.data());
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, "add " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(a.shape(), std::move(out), tape, a, b);
  if (tape) {
    tape->record([an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      for (auto* in : {an.get(), bn.get()}) {
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) in->grad[i] += on->grad[i];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  require_rank2(x, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw Error(Errc::ShapeMismatch, "bias " + shape_string(bias.shape()) + " for " + shape_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x, bias);
  if (tape) {
    tape->record([xn = x.node(), bn = bias.node(), on = result.node(), m, n] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += on->grad[i * n + j];
        }
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, "mul " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  std::vector<T> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(a.shape(), std::move(out), tape, a, b);
  if (tape) {
    tape->record([an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), factor] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * factor;
    });
  }
  return result;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node()] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (xn->value[i] > T(0)) xn->grad[i] += on->grad[i];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw Error(Errc::ShapeMismatch, "softmax axis " + std::to_string(axis) + " for " + shape_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      const std::size_t base = o * len * inner + s;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        T e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), outer, inner, len] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      const auto& y = on->value;
      const auto& dy = on->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t s = 0; s < inner; ++s) {
          const std::size_t base = o * len * inner + s;
          T dot = 0;
          for (std::size_t i = 0; i < len; ++i) dot += dy[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = base + i * inner;
            xn->grad[at] += y[at] * (dy[at] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw Error(Errc::ShapeMismatch, "layer_norm gain/shift must have " + std::to_string(d) + " elements");
  }
  const std::size_t rows = x.numel() / d;
  auto in = x.data();
  auto g = gamma.data();
  auto b = beta.data();
  std::vector<T> out(in.size());
  std::vector<T> normalized(in.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (row[j] - mu) * is;
      normalized[r * d + j] = xhat;
      out[r * d + j] = xhat * g[j] + b[j];
    }
  }
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x, gamma, beta);
  if (tape) {
    tape->record([xn = x.node(), gn = gamma.node(), bn = beta.node(), on = result.node(),
                  xhat = std::move(normalized), inv_std = std::move(inv_std), rows, d] {
      if (on->grad.empty()) return;
      const auto& dy = on->grad;
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_dxhat = 0;
        T mean_dxhat_xhat = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t at = r * d + j;
          if (gn->requires_grad) gn->grad[j] += dy[at] * xhat[at];
          if (bn->requires_grad) bn->grad[j] += dy[at];
          const T dxhat = dy[at] * gn->value[j];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat[at];
        }
        if (!xn->requires_grad) continue;
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t at = r * d + j;
          const T dxhat = dy[at] * gn->value[j];
          xn->grad[at] += inv_std[r] * (dxhat - mean_dxhat - xhat[at] * mean_dxhat_xhat);
        }
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw Error(Errc::ShapeMismatch, "embedding lookup of an empty id sequence");
  std::vector<T> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error(Errc::UnknownId, "token id " + std::to_string(ids[i]) + " outside embedding table of " +
                                       std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({ids.size(), d}, std::move(out), tape, table);
  if (tape) {
    tape->record([tn = table.node(), on = result.node(), rows = std::vector<TokenId>(ids.begin(), ids.end()), d] {
      if (on->grad.empty()) return;
      tn->ensure_grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        T* dst = tn->grad.data() + static_cast<std::size_t>(rows[i]) * d;
        const T* src = on->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, bool training, std::mt19937_64* rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw Error(Errc::InvalidArgument, "dropout rate must be below 1");
  if (rng == nullptr) throw Error(Errc::InvalidArgument, "training-mode dropout needs a random generator");
  std::bernoulli_distribution keep(1.0 - p);
  const T kept_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> factor(x.numel());
  for (auto& f : factor) f = keep(*rng) ? kept_scale : T(0);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), factor = std::move(factor)] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < factor.size(); ++i) xn->grad[i] += on->grad[i] * factor[i];
    });
  }
  return result;
}

template <class T>
BasicTensor<T> mask_fill(const BasicTensor<T>& x, std::span<const std::uint8_t> mask, T fill) {
  if (mask.size() != x.numel()) {
    throw Error(Errc::ShapeMismatch, "mask of " + std::to_string(mask.size()) + " for " + shape_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = fill;
  }
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>(x.shape(), std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), m = std::vector<std::uint8_t>(mask.begin(), mask.end())] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i]) xn->grad[i] += on->grad[i];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id) {
  require_rank2(logits, "cross_entropy");
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw Error(Errc::ShapeMismatch, std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                                         " logit rows");
  }
  std::size_t count = 0;
  for (TokenId t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw Error(Errc::TargetOutOfRange, "target " + std::to_string(t) + " outside " + std::to_string(vocab));
    }
    ++count;
  }
  if (count == 0) throw Error(Errc::EmptyTarget, "every target position is padding");

  auto lv = logits.data();
  std::vector<T> probs(rows * vocab, T(0));
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    const T* row = lv.data() + r * vocab;
    T mx = *std::max_element(row, row + vocab);
    T z = 0;
    for (std::size_t v = 0; v < vocab; ++v) {
      T e = std::exp(row[v] - mx);
      probs[r * vocab + v] = e;
      z += e;
    }
    for (std::size_t v = 0; v < vocab; ++v) probs[r * vocab + v] /= z;
    total += -(row[static_cast<std::size_t>(targets[r])] - mx - std::log(z));
  }
  const T inv_count = T(1) / static_cast<T>(count);
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({1}, std::vector<T>{total * inv_count}, tape, logits);
  if (tape) {
    tape->record([ln = logits.node(), on = result.node(), probs = std::move(probs),
                  tgt = std::vector<TokenId>(targets.begin(), targets.end()), pad_id, rows, vocab, inv_count] {
      if (on->grad.empty()) return;
      ln->ensure_grad();
      const T upstream = on->grad[0] * inv_count;
      for (std::size_t r = 0; r < rows; ++r) {
        if (tgt[r] == pad_id) continue;
        T* g = ln->grad.data() + r * vocab;
        const T* p = probs.data() + r * vocab;
        for (std::size_t v = 0; v < vocab; ++v) g[v] += upstream * p[v];
        g[static_cast<std::size_t>(tgt[r])] -= upstream;
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({1}, std::vector<T>{total}, tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node()] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (auto& g : xn->grad) g += on->grad[0];
    });
  }
  return result;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
BasicTensor<T> slice_columns(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_columns");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || begin + count > n) {
    throw Error(Errc::ShapeMismatch, "column slice out of range for " + shape_string(x.shape()));
  }
  std::vector<T> out(m * count);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * n + begin, count, out.data() + i * count);
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({m, count}, std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), m, n, begin, count] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) xn->grad[i * n + begin + j] += on->grad[i * count + j];
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> concat_columns(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_columns of nothing");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_columns");
    if (p.dim(0) != m) throw Error(Errc::ShapeMismatch, "concat_columns row counts differ");
    n += p.dim(1);
  }
  std::vector<T> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * w, w, out.data() + i * n + offset);
    offset += w;
  }
  auto* tape = BasicTape<T>::active();
  bool any = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  BasicTensor<T> result({m, n}, std::move(out), tape && any);
  if (tape && any) {
    result.node()->tape = tape;
    result.node()->generation = tape->generation();
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record([nodes = std::move(nodes), on = result.node(), m, n] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        const std::size_t w = pn->shape[1];
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) pn->grad[i * w + j] += on->grad[i * n + offset + j];
          }
        }
        offset += w;
      }
    });
  }
  return result;
}

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || begin + count > m) {
    throw Error(Errc::ShapeMismatch, "row slice out of range for " + shape_string(x.shape()));
  }
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                     x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  BasicTape<T>* tape = nullptr;
  auto result = make_output<T>({count, n}, std::move(out), tape, x);
  if (tape) {
    tape->record([xn = x.node(), on = result.node(), begin, n] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[begin * n + i] += on->grad[i];
    });
  }
  return result;
}

template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_rows of nothing");
  const std::size_t n = parts[0].dim(1);
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != n) throw Error(Errc::ShapeMismatch, "concat_rows column counts differ");
    m += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  auto* tape = BasicTape<T>::active();
  bool any = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  BasicTensor<T> result({m, n}, std::move(out), tape && any);
  if (tape && any) {
    result.node()->tape = tape;
    result.node()->generation = tape->generation();
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record([nodes = std::move(nodes), on = result.node()] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        const std::size_t len = pn->value.size();
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < len; ++i) pn->grad[i] += on->grad[offset + i];
        }
        offset += len;
      }
    });
  }
  return result;
}

#define TITLE_FORGE_INSTANTIATE_OPS(T)                                                                      \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> matmul_transposed(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                 \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                     \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T); \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const TokenId>);                      \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, bool, std::mt19937_64*);                  \
  template BasicTensor<T> mask_fill(const BasicTensor<T>&, std::span<const std::uint8_t>, T);              \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const TokenId>, TokenId);         \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> slice_columns(const BasicTensor<T>&, std::size_t, std::size_t);                  \
  template BasicTensor<T> concat_columns(std::span<const BasicTensor<T>>);                                 \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);                     \
  template BasicTensor<T> concat_rows(std::span<const BasicTensor<T>>);

TITLE_FORGE_INSTANTIATE_OPS(float)
TITLE_FORGE_INSTANTIATE_OPS(double)

#undef TITLE_FORGE_INSTANTIATE_OPS

}  // namespace title_forge::ops
