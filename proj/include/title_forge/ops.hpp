#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "title_forge/tensor.hpp"
#include "title_forge/tokenizer.hpp"

// Differentiable primitives. Every op records a backward node on the active
// tape when at least one input requires a gradient. Matrix ops take rank-2
// tensors; row-wise ops (layer_norm, cross_entropy) act on the last axis.
namespace title_forge::ops {

/// [m,k] × [k,n] → [m,n]. Throws Error(ShapeMismatch).
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// [m,k] × [n,k]ᵀ → [m,n].
template <class T>
BasicTensor<T> matmul_transposed(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[m,n] + bias[n] broadcast over rows.
template <class T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x);

/// Max-subtracted softmax along `axis`.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

/// Per row of the last axis: (x − mean) / sqrt(var + eps) · gamma + beta.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps = T(1e-6));

/// Rows of table[V,d] selected by ids → [len(ids), d].
template <class T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const TokenId> ids);

/// Inverted dropout: identity unless training with p > 0, otherwise zeroes
/// each element with probability p and scales survivors by 1/(1−p).
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, bool training, std::mt19937_64* rng);

/// Replaces entries whose mask byte is non-zero with `fill` (no gradient
/// flows to them). mask has x.numel() bytes.
template <class T>
BasicTensor<T> mask_fill(const BasicTensor<T>& x, std::span<const std::uint8_t> mask, T fill);

/// Mean over positions with target ≠ pad_id of −log softmax(logits[t])[target_t].
/// Throws Error(EmptyTarget) if every target is pad, Error(TargetOutOfRange).
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const TokenId> targets, TokenId pad_id);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> slice_columns(const BasicTensor<T>& x, std::size_t begin, std::size_t count);

template <class T>
BasicTensor<T> concat_columns(std::span<const BasicTensor<T>> parts);

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t count);

template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts);

}  // namespace title_forge::ops
