#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "title_forge/tensor.hpp"
#include "title_forge/tokenizer.hpp"

namespace title_forge {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  /// Depth of the encoder and of the decoder.
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 16000;
  std::size_t max_encoder_len = 512;
  std::size_t max_decoder_len = 30;
  double dropout = 0.1;

  /// 768 wide, 12 heads, 12 layers.
  static ModelConfig paper(std::size_t vocab_size);
  /// 64 wide, 4 heads, 2 layers, d_ff 128.
  static ModelConfig toy(std::size_t vocab_size);

  std::size_t head_dim() const { return d_model / n_heads; }
  /// Throws Error(BadConfig).
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Optimizer groups care about the kind: biases and norm parameters can be frozen.
enum class ParamKind { Embedding, Weight, Bias, NormGain, NormShift };

template <class T>
struct Parameter {
  std::string name;
  ParamKind kind;
  BasicTensor<T> tensor;  // shares storage with the model
};

/// Row-major [queries × keys]; a non-zero byte hides that key from that query.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> blocked;

  static AttentionMask causal(std::size_t length);
  /// Hides every key position flagged in key_is_pad from every query.
  static AttentionMask padding(std::size_t queries, std::span<const std::uint8_t> key_is_pad);
};

/// Dropout switch and randomness for one forward pass. The default is
/// evaluation mode, which is deterministic.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

template <class T>
struct AttentionWeights {
  BasicTensor<T> query, key, value, output;  // each [d_model, d_model], applied as x·W
};

template <class T>
struct FeedForwardWeights {
  BasicTensor<T> w1, b1, w2, b2;  // [d, d_ff], [d_ff], [d_ff, d], [d]
};

template <class T>
struct NormWeights {
  BasicTensor<T> gain, shift;
};

/// softmax(q·kᵀ/√d_k, masked to −1e9) · v for one head, with dropout on the
/// weights in training mode. Throws Error(DegenerateMask) if some query can
/// see no key at all, Error(ShapeMismatch) on inconsistent shapes.
template <class T>
BasicTensor<T> scaled_dot_product_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                            const AttentionMask* mask, const ForwardContext& ctx = {});

/// Projects queries from `query_in` and keys/values from `kv_in`, runs one
/// scaled_dot_product_attention per head, concatenates heads and applies
/// the output projection.
template <class T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& query_in, const BasicTensor<T>& kv_in,
                                    const AttentionWeights<T>& weights, std::size_t n_heads, const AttentionMask* mask,
                                    const ForwardContext& ctx = {});

/// max(0, x·W1 + b1)·W2 + b2, with dropout after the activation in training mode.
template <class T>
BasicTensor<T> feed_forward(const BasicTensor<T>& x, const FeedForwardWeights<T>& weights,
                            const ForwardContext& ctx = {});

template <class T>
struct EncoderOutput {
  BasicTensor<T> hidden;               // [source_len, d_model]
  std::vector<std::uint8_t> key_is_pad;  // one byte per source position
};

/// Transformer encoder-decoder: pre-layer-norm blocks with residual skips,
/// learned absolute positions, input/output embeddings shared.
template <class T>
class BasicTransformer {
 public:
  BasicTransformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  /// Every learned tensor in a fixed order. Handles share storage with the model.
  std::vector<Parameter<T>> parameters() const;
  std::size_t parameter_count() const;

  /// Throws Error(LengthExceeded) past max_encoder_len.
  EncoderOutput<T> encode(std::span<const TokenId> source, const ForwardContext& ctx = {}) const;

  /// Logits for every prefix position: row t scores the token following
  /// prefix[0..t]. Throws Error(LengthExceeded) past max_decoder_len.
  BasicTensor<T> decoder_logits(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded,
                                const ForwardContext& ctx = {}) const;

  /// Logits of the token following the whole prefix (evaluation mode).
  std::vector<T> next_token_logits(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded) const;

  /// Probability distribution over the vocabulary for the next token.
  std::vector<T> decode_step(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded) const;

  /// Same architecture and values in another scalar type.
  template <class U>
  BasicTransformer<U> converted() const {
    BasicTransformer<U> out(config_, 0);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto from = src[i].tensor.data();
      auto to = dst[i].tensor.data();
      for (std::size_t j = 0; j < from.size(); ++j) to[j] = static_cast<U>(from[j]);
    }
    return out;
  }

  /// Copies parameter values from a model with the same configuration.
  void copy_parameters_from(const BasicTransformer& other);

 private:
  struct EncoderLayer {
    NormWeights<T> attention_norm;
    AttentionWeights<T> attention;
    NormWeights<T> ffn_norm;
    FeedForwardWeights<T> ffn;
  };
  struct DecoderLayer {
    NormWeights<T> self_norm;
    AttentionWeights<T> self_attention;
    NormWeights<T> cross_norm;
    AttentionWeights<T> cross_attention;
    NormWeights<T> ffn_norm;
    FeedForwardWeights<T> ffn;
  };

  BasicTensor<T> decoder_hidden(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded,
                                const ForwardContext& ctx) const;

  ModelConfig config_;
  BasicTensor<T> token_embedding_;
  BasicTensor<T> encoder_positions_;
  BasicTensor<T> decoder_positions_;
  std::vector<EncoderLayer> encoder_;
  NormWeights<T> encoder_final_norm_;
  std::vector<DecoderLayer> decoder_;
  NormWeights<T> decoder_final_norm_;
};

using Transformer = BasicTransformer<float>;

extern template class BasicTransformer<float>;
extern template class BasicTransformer<double>;

}  // namespace title_forge
