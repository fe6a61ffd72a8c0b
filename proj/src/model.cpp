#include "title_forge/model.hpp"

#include <algorithm>
#include <cmath>

#include "title_forge/error.hpp"
#include "title_forge/ops.hpp"

namespace title_forge {

ModelConfig ModelConfig::paper(std::size_t vocab_size) {
  ModelConfig c;
  c.d_model = 768;
  c.n_heads = 12;
  c.n_layers = 12;
  c.d_ff = 3072;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::toy(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::BadConfig, why); };
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) fail("dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (vocab_size <= static_cast<std::size_t>(special::kCodeSep)) fail("vocab_size must cover the reserved ids");
  if (max_encoder_len == 0 || max_decoder_len == 0) fail("maximum lengths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m;
  m.queries = length;
  m.keys = length;
  m.blocked.assign(length * length, 0);
  for (std::size_t q = 0; q < length; ++q) {
    for (std::size_t k = q + 1; k < length; ++k) m.blocked[q * length + k] = 1;
  }
  return m;
}

AttentionMask AttentionMask::padding(std::size_t queries, std::span<const std::uint8_t> key_is_pad) {
  AttentionMask m;
  m.queries = queries;
  m.keys = key_is_pad.size();
  m.blocked.resize(queries * m.keys);
  for (std::size_t q = 0; q < queries; ++q) {
    std::copy(key_is_pad.begin(), key_is_pad.end(), m.blocked.begin() + static_cast<std::ptrdiff_t>(q * m.keys));
  }
  return m;
}

template <class T>
BasicTensor<T> scaled_dot_product_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                            const AttentionMask* mask, const ForwardContext& ctx) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw Error(Errc::ShapeMismatch, "attention q" + shape_string(q.shape()) + " k" + shape_string(k.shape()) +
                                         " v" + shape_string(v.shape()));
  }
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  auto scores = ops::scale(ops::matmul_transposed(q, k), inv_sqrt);
  if (mask != nullptr) {
    if (mask->queries != q.dim(0) || mask->keys != k.dim(0)) {
      throw Error(Errc::ShapeMismatch, "attention mask does not match " + shape_string(scores.shape()));
    }
    for (std::size_t row = 0; row < mask->queries; ++row) {
      auto begin = mask->blocked.begin() + static_cast<std::ptrdiff_t>(row * mask->keys);
      if (std::all_of(begin, begin + static_cast<std::ptrdiff_t>(mask->keys), [](std::uint8_t b) { return b != 0; })) {
        throw Error(Errc::DegenerateMask, "query " + std::to_string(row) + " has every key masked");
      }
    }
    scores = ops::mask_fill(scores, std::span<const std::uint8_t>(mask->blocked), T(-1e9));
  }
  auto weights = ops::softmax(scores, 1);
  weights = ops::dropout(weights, ctx.dropout, ctx.training, ctx.rng);
  return ops::matmul(weights, v);
}

template <class T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& query_in, const BasicTensor<T>& kv_in,
                                    const AttentionWeights<T>& w, std::size_t n_heads, const AttentionMask* mask,
                                    const ForwardContext& ctx) {
  const std::size_t d = query_in.dim(1);
  if (kv_in.dim(1) != d || n_heads == 0 || d % n_heads != 0) {
    throw Error(Errc::ShapeMismatch, "multi-head attention width " + std::to_string(d) + " with " +
                                         std::to_string(n_heads) + " heads");
  }
  auto q = ops::matmul(query_in, w.query);
  auto k = ops::matmul(kv_in, w.key);
  auto v = ops::matmul(kv_in, w.value);
  const std::size_t dk = d / n_heads;
  std::vector<BasicTensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    heads.push_back(scaled_dot_product_attention(n_heads == 1 ? q : ops::slice_columns(q, h * dk, dk),
                                                 n_heads == 1 ? k : ops::slice_columns(k, h * dk, dk),
                                                 n_heads == 1 ? v : ops::slice_columns(v, h * dk, dk), mask, ctx));
  }
  auto joined = n_heads == 1 ? heads[0] : ops::concat_columns(std::span<const BasicTensor<T>>(heads));
  return ops::matmul(joined, w.output);
}

template <class T>
BasicTensor<T> feed_forward(const BasicTensor<T>& x, const FeedForwardWeights<T>& w, const ForwardContext& ctx) {
  auto hidden = ops::relu(ops::add_bias(ops::matmul(x, w.w1), w.b1));
  hidden = ops::dropout(hidden, ctx.dropout, ctx.training, ctx.rng);
  return ops::add_bias(ops::matmul(hidden, w.w2), w.b2);
}

namespace {

template <class T>
BasicTensor<T> random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return BasicTensor<T>(std::move(shape), std::move(values), true);
}

template <class T>
NormWeights<T> make_norm(std::size_t d) {
  return {BasicTensor<T>::full({d}, T(1), true), BasicTensor<T>::zeros({d}, true)};
}

template <class T>
AttentionWeights<T> make_attention(std::size_t d, std::mt19937_64& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  return {random_normal<T>({d, d}, std, rng), random_normal<T>({d, d}, std, rng), random_normal<T>({d, d}, std, rng),
          random_normal<T>({d, d}, std, rng)};
}

template <class T>
FeedForwardWeights<T> make_ffn(std::size_t d, std::size_t d_ff, std::mt19937_64& rng) {
  return {random_normal<T>({d, d_ff}, 1.0 / std::sqrt(static_cast<double>(d)), rng),
          BasicTensor<T>::zeros({d_ff}, true),
          random_normal<T>({d_ff, d}, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng),
          BasicTensor<T>::zeros({d}, true)};
}

template <class T>
void add_norm(std::vector<Parameter<T>>& out, const std::string& prefix, const NormWeights<T>& n) {
  out.push_back({prefix + ".weight", ParamKind::NormGain, n.gain});
  out.push_back({prefix + ".bias", ParamKind::NormShift, n.shift});
}

template <class T>
void add_attention(std::vector<Parameter<T>>& out, const std::string& prefix, const AttentionWeights<T>& a) {
  out.push_back({prefix + ".q", ParamKind::Weight, a.query});
  out.push_back({prefix + ".k", ParamKind::Weight, a.key});
  out.push_back({prefix + ".v", ParamKind::Weight, a.value});
  out.push_back({prefix + ".o", ParamKind::Weight, a.output});
}

template <class T>
void add_ffn(std::vector<Parameter<T>>& out, const std::string& prefix, const FeedForwardWeights<T>& f) {
  out.push_back({prefix + ".w1", ParamKind::Weight, f.w1});
  out.push_back({prefix + ".b1", ParamKind::Bias, f.b1});
  out.push_back({prefix + ".w2", ParamKind::Weight, f.w2});
  out.push_back({prefix + ".b2", ParamKind::Bias, f.b2});
}

template <class T>
BasicTensor<T> norm(const BasicTensor<T>& x, const NormWeights<T>& n) {
  return ops::layer_norm(x, n.gain, n.shift, T(1e-6));
}

template <class T>
BasicTensor<T> positions(const BasicTensor<T>& table, std::size_t length) {
  return ops::slice_rows(table, 0, length);
}

}  // namespace

template <class T>
BasicTransformer<T>::BasicTransformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model;
  token_embedding_ = random_normal<T>({config_.vocab_size, d}, 0.02, rng);
  encoder_positions_ = random_normal<T>({config_.max_encoder_len, d}, 0.02, rng);
  decoder_positions_ = random_normal<T>({config_.max_decoder_len, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    EncoderLayer layer;
    layer.attention_norm = make_norm<T>(d);
    layer.attention = make_attention<T>(d, rng);
    layer.ffn_norm = make_norm<T>(d);
    layer.ffn = make_ffn<T>(d, config_.d_ff, rng);
    encoder_.push_back(std::move(layer));
  }
  encoder_final_norm_ = make_norm<T>(d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    DecoderLayer layer;
    layer.self_norm = make_norm<T>(d);
    layer.self_attention = make_attention<T>(d, rng);
    layer.cross_norm = make_norm<T>(d);
    layer.cross_attention = make_attention<T>(d, rng);
    layer.ffn_norm = make_norm<T>(d);
    layer.ffn = make_ffn<T>(d, config_.d_ff, rng);
    decoder_.push_back(std::move(layer));
  }
  decoder_final_norm_ = make_norm<T>(d);
}

template <class T>
std::vector<Parameter<T>> BasicTransformer<T>::parameters() const {
  std::vector<Parameter<T>> out;
  out.push_back({"shared.embedding", ParamKind::Embedding, token_embedding_});
  out.push_back({"encoder.position_embedding", ParamKind::Embedding, encoder_positions_});
  out.push_back({"decoder.position_embedding", ParamKind::Embedding, decoder_positions_});
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const std::string p = "encoder.block." + std::to_string(l);
    add_norm(out, p + ".attention.layer_norm", encoder_[l].attention_norm);
    add_attention(out, p + ".attention", encoder_[l].attention);
    add_norm(out, p + ".ffn.layer_norm", encoder_[l].ffn_norm);
    add_ffn(out, p + ".ffn", encoder_[l].ffn);
  }
  add_norm(out, "encoder.final_layer_norm", encoder_final_norm_);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const std::string p = "decoder.block." + std::to_string(l);
    add_norm(out, p + ".self_attention.layer_norm", decoder_[l].self_norm);
    add_attention(out, p + ".self_attention", decoder_[l].self_attention);
    add_norm(out, p + ".cross_attention.layer_norm", decoder_[l].cross_norm);
    add_attention(out, p + ".cross_attention", decoder_[l].cross_attention);
    add_norm(out, p + ".ffn.layer_norm", decoder_[l].ffn_norm);
    add_ffn(out, p + ".ffn", decoder_[l].ffn);
  }
  add_norm(out, "decoder.final_layer_norm", decoder_final_norm_);
  return out;
}

template <class T>
std::size_t BasicTransformer<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <class T>
EncoderOutput<T> BasicTransformer<T>::encode(std::span<const TokenId> source, const ForwardContext& ctx) const {
  if (source.empty()) throw Error(Errc::InvalidArgument, "empty encoder input");
  if (source.size() > config_.max_encoder_len) {
    throw Error(Errc::LengthExceeded, "encoder input of " + std::to_string(source.size()) + " tokens exceeds " +
                                          std::to_string(config_.max_encoder_len));
  }
  EncoderOutput<T> out;
  out.key_is_pad.resize(source.size());
  bool any_pad = false;
  for (std::size_t i = 0; i < source.size(); ++i) {
    out.key_is_pad[i] = source[i] == special::kPad ? 1 : 0;
    any_pad = any_pad || out.key_is_pad[i];
  }
  AttentionMask mask;
  if (any_pad) mask = AttentionMask::padding(source.size(), out.key_is_pad);
  const AttentionMask* mask_ptr = any_pad ? &mask : nullptr;

  auto x = ops::add(ops::embedding(token_embedding_, source), positions(encoder_positions_, source.size()));
  x = ops::dropout(x, ctx.dropout, ctx.training, ctx.rng);
  for (const auto& layer : encoder_) {
    auto h = norm(x, layer.attention_norm);
    auto attended = multi_head_attention(h, h, layer.attention, config_.n_heads, mask_ptr, ctx);
    x = ops::add(x, ops::dropout(attended, ctx.dropout, ctx.training, ctx.rng));
    auto transformed = feed_forward(norm(x, layer.ffn_norm), layer.ffn, ctx);
    x = ops::add(x, ops::dropout(transformed, ctx.dropout, ctx.training, ctx.rng));
  }
  x = norm(x, encoder_final_norm_);
  out.hidden = ops::dropout(x, ctx.dropout, ctx.training, ctx.rng);
  return out;
}

template <class T>
BasicTensor<T> BasicTransformer<T>::decoder_hidden(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded,
                                                   const ForwardContext& ctx) const {
  if (prefix.empty()) throw Error(Errc::InvalidArgument, "empty decoder prefix");
  if (prefix.size() > config_.max_decoder_len) {
    throw Error(Errc::LengthExceeded, "decoder prefix of " + std::to_string(prefix.size()) + " tokens exceeds " +
                                          std::to_string(config_.max_decoder_len));
  }
  const auto self_mask = AttentionMask::causal(prefix.size());
  const bool any_pad = std::any_of(encoded.key_is_pad.begin(), encoded.key_is_pad.end(), [](auto b) { return b != 0; });
  AttentionMask cross_mask;
  if (any_pad) cross_mask = AttentionMask::padding(prefix.size(), encoded.key_is_pad);

  auto x = ops::add(ops::embedding(token_embedding_, prefix), positions(decoder_positions_, prefix.size()));
  x = ops::dropout(x, ctx.dropout, ctx.training, ctx.rng);
  for (const auto& layer : decoder_) {
    auto h = norm(x, layer.self_norm);
    auto attended = multi_head_attention(h, h, layer.self_attention, config_.n_heads, &self_mask, ctx);
    x = ops::add(x, ops::dropout(attended, ctx.dropout, ctx.training, ctx.rng));
    auto c = norm(x, layer.cross_norm);
    auto crossed = multi_head_attention(c, encoded.hidden, layer.cross_attention, config_.n_heads,
                                        any_pad ? &cross_mask : nullptr, ctx);
    x = ops::add(x, ops::dropout(crossed, ctx.dropout, ctx.training, ctx.rng));
    auto transformed = feed_forward(norm(x, layer.ffn_norm), layer.ffn, ctx);
    x = ops::add(x, ops::dropout(transformed, ctx.dropout, ctx.training, ctx.rng));
  }
  x = norm(x, decoder_final_norm_);
  return ops::dropout(x, ctx.dropout, ctx.training, ctx.rng);
}

template <class T>
BasicTensor<T> BasicTransformer<T>::decoder_logits(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded,
                                                   const ForwardContext& ctx) const {
  return ops::matmul_transposed(decoder_hidden(prefix, encoded, ctx), token_embedding_);
}

template <class T>
std::vector<T> BasicTransformer<T>::next_token_logits(std::span<const TokenId> prefix,
                                                      const EncoderOutput<T>& encoded) const {
  auto hidden = decoder_hidden(prefix, encoded, ForwardContext{});
  auto last = ops::slice_rows(hidden, prefix.size() - 1, 1);
  auto logits = ops::matmul_transposed(last, token_embedding_);
  return {logits.data().begin(), logits.data().end()};
}

template <class T>
std::vector<T> BasicTransformer<T>::decode_step(std::span<const TokenId> prefix, const EncoderOutput<T>& encoded) const {
  auto logits = next_token_logits(prefix, encoded);
  const std::size_t n = logits.size();
  auto probs = ops::softmax(BasicTensor<T>({n}, std::move(logits)), 0);
  return {probs.data().begin(), probs.data().end()};
}

template <class T>
void BasicTransformer<T>::copy_parameters_from(const BasicTransformer& other) {
  if (!(other.config_ == config_)) throw Error(Errc::BadConfig, "cannot copy parameters across configurations");
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.data().begin());
  }
}

template class BasicTransformer<float>;
template class BasicTransformer<double>;

#define TITLE_FORGE_INSTANTIATE_BLOCKS(T)                                                                          \
  template BasicTensor<T> scaled_dot_product_attention(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                                       const BasicTensor<T>&, const AttentionMask*,                \
                                                       const ForwardContext&);                                     \
  template BasicTensor<T> multi_head_attention(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                                               const AttentionWeights<T>&, std::size_t, const AttentionMask*,      \
                                               const ForwardContext&);                                             \
  template BasicTensor<T> feed_forward(const BasicTensor<T>&, const FeedForwardWeights<T>&, const ForwardContext&);

TITLE_FORGE_INSTANTIATE_BLOCKS(float)
TITLE_FORGE_INSTANTIATE_BLOCKS(double)

#undef TITLE_FORGE_INSTANTIATE_BLOCKS

}  // namespace title_forge
