#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sctlab/tensor.hpp"

namespace sctlab::num {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

/// Normalizes each trailing-dimension vector, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Inverted dropout. Identity when `training` is false or `rate` is zero.
/// The mask is a pure function of `seed`.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);

/// Row lookup into an embedding table; out-of-range indices throw IndexError.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Σ (pred − target)², target treated as constant.
Tensor squared_error(const Tensor& pred, const Tensor& target);

/// Packing of independent sequences stacked row-wise: sequence b occupies
/// rows [b·seq_len, (b+1)·seq_len). The first `pad[b]` rows of a sequence are
/// padding: they are never attended to and produce zero output.
struct AttentionLayout {
  std::size_t n_seq = 1;
  std::size_t seq_len = 0;
  std::vector<std::size_t> pad;

  static AttentionLayout single(std::size_t len) { return {1, len, {0}}; }
};

/// softmax(QKᵀ/√d_k + M)·V per sequence, M the additive causal mask
/// (−∞ above the diagonal and on padded keys).
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionLayout& layout);

/// Same as `causal_attention`, without causality: every non-padded key is
/// visible to every query.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionLayout& layout);

/// Attention probabilities (n_seq·seq_len × seq_len), for inspection only.
std::vector<double> attention_weights(const Tensor& q, const Tensor& k,
                                      const AttentionLayout& layout, bool causal = true);

}  // namespace sctlab::num
