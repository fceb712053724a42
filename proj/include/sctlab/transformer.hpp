#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "sctlab/ops.hpp"
#include "sctlab/random.hpp"
#include "sctlab/tensor.hpp"

namespace sctlab::tf {

using num::ParameterList;
using num::Tensor;

struct TransformerConfig {
  std::size_t d_model = 128;
  std::size_t n_layers = 3;
  std::size_t n_heads = 1;
  /// Maximum number of timesteps in a window.
  std::size_t context_len = 20;
  double dropout = 0.1;

  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t d_ff() const { return 4 * d_head(); }
  void validate() const;

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

nlohmann::json to_json(const TransformerConfig& c);
TransformerConfig transformer_config_from_json(const nlohmann::json& j);

/// Left-padded batch of token sequences. Each token carries a modality, the
/// timestep it belongs to (0-based within its window) and a raw input vector.
class TokenBatch {
 public:
  explicit TokenBatch(std::vector<std::size_t> modality_dims);

  void start_sequence();
  void push(std::size_t modality, std::size_t step, std::span<const double> raw);

  std::size_t num_sequences() const { return lengths_.size(); }
  /// Common padded length: the longest sequence.
  std::size_t seq_len() const;
  std::size_t length(std::size_t seq) const { return lengths_.at(seq); }
  std::size_t pad(std::size_t seq) const { return seq_len() - length(seq); }
  /// Row of token `i` of sequence `seq` in the stacked hidden states.
  std::size_t row(std::size_t seq, std::size_t i) const;
  num::AttentionLayout layout() const;

  const std::vector<std::size_t>& modality_dims() const { return dims_; }

  struct Token {
    std::size_t modality;
    std::size_t step;
    /// Row within that modality's input matrix.
    std::size_t input_row;
  };
  const std::vector<std::vector<Token>>& sequences() const { return tokens_; }
  const std::vector<std::vector<double>>& inputs() const { return inputs_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::vector<double>> inputs_;
  std::vector<std::vector<Token>> tokens_;
  std::vector<std::size_t> lengths_;
};

struct BlockWeights {
  Tensor ln1_gain, ln1_bias;
  /// One projection matrix per head, d_model × d_head.
  std::vector<Tensor> wq, wk, wv;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

/// Per-head causal attention on the normalized input, heads concatenated.
Tensor attention_sublayer(const Tensor& x, const BlockWeights& w, const num::AttentionLayout& layout);
/// max(0, x·W1 + b1)·W2 + b2.
Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2);
/// x + attn(LN(x)), then + FFN(LN(·)), with dropout on both branches.
Tensor block_forward(const Tensor& x, const BlockWeights& w, const num::AttentionLayout& layout,
                     double dropout, bool training, std::uint64_t seed);

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
};

class CausalTransformer {
 public:
  CausalTransformer(TransformerConfig config, std::vector<std::size_t> modality_dims,
                    std::size_t tokens_per_step, Rng& init_rng);

  /// Modality embeddings plus the positional row of each token's timestep.
  /// Padding rows are zero.
  Tensor embed(const TokenBatch& batch) const;
  /// Hidden states after the final layer norm, one row per (padded) token.
  Tensor forward(const TokenBatch& batch, const ForwardOptions& options = {}) const;

  const TransformerConfig& config() const { return config_; }
  std::size_t tokens_per_step() const { return tokens_per_step_; }
  const std::vector<std::size_t>& modality_dims() const { return modality_dims_; }
  const std::vector<BlockWeights>& blocks() const { return blocks_; }
  Tensor positional_table() const { return pos_table_; }

  /// Named parameters under `prefix`; matrices decay, the rest does not.
  ParameterList parameters(const std::string& prefix = "tf.") const;

 private:
  TransformerConfig config_;
  std::vector<std::size_t> modality_dims_;
  std::size_t tokens_per_step_;
  std::vector<Tensor> embed_w_, embed_b_;
  Tensor pos_table_;
  std::vector<BlockWeights> blocks_;
  Tensor final_gain_, final_bias_;
};

/// N(0, 0.02) matrix, the initialization used for every weight matrix.
Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng);
Tensor zeros_param(std::size_t n);
Tensor ones_param(std::size_t n);

}  // namespace sctlab::tf
