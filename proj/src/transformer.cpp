#include "sctlab/transformer.hpp"

#include <string>

#include "sctlab/errors.hpp"

namespace sctlab::tf {

void TransformerConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || context_len == 0) {
    throw std::invalid_argument("transformer sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

nlohmann::json to_json(const TransformerConfig& c) {
  return {{"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"context_len", c.context_len},
          {"dropout", c.dropout}};
}

TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.context_len = j.at("context_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

TokenBatch::TokenBatch(std::vector<std::size_t> modality_dims)
    : dims_(std::move(modality_dims)), inputs_(dims_.size()) {}

void TokenBatch::start_sequence() {
  tokens_.emplace_back();
  lengths_.push_back(0);
}

void TokenBatch::push(std::size_t modality, std::size_t step, std::span<const double> raw) {
  if (tokens_.empty()) throw StateError("TokenBatch::push before start_sequence");
  if (modality >= dims_.size()) {
    throw IndexError("modality " + std::to_string(modality) + " out of range");
  }
  if (raw.size() != dims_[modality]) {
    throw DimensionError("modality " + std::to_string(modality) + " expects " +
                         std::to_string(dims_[modality]) + " inputs, got " +
                         std::to_string(raw.size()));
  }
  auto& seq = tokens_.back();
  if (!seq.empty() && step < seq.back().step) {
    throw std::invalid_argument("token timesteps must be non-decreasing");
  }
  auto& in = inputs_[modality];
  seq.push_back({modality, step, in.size() / dims_[modality]});
  in.insert(in.end(), raw.begin(), raw.end());
  ++lengths_.back();
}

std::size_t TokenBatch::seq_len() const {
  std::size_t n = 0;
  for (auto l : lengths_) n = std::max(n, l);
  return n;
}

std::size_t TokenBatch::row(std::size_t seq, std::size_t i) const {
  if (i >= length(seq)) throw IndexError("token index out of range");
  return seq * seq_len() + pad(seq) + i;
}

num::AttentionLayout TokenBatch::layout() const {
  num::AttentionLayout l;
  l.n_seq = num_sequences();
  l.seq_len = seq_len();
  for (std::size_t b = 0; b < l.n_seq; ++b) l.pad.push_back(pad(b));
  return l;
}

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal(0.0, 0.02);
  return Tensor::parameter({rows, cols}, std::move(v));
}

Tensor zeros_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }
Tensor ones_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 1.0)); }

Tensor attention_sublayer(const Tensor& x, const BlockWeights& w,
                          const num::AttentionLayout& layout) {
  const Tensor h = num::layer_norm(x, w.ln1_gain, w.ln1_bias);
  if (w.wq.size() == 1) {
    return num::causal_attention(num::matmul(h, w.wq[0]), num::matmul(h, w.wk[0]),
                                 num::matmul(h, w.wv[0]), layout);
  }
  std::vector<Tensor> heads;
  for (std::size_t i = 0; i < w.wq.size(); ++i) {
    heads.push_back(num::causal_attention(num::matmul(h, w.wq[i]), num::matmul(h, w.wk[i]),
                                          num::matmul(h, w.wv[i]), layout));
  }
  return num::concat_cols(heads);
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2) {
  return num::linear(num::relu(num::linear(x, w1, b1)), w2, b2);
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, const num::AttentionLayout& layout,
                     double dropout, bool training, std::uint64_t seed) {
  const Tensor a = num::dropout(attention_sublayer(x, w, layout), dropout, training,
                                derive_seed(seed, 1));
  const Tensor h = num::add(x, a);
  const Tensor f = num::dropout(
      feed_forward(num::layer_norm(h, w.ln2_gain, w.ln2_bias), w.w1, w.b1, w.w2, w.b2), dropout,
      training, derive_seed(seed, 2));
  return num::add(h, f);
}

CausalTransformer::CausalTransformer(TransformerConfig config,
                                     std::vector<std::size_t> modality_dims,
                                     std::size_t tokens_per_step, Rng& rng)
    : config_(config), modality_dims_(std::move(modality_dims)), tokens_per_step_(tokens_per_step) {
  config_.validate();
  const std::size_t d = config_.d_model;
  for (auto dim : modality_dims_) {
    embed_w_.push_back(init_matrix(dim, d, rng));
    embed_b_.push_back(zeros_param(d));
  }
  pos_table_ = init_matrix(config_.context_len, d, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    BlockWeights b;
    b.ln1_gain = ones_param(d);
    b.ln1_bias = zeros_param(d);
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      b.wq.push_back(init_matrix(d, config_.d_head(), rng));
      b.wk.push_back(init_matrix(d, config_.d_head(), rng));
      b.wv.push_back(init_matrix(d, config_.d_head(), rng));
    }
    b.ln2_gain = ones_param(d);
    b.ln2_bias = zeros_param(d);
    b.w1 = init_matrix(d, config_.d_ff(), rng);
    b.b1 = zeros_param(config_.d_ff());
    b.w2 = init_matrix(config_.d_ff(), d, rng);
    b.b2 = zeros_param(d);
    blocks_.push_back(std::move(b));
  }
  final_gain_ = ones_param(d);
  final_bias_ = zeros_param(d);
}

Tensor CausalTransformer::embed(const TokenBatch& batch) const {
  if (batch.modality_dims() != modality_dims_) {
    throw DimensionError("token batch modalities do not match the transformer");
  }
  const std::size_t d = config_.d_model;
  const std::size_t L = batch.seq_len();
  const std::size_t n_seq = batch.num_sequences();

  // Embed each modality as one matrix, stack them with a trailing zero row
  // for padding, then gather into token order.
  std::vector<Tensor> parts;
  std::vector<std::size_t> offset(modality_dims_.size());
  std::size_t total = 0;
  for (std::size_t m = 0; m < modality_dims_.size(); ++m) {
    offset[m] = total;
    const auto& in = batch.inputs()[m];
    const std::size_t n = in.size() / modality_dims_[m];
    if (n == 0) continue;
    parts.push_back(num::linear(Tensor::constant({n, modality_dims_[m]}, in), embed_w_[m],
                                embed_b_[m]));
    total += n;
  }
  const std::size_t zero_row = total;
  parts.push_back(Tensor::zeros({1, d}));
  const Tensor stacked = num::concat_rows(parts);

  std::vector<std::size_t> index(n_seq * L, zero_row);
  // Padding rows read the zero row appended after the positional table.
  std::vector<std::size_t> steps(n_seq * L, config_.context_len);
  for (std::size_t b = 0; b < n_seq; ++b) {
    const auto& seq = batch.sequences()[b];
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto& tok = seq[i];
      if (tok.step >= config_.context_len) {
        throw IndexError("timestep " + std::to_string(tok.step) + " outside positional table of " +
                         std::to_string(config_.context_len));
      }
      const std::size_t r = batch.row(b, i);
      index[r] = offset[tok.modality] + tok.input_row;
      steps[r] = tok.step;
    }
  }
  const Tensor tokens = num::gather_rows(stacked, index);
  const Tensor table[] = {pos_table_, Tensor::zeros({1, d})};
  return num::add(tokens, num::embedding_lookup(num::concat_rows(table), steps));
}

Tensor CausalTransformer::forward(const TokenBatch& batch, const ForwardOptions& options) const {
  const std::size_t limit = config_.context_len * tokens_per_step_;
  if (batch.seq_len() > limit) {
    throw DimensionError("sequence of " + std::to_string(batch.seq_len()) +
                         " tokens exceeds the context window of " + std::to_string(limit));
  }
  const auto layout = batch.layout();
  Tensor x = num::dropout(embed(batch), config_.dropout, options.training,
                          derive_seed(options.seed, 0));
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = block_forward(x, blocks_[l], layout, config_.dropout, options.training,
                      derive_seed(options.seed, l + 1));
  }
  return num::layer_norm(x, final_gain_, final_bias_);
}

ParameterList CausalTransformer::parameters(const std::string& prefix) const {
  ParameterList out;
  for (std::size_t m = 0; m < embed_w_.size(); ++m) {
    out.push_back({prefix + "embed" + std::to_string(m) + ".w", embed_w_[m], true});
    out.push_back({prefix + "embed" + std::to_string(m) + ".b", embed_b_[m], false});
  }
  out.push_back({prefix + "pos", pos_table_, false});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string p = prefix + "block" + std::to_string(l) + ".";
    out.push_back({p + "ln1.gain", b.ln1_gain, false});
    out.push_back({p + "ln1.bias", b.ln1_bias, false});
    for (std::size_t h = 0; h < b.wq.size(); ++h) {
      const std::string s = b.wq.size() == 1 ? "" : std::to_string(h);
      out.push_back({p + "wq" + s, b.wq[h], true});
      out.push_back({p + "wk" + s, b.wk[h], true});
      out.push_back({p + "wv" + s, b.wv[h], true});
    }
    out.push_back({p + "ln2.gain", b.ln2_gain, false});
    out.push_back({p + "ln2.bias", b.ln2_bias, false});
    out.push_back({p + "w1", b.w1, true});
    out.push_back({p + "b1", b.b1, false});
    out.push_back({p + "w2", b.w2, true});
    out.push_back({p + "b2", b.b2, false});
  }
  out.push_back({prefix + "final.gain", final_gain_, false});
  out.push_back({prefix + "final.bias", final_bias_, false});
  return out;
}

}  // namespace sctlab::tf
