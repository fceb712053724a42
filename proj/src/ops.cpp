#include "sctlab/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sctlab/random.hpp"

namespace sctlab::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Buffer& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Buffer& v, std::size_t rows, std::size_t cols) {
  return MatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }

// out[i,:] = sum_k a[i,k] * b[k,:] for k in [k0, k1), accumulated in k order with fused
// multiply-adds. A row's result never depends on the other rows or on the row count, which
// keeps prefixes and padded batches bitwise consistent; a blocked GEMM would not.
void row_product(const double* a, const double* b, std::size_t n, std::size_t k0, std::size_t k1,
                 double* out) {
  std::fill_n(out, n, 0.0);
  for (std::size_t k = k0; k < k1; ++k) {
    const double s = a[k];
    const double* br = b + k * n;
    for (std::size_t c = 0; c < n; ++c) out[c] = std::fma(s, br[c], out[c]);
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  Buffer out(m * n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) row_product(av + i * k, bv, n, 0, k, out.data() + i * n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    const auto dC = as_matrix(std::as_const(self.grad), m, n);
    if (A.requires_grad) {
      as_matrix(A.grad, m, k).noalias() += dC * as_matrix(std::as_const(B.value), k, n).transpose();
    }
    if (B.requires_grad) {
      as_matrix(B.grad, k, n).noalias() += as_matrix(std::as_const(A.value), m, k).transpose() * dC;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& P = parent(self, p);
      if (!P.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) P.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i];
      if (B.requires_grad) B.grad[i] -= self.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols(), m = x.rows();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match trailing dimension of " + shape_string(x.shape()));
  }
  Buffer out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [m, n](detail::Node& self) {
    auto& X = parent(self, 0);
    auto& B = parent(self, 1);
    if (X.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
    }
    if (B.requires_grad) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) B.grad[c] += self.grad[r * n + c];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](detail::Node& self) {
    auto& X = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += factor * self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor relu(const Tensor& x) {
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& X = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (X.value[i] > 0.0) X.grad[i] += self.grad[i];
    }
  });
}

Tensor tanh(const Tensor& x) {
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& X = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      X.grad[i] += (1.0 - y * y) * self.grad[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Buffer out(x.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = x.values().data() + r * n;
    double* o = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (!std::isfinite(in[c])) throw NumericError("softmax_rows: non-finite input");
      mx = std::max(mx, in[c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < n; ++c) o[c] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [m, n](detail::Node& self) {
    auto& X = parent(self, 0);
    for (std::size_t r = 0; r < m; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * g[c];
      for (std::size_t c = 0; c < n; ++c) X.grad[r * n + c] += y[c] * (g[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols(), m = x.rows();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  Buffer out(x.size());
  Buffer xhat(x.size());
  Buffer rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = x.values().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (in[c] - mu) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gain[c] + bias[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [m, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
        auto& X = parent(self, 0);
        auto& G = parent(self, 1);
        auto& B = parent(self, 2);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < m; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (G.requires_grad)
            for (std::size_t c = 0; c < d; ++c) G.grad[c] += g[c] * xh[c];
          if (B.requires_grad)
            for (std::size_t c = 0; c < d; ++c) B.grad[c] += g[c];
          if (!X.requires_grad) continue;
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dy = g[c] * G.value[c];
            sum_dy += dy;
            sum_dy_xh += dy * xh[c];
          }
          for (std::size_t c = 0; c < d; ++c) {
            const double dy = g[c] * G.value[c];
            X.grad[r * d + c] += rstd[r] * (dy - inv_d * sum_dy - xh[c] * inv_d * sum_dy_xh);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  // Counter-based: element i draws from mix_seed(seed + i), so the mask is a
  // pure function of (seed, position).
  const std::uint64_t base = mix_seed(seed);
  Buffer mask(x.size());
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(mix_seed(base + i) >> 11) * 0x1.0p-53;
    mask[i] = u < keep ? 1.0 / keep : 0.0;
    out[i] = x[i] * mask[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [mask = std::move(mask)](detail::Node& self) {
                               auto& X = parent(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 X.grad[i] += mask[i] * self.grad[i];
                             });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t n = x.cols(), m = x.rows();
  Buffer out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m) {
      throw IndexError("row index " + std::to_string(indices[r]) + " out of range for " +
                       std::to_string(m) + " rows");
    }
    std::copy_n(x.values().data() + indices[r] * n, n, out.data() + r * n);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::make_result({indices.size(), n}, std::move(out), {x},
                             [n, idx = std::move(idx)](detail::Node& self) {
                               auto& X = parent(self, 0);
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 double* dst = X.grad.data() + idx[r] * n;
                                 const double* src = self.grad.data() + r * n;
                                 for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
                               }
                             });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_2d(table, "embedding_lookup");
  return gather_rows(table, indices);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    total += p.rows();
  }
  Buffer out;
  out.reserve(total * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result({total, n}, std::move(out), std::move(parents),
                             [](detail::Node& self) {
                               std::size_t offset = 0;
                               for (auto& p : self.parents) {
                                 if (p->requires_grad) {
                                   for (std::size_t i = 0; i < p->value.size(); ++i)
                                     p->grad[i] += self.grad[offset + i];
                                 }
                                 offset += p->value.size();
                               }
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  Buffer out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(parts[k].values().data() + r * widths[k], widths[k],
                  out.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result(
      {m, total}, std::move(out), std::move(parents),
      [m, total, widths = std::move(widths)](detail::Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          if (p.requires_grad) {
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                p.grad[r * widths[k] + c] += self.grad[r * total + offset + c];
          }
          offset += widths[k];
        }
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::make_result({1}, {s}, {x}, [](detail::Node& self) {
    auto& X = parent(self, 0);
    for (double& g : X.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor squared_error(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return Tensor::make_result({1}, {s}, {pred, target}, [](detail::Node& self) {
    auto& P = parent(self, 0);
    auto& T = parent(self, 1);
    if (!P.requires_grad) return;
    for (std::size_t i = 0; i < P.value.size(); ++i)
      P.grad[i] += 2.0 * (P.value[i] - T.value[i]) * self.grad[0];
  });
}

namespace {

void check_layout(const Tensor& q, const Tensor& k, const Tensor& v,
                  const AttentionLayout& layout) {
  require_2d(q, "attention");
  require_2d(k, "attention");
  require_2d(v, "attention");
  const std::size_t rows = layout.n_seq * layout.seq_len;
  if (q.rows() != rows || k.rows() != rows || v.rows() != rows) {
    throw DimensionError("attention: expected " + std::to_string(rows) + " rows, got Q" +
                         shape_string(q.shape()) + " K" + shape_string(k.shape()) + " V" +
                         shape_string(v.shape()));
  }
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query/key widths differ: " + shape_string(q.shape()) +
                         " vs " + shape_string(k.shape()));
  }
  if (layout.pad.size() != layout.n_seq) {
    throw DimensionError("attention: pad list has " + std::to_string(layout.pad.size()) +
                         " entries for " + std::to_string(layout.n_seq) + " sequences");
  }
  for (std::size_t p : layout.pad) {
    if (p > layout.seq_len) throw DimensionError("attention: padding exceeds sequence length");
  }
}

// Probabilities for one sequence, written into `probs` (L×L, zero where masked).
void sequence_probs(const double* q, const double* k, std::size_t L, std::size_t dk,
                    std::size_t pad, bool causal, double* probs) {
  const ConstMatMap Q(q, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(dk));
  const ConstMatMap K(k, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(dk));
  const RowMat kt = K.transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t i = 0; i < L; ++i) {
    double* row = probs + i * L;
    if (i < pad) {
      std::fill_n(row, L, 0.0);
      continue;
    }
    const std::size_t end = causal ? i + 1 : L;
    row_product(Q.data() + i * dk, kt.data(), L, 0, dk, row);
    for (std::size_t j = pad; j < end; ++j) row[j] *= scale;
    // Aligned copy: Eigen's vectorized exp and sum peel by address, so work on storage whose
    // alignment does not move with the row offset.
    Eigen::Map<Eigen::ArrayXd> live(row + pad, static_cast<Eigen::Index>(end - pad));
    Eigen::ArrayXd e = live;
    e = (e - e.maxCoeff()).exp();
    live = e / e.sum();
    std::fill(row, row + pad, 0.0);
    std::fill(row + end, row + L, 0.0);
  }
}

Tensor attention_impl(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionLayout& layout, bool causal) {
  check_layout(q, k, v, layout);
  const std::size_t L = layout.seq_len, dk = q.cols(), dv = v.cols();
  const std::size_t n_seq = layout.n_seq;
  Buffer probs(n_seq * L * L);
  Buffer out(n_seq * L * dv);
  for (std::size_t b = 0; b < n_seq; ++b) {
    double* P = probs.data() + b * L * L;
    sequence_probs(q.values().data() + b * L * dk, k.values().data() + b * L * dk, L, dk,
                   layout.pad[b], causal, P);
    const double* V = v.values().data() + b * L * dv;
    const std::size_t pad = layout.pad[b];
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t end = i < pad ? pad : (causal ? i + 1 : L);
      row_product(P + i * L, V, dv, pad, end, out.data() + (b * L + i) * dv);
    }
  }
  return Tensor::make_result(
      {n_seq * L, dv}, std::move(out), {q, k, v},
      [n_seq, L, dk, dv, probs = std::move(probs)](detail::Node& self) {
        auto& Qn = parent(self, 0);
        auto& Kn = parent(self, 1);
        auto& Vn = parent(self, 2);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        const auto Li = static_cast<Eigen::Index>(L);
        RowMat dP(Li, Li);
        for (std::size_t b = 0; b < n_seq; ++b) {
          const ConstMatMap P(probs.data() + b * L * L, Li, Li);
          const ConstMatMap dO(self.grad.data() + b * L * dv, Li, static_cast<Eigen::Index>(dv));
          const ConstMatMap V(Vn.value.data() + b * L * dv, Li, static_cast<Eigen::Index>(dv));
          if (Vn.requires_grad) {
            MatMap(Vn.grad.data() + b * L * dv, Li, static_cast<Eigen::Index>(dv)).noalias() +=
                P.transpose() * dO;
          }
          if (!Qn.requires_grad && !Kn.requires_grad) continue;
          dP.noalias() = dO * V.transpose();
          // Softmax backward per row: dS = P ⊙ (dP − rowsum(P ⊙ dP)).
          for (Eigen::Index i = 0; i < Li; ++i) {
            const double dot = P.row(i).dot(dP.row(i));
            dP.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
          }
          dP *= inv_sqrt;
          const auto dki = static_cast<Eigen::Index>(dk);
          const ConstMatMap Q(Qn.value.data() + b * L * dk, Li, dki);
          const ConstMatMap K(Kn.value.data() + b * L * dk, Li, dki);
          if (Qn.requires_grad) MatMap(Qn.grad.data() + b * L * dk, Li, dki).noalias() += dP * K;
          if (Kn.requires_grad)
            MatMap(Kn.grad.data() + b * L * dk, Li, dki).noalias() += dP.transpose() * Q;
        }
      });
}

}  // namespace

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionLayout& layout) {
  return attention_impl(q, k, v, layout, true);
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionLayout& layout) {
  return attention_impl(q, k, v, layout, false);
}

std::vector<double> attention_weights(const Tensor& q, const Tensor& k,
                                      const AttentionLayout& layout, bool causal) {
  check_layout(q, k, k, layout);
  const std::size_t L = layout.seq_len, dk = q.cols();
  Buffer probs(layout.n_seq * L * L);
  for (std::size_t b = 0; b < layout.n_seq; ++b) {
    sequence_probs(q.values().data() + b * L * dk, k.values().data() + b * L * dk, L, dk,
                   layout.pad[b], causal, probs.data() + b * L * L);
  }
  return {probs.begin(), probs.end()};
}

}  // namespace sctlab::num
