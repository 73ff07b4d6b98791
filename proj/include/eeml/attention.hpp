#pragma once

#include <cstddef>

#include "eeml/kernels.hpp"
#include "eeml/mask.hpp"
#include "eeml/matrix.hpp"

namespace eeml {

// Projection weights of one attention module. All four matrices are square
// h x h; heads must divide h. The query/key/value projections themselves are
// transient intermediates of the forward functions, never stored.
struct AttentionWeights {
    Matrix wq, wk, wv, wo;
    std::size_t heads = 1;

    std::size_t hidden_dim() const { return wq.rows(); }
    std::size_t head_dim() const { return hidden_dim() / heads; }
};

void validate_attention_weights(const AttentionWeights& w);

// softmax(xq * xk^T / sqrt(scale_dim)) * xv under the mask.
// Output shape: xq.rows x xv.cols.
Matrix scaled_dot_attention(const Matrix& xq, const Matrix& xk, const Matrix& xv,
                            const AttentionMask& mask, std::size_t scale_dim);

// Splits xq/xk/xv into `heads` column blocks, runs scaled_dot_attention per
// head with scale_dim = width/heads, concatenates the head outputs.
Matrix multi_head_attention(const Matrix& xq, const Matrix& xk, const Matrix& xv,
                            const AttentionMask& mask, std::size_t heads);

// Causal multi-head self-attention: queries, keys and values all from x.
// When keys_out/values_out are given they receive the projected x*Wk / x*Wv
// (what a KV cache stores for these positions).
Matrix self_attention_forward(const Matrix& x, const AttentionWeights& w,
                              const AttentionMask& mask, Matrix* keys_out = nullptr,
                              Matrix* values_out = nullptr);

// Composite attention: queries from the text tokens only, keys/values from
// the concatenation [visual; text], trapezoidal mask. Visual query rows are
// never formed; the output has exactly text.rows() rows.
Matrix composite_attention_forward(const Matrix& visual, const Matrix& text,
                                   const AttentionWeights& w);

// Variant taking the precomputed visual value projection (visual * Wv). The
// composite decoder layer computes that product once and shares it with the
// aligner, so the attention must not redo it.
Matrix composite_attention_forward(const Matrix& visual, const Matrix& text,
                                   const AttentionWeights& w, const Matrix& visual_values,
                                   Matrix* keys_out = nullptr, Matrix* values_out = nullptr);

struct CompositeAttentionGrads {
    Matrix visual;  // k x h
    Matrix text;    // n x h
    Matrix wq, wk, wv, wo;
};

// Exact analytic gradients of composite_attention_forward with respect to
// both inputs and all four projection matrices.
CompositeAttentionGrads composite_attention_backward(const Matrix& visual, const Matrix& text,
                                                     const AttentionWeights& w,
                                                     const Matrix& upstream);

}  // namespace eeml
