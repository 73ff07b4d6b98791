#include "eeml/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace eeml {

namespace {

// Accepts a default-constructed 0x0 matrix as "no visual tokens" and gives it
// the right column count so vstack/matmul shapes line up.
Matrix normalize_empty(const Matrix& m, std::size_t cols) {
    if (m.rows() == 0 && m.cols() != cols) return Matrix(0, cols);
    return m;
}

void check_hidden(const Matrix& m, std::size_t h, const char* what) {
    if (m.rows() > 0 && m.cols() != h)
        throw std::invalid_argument(std::string(what) + ": expected width " + std::to_string(h) +
                                    ", got " + shape_str(m));
}

// Row-wise softmax backward: dS = P * (dP - rowsum(dP . P)). Masked entries
// carry P == 0 and drop out automatically.
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
    Matrix out(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) acc += d_probs(i, j) * probs(i, j);
        for (std::size_t j = 0; j < probs.cols(); ++j)
            out(i, j) = probs(i, j) * (d_probs(i, j) - acc);
    }
    return out;
}

}  // namespace

void validate_attention_weights(const AttentionWeights& w) {
    const std::size_t h = w.wq.rows();
    const Matrix* mats[] = {&w.wq, &w.wk, &w.wv, &w.wo};
    const char* names[] = {"Wq", "Wk", "Wv", "Wo"};
    for (int i = 0; i < 4; ++i)
        if (mats[i]->rows() != h || mats[i]->cols() != h)
            throw std::invalid_argument(std::string("attention weights: ") + names[i] +
                                        " must be " + std::to_string(h) + "x" + std::to_string(h) +
                                        ", got " + shape_str(*mats[i]));
    if (h == 0) throw std::invalid_argument("attention weights: hidden dim must be >= 1");
    if (w.heads == 0) throw std::invalid_argument("attention weights: heads must be >= 1");
    if (h % w.heads != 0)
        throw std::invalid_argument("attention weights: heads (" + std::to_string(w.heads) +
                                    ") must divide hidden dim (" + std::to_string(h) + ")");
}

Matrix scaled_dot_attention(const Matrix& xq, const Matrix& xk, const Matrix& xv,
                            const AttentionMask& mask, std::size_t scale_dim) {
    if (xk.rows() != xv.rows())
        throw std::invalid_argument("scaled_dot_attention: key rows " + shape_str(xk) +
                                    " vs value rows " + shape_str(xv));
    if (xq.cols() != xk.cols())
        throw std::invalid_argument("scaled_dot_attention: query width " + shape_str(xq) +
                                    " vs key width " + shape_str(xk));
    if (mask.query_rows != xq.rows() || mask.key_cols != xk.rows())
        throw std::invalid_argument("scaled_dot_attention: mask " +
                                    std::to_string(mask.query_rows) + "x" +
                                    std::to_string(mask.key_cols) + " does not fit queries " +
                                    shape_str(xq) + " over keys " + shape_str(xk));
    if (scale_dim == 0)
        throw std::invalid_argument("scaled_dot_attention: scale_dim must be positive");

    Matrix probs;
    {
        Matrix scores = scale(matmul(xq, transpose(xk)),
                              1.0 / std::sqrt(static_cast<double>(scale_dim)));
        probs = softmax_rows_masked(scores, mask);
    }
    return matmul(probs, xv);
}

Matrix multi_head_attention(const Matrix& xq, const Matrix& xk, const Matrix& xv,
                            const AttentionMask& mask, std::size_t heads) {
    const std::size_t h = xq.cols();
    if (heads == 0 || h % heads != 0)
        throw std::invalid_argument("multi_head_attention: heads (" + std::to_string(heads) +
                                    ") must divide width (" + std::to_string(h) + ")");
    if (xk.cols() != h || xv.cols() != h)
        throw std::invalid_argument("multi_head_attention: width mismatch: q " + shape_str(xq) +
                                    ", k " + shape_str(xk) + ", v " + shape_str(xv));
    const std::size_t dh = h / heads;
    Matrix out(xq.rows(), h);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t off = head * dh;
        const Matrix o = scaled_dot_attention(slice_cols(xq, off, dh), slice_cols(xk, off, dh),
                                              slice_cols(xv, off, dh), mask, dh);
        set_cols(out, off, o);
    }
    return out;
}

Matrix self_attention_forward(const Matrix& x, const AttentionWeights& w,
                              const AttentionMask& mask, Matrix* keys_out, Matrix* values_out) {
    validate_attention_weights(w);
    const std::size_t h = w.hidden_dim();
    if (x.cols() != h)
        throw std::invalid_argument("self_attention_forward: input " + shape_str(x) +
                                    " does not match hidden dim " + std::to_string(h));
    if (mask.query_rows != x.rows() || mask.key_cols != x.rows())
        throw std::invalid_argument("self_attention_forward: mask " +
                                    std::to_string(mask.query_rows) + "x" +
                                    std::to_string(mask.key_cols) + " is not causal over " +
                                    std::to_string(x.rows()) + " tokens");

    const Matrix xq = matmul(x, w.wq);
    const Matrix xk = matmul(x, w.wk);
    const Matrix xv = matmul(x, w.wv);
    if (keys_out) *keys_out = xk;
    if (values_out) *values_out = xv;
    return matmul(multi_head_attention(xq, xk, xv, mask, w.heads), w.wo);
}

Matrix composite_attention_forward(const Matrix& visual, const Matrix& text,
                                   const AttentionWeights& w) {
    validate_attention_weights(w);
    const Matrix i = normalize_empty(visual, w.hidden_dim());
    check_hidden(i, w.hidden_dim(), "composite_attention_forward: visual");
    return composite_attention_forward(i, text, w, matmul(i, w.wv));
}

Matrix composite_attention_forward(const Matrix& visual, const Matrix& text,
                                   const AttentionWeights& w, const Matrix& visual_values,
                                   Matrix* keys_out, Matrix* values_out) {
    validate_attention_weights(w);
    const std::size_t h = w.hidden_dim();
    const Matrix i = normalize_empty(visual, h);
    check_hidden(i, h, "composite_attention_forward: visual");
    if (text.rows() == 0)
        throw std::invalid_argument("composite_attention_forward: need at least one text token");
    if (text.cols() != h)
        throw std::invalid_argument("composite_attention_forward: text " + shape_str(text) +
                                    " does not match hidden dim " + std::to_string(h));
    if (visual_values.rows() != i.rows() || (visual_values.rows() > 0 && visual_values.cols() != h))
        throw std::invalid_argument("composite_attention_forward: visual values " +
                                    shape_str(visual_values) + " do not match visual " +
                                    shape_str(i));

    const Matrix concat = vstack(i, text);
    const Matrix xq = matmul(text, w.wq);
    const Matrix xk = matmul(concat, w.wk);
    const Matrix xv = vstack(visual_values, matmul(text, w.wv));
    if (keys_out) *keys_out = xk;
    if (values_out) *values_out = xv;

    const AttentionMask mask = build_trapezoidal_mask(i.rows(), text.rows());
    return matmul(multi_head_attention(xq, xk, xv, mask, w.heads), w.wo);
}

CompositeAttentionGrads composite_attention_backward(const Matrix& visual, const Matrix& text,
                                                     const AttentionWeights& w,
                                                     const Matrix& upstream) {
    validate_attention_weights(w);
    const std::size_t h = w.hidden_dim();
    const Matrix i = normalize_empty(visual, h);
    check_hidden(i, h, "composite_attention_backward: visual");
    if (text.rows() == 0)
        throw std::invalid_argument("composite_attention_backward: need at least one text token");
    if (upstream.rows() != text.rows() || upstream.cols() != h)
        throw std::invalid_argument("composite_attention_backward: upstream " +
                                    shape_str(upstream) + " does not match output " +
                                    std::to_string(text.rows()) + "x" + std::to_string(h));

    const std::size_t k = i.rows();
    const std::size_t n = text.rows();
    const std::size_t heads = w.heads;
    const std::size_t dh = w.head_dim();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Recompute the forward intermediates that the backward pass needs.
    const Matrix concat = vstack(i, text);
    const Matrix xq = matmul(text, w.wq);
    const Matrix xk = matmul(concat, w.wk);
    const Matrix xv = matmul(concat, w.wv);
    const AttentionMask mask = build_trapezoidal_mask(k, n);

    std::vector<Matrix> probs(heads);
    Matrix merged(n, h);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t off = head * dh;
        const Matrix q = slice_cols(xq, off, dh);
        const Matrix kh = slice_cols(xk, off, dh);
        const Matrix vh = slice_cols(xv, off, dh);
        Matrix scores = scale(matmul(q, transpose(kh)), inv_scale);
        probs[head] = softmax_rows_masked(scores, mask);
        set_cols(merged, off, matmul(probs[head], vh));
    }

    CompositeAttentionGrads g;
    g.wo = matmul(transpose(merged), upstream);
    const Matrix d_merged = matmul(upstream, transpose(w.wo));

    Matrix dxq(n, h), dxk(concat.rows(), h), dxv(concat.rows(), h);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t off = head * dh;
        const Matrix q = slice_cols(xq, off, dh);
        const Matrix kh = slice_cols(xk, off, dh);
        const Matrix vh = slice_cols(xv, off, dh);
        const Matrix d_out = slice_cols(d_merged, off, dh);

        const Matrix d_probs = matmul(d_out, transpose(vh));
        const Matrix d_values = matmul(transpose(probs[head]), d_out);
        const Matrix d_scores = scale(softmax_backward(probs[head], d_probs), inv_scale);

        set_cols(dxq, off, matmul(d_scores, kh));
        set_cols(dxk, off, matmul(transpose(d_scores), q));
        set_cols(dxv, off, d_values);
    }

    g.wq = matmul(transpose(text), dxq);
    g.wk = matmul(transpose(concat), dxk);
    g.wv = matmul(transpose(concat), dxv);

    const Matrix d_text_q = matmul(dxq, transpose(w.wq));
    Matrix d_concat = add(matmul(dxk, transpose(w.wk)), matmul(dxv, transpose(w.wv)));
    g.visual = slice_rows(d_concat, 0, k);
    g.text = add(d_text_q, slice_rows(d_concat, k, n));
    return g;
}

}  // namespace eeml
