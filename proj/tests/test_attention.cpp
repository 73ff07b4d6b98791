#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "eeml/attention.hpp"
#include "eeml/checks.hpp"
#include "eeml/mask.hpp"

using namespace eeml;

namespace {

AttentionWeights random_weights(Prng& rng, std::size_t h, std::size_t heads, double stddev) {
    AttentionWeights w;
    w.wq = gaussian_init(rng, h, h, stddev);
    w.wk = gaussian_init(rng, h, h, stddev);
    w.wv = gaussian_init(rng, h, h, stddev);
    w.wo = gaussian_init(rng, h, h, stddev);
    w.heads = heads;
    return w;
}

AttentionWeights identity_weights(std::size_t h) {
    AttentionWeights w;
    w.wq = Matrix::identity(h);
    w.wk = Matrix::identity(h);
    w.wv = Matrix::identity(h);
    w.wo = Matrix::identity(h);
    w.heads = 1;
    return w;
}

}  // namespace

TEST_CASE("causal mask: n=1, n=3, n=0") {
    const AttentionMask one = build_causal_mask(1);
    CHECK(one.permits(0, 0));

    const AttentionMask three = build_causal_mask(3);
    for (std::size_t i = 0; i < 3; ++i) {
        std::size_t permitted = 0;
        for (std::size_t j = 0; j < 3; ++j)
            if (three.permits(i, j)) ++permitted;
        CHECK(permitted == i + 1);
    }

    CHECK_THROWS_AS(build_causal_mask(0), std::invalid_argument);
}

TEST_CASE("trapezoidal mask: definition, k=0 degeneracy, single text row") {
    const AttentionMask m = build_trapezoidal_mask(2, 3);
    const std::uint8_t want[3][5] = {{1, 1, 1, 0, 0}, {1, 1, 1, 1, 0}, {1, 1, 1, 1, 1}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(m.permits(i, j) == (want[i][j] != 0));

    const AttentionMask degenerate = build_trapezoidal_mask(0, 4);
    const AttentionMask causal = build_causal_mask(4);
    CHECK(degenerate.permit == causal.permit);

    const AttentionMask wide = build_trapezoidal_mask(5, 1);
    CHECK(wide.key_cols == 6);
    for (std::size_t j = 0; j < 6; ++j) CHECK(wide.permits(0, j));

    CHECK_THROWS_AS(build_trapezoidal_mask(3, 0), std::invalid_argument);
}

TEST_CASE("trapezoidal row-count law for k,n <= 32") {
    for (std::size_t k = 0; k <= 32; k += 4) {
        for (std::size_t n = 1; n <= 32; n += 5) {
            const AttentionMask m = build_trapezoidal_mask(k, n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t permitted = 0;
                for (std::size_t j = 0; j < m.key_cols; ++j)
                    if (m.permits(i, j)) ++permitted;
                CHECK(permitted == k + i + 1);
            }
        }
    }
}

TEST_CASE("scaled dot attention: saturated softmax selects one value row") {
    // Orthogonal one-hot keys; each query matches one key with a score gap of
    // at least 40 after scaling, so the softmax saturates.
    const std::size_t n = 3;
    Matrix xq(n, n), xk(n, n), xv(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        xq(i, i) = 80.0;  // score 80/sqrt(1)... scale_dim=4 -> 40 gap
        xk(i, i) = 1.0;
        xv(i, 0) = static_cast<double>(i) + 1.0;
        xv(i, 1) = -2.0 * static_cast<double>(i);
        xv(i, 2) = 0.5;
    }
    AttentionMask all;
    all.query_rows = n;
    all.key_cols = n;
    all.permit.assign(n * n, 1);
    const Matrix out = scaled_dot_attention(xq, xk, xv, all, 4);
    CHECK(approx_equal(out, xv, 1e-12).within);
}

TEST_CASE("scaled dot attention: identical keys give the masked mean of values") {
    const std::size_t n = 4;
    Matrix xk(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        xk(i, 0) = 1.0;
        xk(i, 1) = 2.0;
    }
    Prng rng(3);
    const Matrix xq = uniform_init(rng, n, 2, -1.0, 1.0);
    const Matrix xv = uniform_init(rng, n, 3, -1.0, 1.0);
    const AttentionMask mask = build_causal_mask(n);
    const Matrix out = scaled_dot_attention(xq, xk, xv, mask, 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t j = 0; j <= i; ++j) mean += xv(j, c);
            mean /= static_cast<double>(i + 1);
            CHECK(out(i, c) == doctest::Approx(mean).epsilon(1e-12));
        }
}

TEST_CASE("composite attention: frozen scalar case h=2, identity weights") {
    // Queries [0,1] against keys [[1,0],[0,1]], scores [0, 1/sqrt(2)]; the
    // blend of the two value rows is the softmax itself.
    const Matrix visual = Matrix::from_rows({{1, 0}});
    const Matrix text = Matrix::from_rows({{0, 1}});
    const Matrix out = composite_attention_forward(visual, text, identity_weights(2));
    CHECK(out.rows() == 1);
    CHECK(out(0, 0) == doctest::Approx(0.330238450673343).epsilon(1e-9));
    CHECK(out(0, 1) == doctest::Approx(0.669761549326657).epsilon(1e-9));
}

TEST_CASE("self attention: single token collapses to x*Wv*Wo") {
    Prng rng(9);
    const std::size_t h = 6;
    const AttentionWeights w = random_weights(rng, h, 1, 0.3);
    const Matrix x = uniform_init(rng, 1, h, -1.0, 1.0);
    const Matrix got = self_attention_forward(x, w, build_causal_mask(1));
    const Matrix want = matmul(matmul(x, w.wv), w.wo);
    CHECK(approx_equal(got, want, 1e-14).within);
}

TEST_CASE("self attention: head split is invariant when Wq and Wk are zero") {
    Prng rng(13);
    const std::size_t h = 8, n = 5;
    AttentionWeights w1 = random_weights(rng, h, 1, 0.3);
    w1.wq = Matrix(h, h);
    w1.wk = Matrix(h, h);
    AttentionWeights w2 = w1;
    w2.heads = 2;
    const Matrix x = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix a = self_attention_forward(x, w1, build_causal_mask(n));
    const Matrix b = self_attention_forward(x, w2, build_causal_mask(n));
    CHECK(approx_equal(a, b, 1e-12).within);
}

TEST_CASE("self attention matches the straight-line oracle") {
    Prng rng(17);
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
        const std::size_t heads = (t % 2 == 0) ? 1 : 2;
        const std::size_t h = heads * (2 + rng.next_u64() % 3);
        const std::size_t n = 1 + rng.next_u64() % 8;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix x = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix got = self_attention_forward(x, w, build_causal_mask(n));
        const Matrix want = checks::reference_self_attention(x, w);
        worst = std::max(worst, approx_equal(got, want, 1e-12).max_abs_diff);
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("composite attention: k=0 reduces to causal self attention bitwise") {
    Prng rng(23);
    for (int t = 0; t < 20; ++t) {
        const std::size_t heads = 1 + rng.next_u64() % 2;
        const std::size_t h = heads * (2 + rng.next_u64() % 4);
        const std::size_t n = 1 + rng.next_u64() % 16;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix composite = composite_attention_forward(Matrix(0, h), text, w);
        const Matrix self = self_attention_forward(text, w, build_causal_mask(n));
        CHECK(approx_equal(composite, self, 0.0).max_abs_diff == 0.0);
    }
}

TEST_CASE("composite attention: output shape is n x h") {
    Prng rng(29);
    const std::size_t h = 8;
    const AttentionWeights w = random_weights(rng, h, 2, 0.3);
    const Matrix visual = uniform_init(rng, 7, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, 3, h, -1.0, 1.0);
    const Matrix out = composite_attention_forward(visual, text, w);
    CHECK(out.rows() == 3);
    CHECK(out.cols() == h);
}

TEST_CASE("composite attention: empty text and width mismatches are rejected") {
    Prng rng(31);
    const AttentionWeights w = random_weights(rng, 4, 1, 0.3);
    const Matrix visual = uniform_init(rng, 2, 4, -1.0, 1.0);
    CHECK_THROWS_AS(composite_attention_forward(visual, Matrix(0, 4), w), std::invalid_argument);
    CHECK_THROWS_AS(composite_attention_forward(visual, Matrix(2, 6), w), std::invalid_argument);
    CHECK_THROWS_AS(composite_attention_forward(Matrix(2, 6), Matrix(2, 4), w),
                    std::invalid_argument);
}

TEST_CASE("composite attention equals the text slice of masked full attention") {
    Prng rng(37);
    double worst = 0.0;
    for (int t = 0; t < 60; ++t) {
        const std::size_t heads = (t % 2 == 0) ? 1 : 2;
        const std::size_t h = (t % 4 < 2) ? 4 : 8;
        const std::size_t k = rng.next_u64() % 13;
        const std::size_t n = 1 + rng.next_u64() % 12;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
        const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix got = composite_attention_forward(visual, text, w);
        const Matrix want = checks::reference_composite_attention(visual, text, w);
        worst = std::max(worst, approx_equal(got, want, 1e-9).max_abs_diff);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("composite backward: zero upstream gives exactly zero gradients") {
    Prng rng(41);
    const std::size_t h = 8, k = 3, n = 4;
    const AttentionWeights w = random_weights(rng, h, 2, 0.3);
    const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
    const CompositeAttentionGrads g =
        composite_attention_backward(visual, text, w, Matrix(n, h));
    CHECK(approx_equal(g.visual, Matrix(k, h), 0.0).within);
    CHECK(approx_equal(g.text, Matrix(n, h), 0.0).within);
    CHECK(approx_equal(g.wq, Matrix(h, h), 0.0).within);
    CHECK(approx_equal(g.wk, Matrix(h, h), 0.0).within);
    CHECK(approx_equal(g.wv, Matrix(h, h), 0.0).within);
    CHECK(approx_equal(g.wo, Matrix(h, h), 0.0).within);
}

TEST_CASE("composite backward: gradient shapes mirror the primals") {
    Prng rng(43);
    const std::size_t h = 4, k = 5, n = 2;
    const AttentionWeights w = random_weights(rng, h, 1, 0.3);
    const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix upstream = uniform_init(rng, n, h, -1.0, 1.0);
    const CompositeAttentionGrads g = composite_attention_backward(visual, text, w, upstream);
    CHECK(g.visual.rows() == k);
    CHECK(g.visual.cols() == h);
    CHECK(g.text.rows() == n);
    CHECK(g.text.cols() == h);
    CHECK(g.wq.rows() == h);
    CHECK(g.wo.cols() == h);

    CHECK_THROWS_AS(composite_attention_backward(visual, text, w, Matrix(n + 1, h)),
                    std::invalid_argument);
}

TEST_CASE("composite backward matches central finite differences") {
    Prng rng(47);
    const std::size_t h = 6, k = 3, n = 4;
    AttentionWeights w = random_weights(rng, h, 2, 0.2);
    Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
    Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix upstream = uniform_init(rng, n, h, -1.0, 1.0);

    const auto loss = [&] { return inner(upstream, composite_attention_forward(visual, text, w)); };
    const CompositeAttentionGrads g = composite_attention_backward(visual, text, w, upstream);

    const double eps = 1e-5;
    CHECK(checks::max_rel_err_vs_fd(visual, g.visual, loss, eps) < 1e-4);
    CHECK(checks::max_rel_err_vs_fd(text, g.text, loss, eps) < 1e-4);
    CHECK(checks::max_rel_err_vs_fd(w.wq, g.wq, loss, eps) < 1e-4);
    CHECK(checks::max_rel_err_vs_fd(w.wk, g.wk, loss, eps) < 1e-4);
    CHECK(checks::max_rel_err_vs_fd(w.wv, g.wv, loss, eps) < 1e-4);
    CHECK(checks::max_rel_err_vs_fd(w.wo, g.wo, loss, eps) < 1e-4);
}

TEST_CASE("backward/forward consistency: directional derivative") {
    Prng rng(53);
    const std::size_t h = 4, k = 2, n = 3;
    const AttentionWeights w = random_weights(rng, h, 1, 0.2);
    const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix upstream = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix dir = uniform_init(rng, k, h, -1.0, 1.0);

    const CompositeAttentionGrads g = composite_attention_backward(visual, text, w, upstream);
    const double analytic = inner(g.visual, dir);

    const double eps = 1e-5;
    const Matrix plus = add(visual, scale(dir, eps));
    const Matrix minus = add(visual, scale(dir, -eps));
    const double numeric = (inner(upstream, composite_attention_forward(plus, text, w)) -
                            inner(upstream, composite_attention_forward(minus, text, w))) /
                           (2.0 * eps);
    CHECK(std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-4) <
          1e-4);
}

TEST_CASE("permutation of visual tokens leaves the text output unchanged") {
    Prng rng(59);
    const std::size_t h = 8, k = 6, n = 4;
    const AttentionWeights w = random_weights(rng, h, 2, 0.3);
    const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);

    // all-equal visual rows: reordering them is a no-op on the input
    Matrix equal_rows(k, h);
    Prng rng2(60);
    const Matrix proto = uniform_init(rng2, 1, h, -1.0, 1.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < h; ++j) equal_rows(i, j) = proto(0, j);
    const Matrix base = composite_attention_forward(equal_rows, text, w);

    // distinct rows reversed: keys/values move, attention-weighted sums do not
    const Matrix distinct = uniform_init(rng, k, h, -1.0, 1.0);
    Matrix reversed(k, h);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < h; ++j) reversed(i, j) = distinct(k - 1 - i, j);
    const Matrix a = composite_attention_forward(distinct, text, w);
    const Matrix b = composite_attention_forward(reversed, text, w);

    CHECK(approx_equal(base, composite_attention_forward(equal_rows, text, w), 1e-12).within);
    CHECK(approx_equal(a, b, 1e-12).within);
}
