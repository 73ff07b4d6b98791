#include "eeml/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeml/attention.hpp"
#include "eeml/costmodel.hpp"
#include "eeml/inference.hpp"
#include "eeml/kernels.hpp"
#include "eeml/mask.hpp"

namespace eeml::checks {

namespace {

// i,j,k order with a scalar accumulator; not the library kernel.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("naive_matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

double naive_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Matrix naive_gelu_mat(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = naive_gelu(x.data()[i]);
    return out;
}

// Full multi-head attention over x under an arbitrary permission predicate.
// Softmax is computed the textbook way (no max subtraction), which is fine at
// the small scales verification runs at.
Matrix naive_masked_attention(const Matrix& x, const AttentionWeights& w,
                              const std::function<bool(std::size_t, std::size_t)>& permits) {
    const std::size_t rows = x.rows();
    const std::size_t h = w.wq.rows();
    const std::size_t dh = h / w.heads;
    const Matrix xq = naive_matmul(x, w.wq);
    const Matrix xk = naive_matmul(x, w.wk);
    const Matrix xv = naive_matmul(x, w.wv);

    Matrix merged(rows, h);
    for (std::size_t head = 0; head < w.heads; ++head) {
        const std::size_t off = head * dh;
        for (std::size_t i = 0; i < rows; ++i) {
            std::vector<double> weight(rows, 0.0);
            double denom = 0.0;
            for (std::size_t j = 0; j < rows; ++j) {
                if (!permits(i, j)) continue;
                double score = 0.0;
                for (std::size_t c = 0; c < dh; ++c) score += xq(i, off + c) * xk(j, off + c);
                weight[j] = std::exp(score / std::sqrt(static_cast<double>(dh)));
                denom += weight[j];
            }
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < rows; ++j)
                    if (permits(i, j)) acc += (weight[j] / denom) * xv(j, off + c);
                merged(i, off + c) = acc;
            }
        }
    }
    return naive_matmul(merged, w.wo);
}

}  // namespace

Matrix reference_composite_attention(const Matrix& visual, const Matrix& text,
                                     const AttentionWeights& w) {
    const std::size_t k = visual.rows();
    const Matrix x = vstack(visual, text);
    // Visual query rows attend to themselves only (they get discarded); text
    // rows see every visual column plus their causal text prefix.
    const auto permits = [k](std::size_t i, std::size_t j) {
        if (i < k) return j == i;
        return j < k || j <= i;
    };
    const Matrix full = naive_masked_attention(x, w, permits);
    return slice_rows(full, k, text.rows());
}

Matrix reference_self_attention(const Matrix& x, const AttentionWeights& w) {
    return naive_masked_attention(x, w, [](std::size_t i, std::size_t j) { return j <= i; });
}

Matrix reference_projector(const Matrix& features, const Matrix& w1, const Matrix& w2) {
    return naive_matmul(naive_gelu_mat(naive_matmul(features, w1)), w2);
}

Matrix reference_ffn(const Matrix& x, const LayerWeights& layer) {
    return naive_matmul(naive_gelu_mat(naive_matmul(x, layer.ffn_w1)), layer.ffn_w2);
}

Matrix reference_aligner(const Matrix& visual, const LayerWeights& layer) {
    const Matrix hid = add(naive_matmul(naive_matmul(visual, layer.attn.wv), layer.attn.wo), visual);
    return add(reference_ffn(hid, layer), hid);
}

double max_rel_err_vs_fd(Matrix& target, const Matrix& analytic,
                         const std::function<double()>& loss, double eps) {
    if (target.rows() != analytic.rows() || target.cols() != analytic.cols())
        throw std::invalid_argument("max_rel_err_vs_fd: gradient shape mismatch: " +
                                    shape_str(target) + " vs " + shape_str(analytic));
    double worst = 0.0;
    for (std::size_t idx = 0; idx < target.size(); ++idx) {
        const double orig = target.data()[idx];
        target.data()[idx] = orig + eps;
        const double fp = loss();
        target.data()[idx] = orig - eps;
        const double fm = loss();
        target.data()[idx] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.data()[idx];
        const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-4);
        if (rel > worst) worst = rel;
    }
    return worst;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

struct Reporter {
    std::ostream& out;
    int failures = 0;

    void check(bool ok, const std::string& name, const std::string& detail) {
        out << (ok ? "[PASS] " : "[FAIL] ") << name;
        if (!detail.empty()) out << " (" << detail << ")";
        out << "\n";
        if (!ok) ++failures;
    }
};

AttentionWeights random_weights(Prng& rng, std::size_t h, std::size_t heads, double stddev) {
    AttentionWeights w;
    w.wq = gaussian_init(rng, h, h, stddev);
    w.wk = gaussian_init(rng, h, h, stddev);
    w.wv = gaussian_init(rng, h, h, stddev);
    w.wo = gaussian_init(rng, h, h, stddev);
    w.heads = heads;
    return w;
}

LayerWeights random_layer(Prng& rng, std::size_t h, std::size_t heads, double stddev) {
    LayerWeights l;
    l.attn = random_weights(rng, h, heads, stddev);
    l.ffn_w1 = gaussian_init(rng, h, 4 * h, stddev);
    l.ffn_w2 = gaussian_init(rng, 4 * h, h, stddev);
    return l;
}

LayerWeights zero_layer(std::size_t h, std::size_t heads) {
    LayerWeights l;
    l.attn.wq = Matrix(h, h);
    l.attn.wk = Matrix(h, h);
    l.attn.wv = Matrix(h, h);
    l.attn.wo = Matrix(h, h);
    l.attn.heads = heads;
    l.ffn_w1 = Matrix(h, 4 * h);
    l.ffn_w2 = Matrix(4 * h, h);
    return l;
}

void check_mask_laws(Reporter& rep) {
    bool ok = true;
    std::string detail;
    for (std::size_t k = 0; k <= 32 && ok; ++k) {
        for (std::size_t n = 1; n <= 32 && ok; ++n) {
            const AttentionMask m = build_trapezoidal_mask(k, n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t permitted = 0;
                for (std::size_t j = 0; j < m.key_cols; ++j)
                    if (m.permits(i, j)) ++permitted;
                if (permitted != k + i + 1) {
                    ok = false;
                    detail = "k=" + std::to_string(k) + " n=" + std::to_string(n) +
                             " row " + std::to_string(i) + " permits " + std::to_string(permitted);
                    break;
                }
            }
        }
    }
    rep.check(ok, "mask row-count law: trapezoidal(k,n) row i permits k+i+1 (k,n <= 32)", detail);

    bool causal_ok = true;
    for (std::size_t n = 1; n <= 32 && causal_ok; ++n) {
        const AttentionMask c = build_causal_mask(n);
        const AttentionMask t = build_trapezoidal_mask(0, n);
        causal_ok = c.permit == t.permit && c.key_cols == t.key_cols;
        for (std::size_t i = 0; i < n && causal_ok; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (c.permits(i, j) != (j <= i)) {
                    causal_ok = false;
                    break;
                }
    }
    rep.check(causal_ok, "causal mask is lower-triangular and equals trapezoidal(0,n)", "");
}

void check_softmax_properties(Reporter& rep, std::uint64_t seed, int trials) {
    double worst_sum = 0.0, worst_mass = 0.0;
    for (int t = 0; t < trials; ++t) {
        Prng rng(seed * 7919 + static_cast<std::uint64_t>(t));
        const std::size_t rows = 1 + rng.next_u64() % 8;
        const std::size_t cols = 1 + rng.next_u64() % 12;
        const Matrix scores = uniform_init(rng, rows, cols, -5.0, 5.0);
        AttentionMask mask;
        mask.query_rows = rows;
        mask.key_cols = cols;
        mask.permit.assign(rows * cols, 0);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j)
                mask.permit[i * cols + j] = rng.next_double() < 0.5 ? 1 : 0;
            mask.permit[i * cols + rng.next_u64() % cols] = 1;  // at least one survivor
        }
        const Matrix probs = softmax_rows_masked(scores, mask);
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                s += probs(i, j);
                if (!mask.permits(i, j)) worst_mass = std::max(worst_mass, std::abs(probs(i, j)));
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
    }
    rep.check(worst_sum <= 1e-12 && worst_mass == 0.0,
              "softmax rows sum to 1 and masked entries are exactly zero",
              "max |sum-1| " + fmt(worst_sum) + ", max masked mass " + fmt(worst_mass));
}

void check_attention_oracles(Reporter& rep, std::uint64_t seed, int trials) {
    double worst_self = 0.0;
    for (int t = 0; t < trials; ++t) {
        Prng rng(seed * 104729 + static_cast<std::uint64_t>(t));
        const std::size_t heads = (t % 2 == 0) ? 1 : 2;
        const std::size_t h = heads * (2 + rng.next_u64() % 3);
        const std::size_t n = 1 + rng.next_u64() % 8;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix x = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix got = self_attention_forward(x, w, build_causal_mask(n));
        const Matrix want = reference_self_attention(x, w);
        worst_self = std::max(worst_self, approx_equal(got, want, 1e-12).max_abs_diff);
    }
    rep.check(worst_self < 1e-12, "self-attention matches straight-line oracle",
              "max diff " + fmt(worst_self) + ", tolerance 1e-12");

    double worst_slice = 0.0;
    for (int t = 0; t < trials; ++t) {
        Prng rng(seed * 15485863 + static_cast<std::uint64_t>(t));
        const std::size_t heads = (t % 2 == 0) ? 1 : 2;
        const std::size_t h = (t % 4 < 2) ? 4 : 8;
        const std::size_t k = rng.next_u64() % 13;
        const std::size_t n = 1 + rng.next_u64() % 12;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
        const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix got = composite_attention_forward(visual, text, w);
        const Matrix want = reference_composite_attention(visual, text, w);
        worst_slice = std::max(worst_slice, approx_equal(got, want, 1e-9).max_abs_diff);
    }
    rep.check(worst_slice < 1e-9,
              "composite attention equals text-row slice of masked full attention",
              "max diff " + fmt(worst_slice) + ", tolerance 1e-9");

    double worst_red = 0.0;
    for (int t = 0; t < trials; ++t) {
        Prng rng(seed * 32452843 + static_cast<std::uint64_t>(t));
        const std::size_t heads = 1 + rng.next_u64() % 2;
        const std::size_t h = heads * (2 + rng.next_u64() % 3);
        const std::size_t n = 1 + rng.next_u64() % 16;
        const AttentionWeights w = random_weights(rng, h, heads, 0.3);
        const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix composite = composite_attention_forward(Matrix(0, h), text, w);
        const Matrix self = self_attention_forward(text, w, build_causal_mask(n));
        worst_red = std::max(worst_red, approx_equal(composite, self, 0.0).max_abs_diff);
    }
    rep.check(worst_red == 0.0, "k=0 reduction: composite attention == causal self-attention",
              "max diff " + fmt(worst_red) + ", required exact");

    // Permutation of visual tokens: keys/values move but each text row's
    // attention-weighted sum is unchanged.
    double worst_perm = 0.0;
    for (int t = 0; t < trials; ++t) {
        Prng rng(seed * 49979687 + static_cast<std::uint64_t>(t));
        const std::size_t h = 8;
        const std::size_t k = 2 + rng.next_u64() % 8;
        const std::size_t n = 1 + rng.next_u64() % 6;
        const AttentionWeights w = random_weights(rng, h, 2, 0.3);
        const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
        const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
        Matrix reversed(k, h);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < h; ++j) reversed(i, j) = visual(k - 1 - i, j);
        const Matrix out_a = composite_attention_forward(visual, text, w);
        const Matrix out_b = composite_attention_forward(reversed, text, w);
        worst_perm = std::max(worst_perm, approx_equal(out_a, out_b, 1e-12).max_abs_diff);

        Matrix equal_rows(k, h);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < h; ++j) equal_rows(i, j) = visual(0, j);
        const Matrix out_c = composite_attention_forward(equal_rows, text, w);
        Matrix equal_rev(k, h);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < h; ++j) equal_rev(i, j) = equal_rows(k - 1 - i, j);
        const Matrix out_d = composite_attention_forward(equal_rev, text, w);
        worst_perm = std::max(worst_perm, approx_equal(out_c, out_d, 1e-12).max_abs_diff);
    }
    rep.check(worst_perm < 1e-12, "visual token order does not change text attention output",
              "max diff " + fmt(worst_perm) + ", tolerance 1e-12");
}

void check_aligner_identities(Reporter& rep) {
    const std::size_t h = 6, k = 5;
    Prng rng(11);
    const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);

    LayerWeights zero = zero_layer(h, 2);
    const double d0 = approx_equal(aligner_forward(visual, zero), visual, 0.0).max_abs_diff;
    rep.check(d0 == 0.0, "aligner with zero weights is the identity (O == I exactly)",
              "max diff " + fmt(d0));

    LayerWeights ident = zero_layer(h, 2);
    ident.attn.wv = Matrix::identity(h);
    ident.attn.wo = Matrix::identity(h);
    const double d1 =
        approx_equal(aligner_forward(visual, ident), scale(visual, 2.0), 0.0).max_abs_diff;
    rep.check(d1 == 0.0, "aligner with Wv=Wo=identity and zero FFN doubles its input (O == 2I)",
              "max diff " + fmt(d1));

    // Weight sharing is structural: changing the layer's Wv must change the
    // aligner's output.
    Prng rng2(12);
    LayerWeights shared = random_layer(rng2, h, 2, 0.2);
    const Matrix before = aligner_forward(visual, shared);
    shared.attn.wv(0, 0) += 0.5;
    const Matrix after = aligner_forward(visual, shared);
    rep.check(approx_equal(before, after, 0.0).max_abs_diff > 0.0,
              "aligner reads the layer's Wv (mutating it changes the output)", "");
}

void check_model_reductions(Reporter& rep, std::uint64_t seed) {
    double worst = 0.0;
    for (std::size_t depth = 1; depth <= 4; ++depth) {
        ModelConfig cfg;
        cfg.depth = depth;
        cfg.hidden_dim = 8;
        cfg.heads = 2;
        cfg.vocab_size = 17;
        cfg.feature_dim = 5;
        cfg.mode = Mode::composite;
        Model composite = build_model(cfg, seed + depth);
        Model baseline = composite;
        baseline.config.mode = Mode::baseline;

        const Matrix no_image(0, cfg.feature_dim);
        const std::vector<int> ids = {1, 4, 2, 9, 16, 0};
        const Matrix lc = model_forward(composite, no_image, ids);
        const Matrix lb = model_forward(baseline, no_image, ids);
        worst = std::max(worst, approx_equal(lc, lb, 0.0).max_abs_diff);
    }
    rep.check(worst == 0.0, "k=0 collapses composite mode to baseline mode at depths 1..4",
              "max logit diff " + fmt(worst) + ", required exact");

    // All-zero weights make every layer the identity map.
    const std::size_t h = 8;
    LayerWeights zero = zero_layer(h, 2);
    Prng rng(seed + 99);
    const Matrix visual = uniform_init(rng, 3, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, 5, h, -1.0, 1.0);
    auto [v_out, t_out] = composite_decoder_layer(visual, text, zero);
    const double dv = approx_equal(v_out, visual, 0.0).max_abs_diff;
    const double dt = approx_equal(t_out, text, 0.0).max_abs_diff;
    const Matrix x_out = baseline_decoder_layer(vstack(visual, text), zero);
    const double dx = approx_equal(x_out, vstack(visual, text), 0.0).max_abs_diff;
    rep.check(dv == 0.0 && dt == 0.0 && dx == 0.0,
              "zero-weight layers are the identity on (visual, text)",
              "diffs " + fmt(dv) + "/" + fmt(dt) + "/" + fmt(dx));
}

void check_cache_agreement(Reporter& rep, std::uint64_t seed) {
    for (Mode mode : {Mode::baseline, Mode::composite}) {
        ModelConfig cfg;
        cfg.depth = 3;
        cfg.hidden_dim = 16;
        cfg.heads = 4;
        cfg.vocab_size = 23;
        cfg.feature_dim = 7;
        cfg.mode = mode;
        const Model model = build_model(cfg, seed + (mode == Mode::composite ? 1 : 0));
        Prng rng(seed + 17);
        const Matrix features = gaussian_init(rng, 6, cfg.feature_dim, 1.0);
        const std::vector<int> prompt = {3, 14, 8, 1};
        const std::size_t max_new = 12;

        const std::vector<int> cached = generate_greedy(model, features, prompt, max_new);

        // No-cache recompute: rerun the whole model for every step.
        std::vector<int> full = prompt;
        std::vector<int> recomputed;
        double worst_logit = 0.0;
        PrefillResult pre = prefill(model, features, prompt);
        Matrix cache_logits = pre.logits;
        for (std::size_t i = 0; i < max_new; ++i) {
            const Matrix logits = model_forward(model, features, full);
            const Matrix last = slice_rows(logits, logits.rows() - 1, 1);
            worst_logit = std::max(worst_logit,
                                   approx_equal(cache_logits, last, 1e-9).max_abs_diff);
            const int next = argmax_row(last);
            recomputed.push_back(next);
            full.push_back(next);
            if (i + 1 < max_new) cache_logits = decode_step(model, pre.cache, next);
        }
        const bool ids_equal = cached == recomputed;
        rep.check(ids_equal && worst_logit < 1e-9,
                  std::string("cache/no-cache agreement (") + mode_name(mode) + " mode)",
                  std::string("ids ") + (ids_equal ? "equal" : "DIFFER") + ", max logit diff " +
                      fmt(worst_logit) + ", tolerance 1e-9");
    }
}

void check_instrumented_counts(Reporter& rep, std::uint64_t seed) {
    bool baseline_exact = true;
    bool delta_stable = true;
    std::string detail;
    for (int t = 0; t < 10; ++t) {
        Prng rng(seed * 2654435761ULL + static_cast<std::uint64_t>(t));
        ModelConfig cfg;
        cfg.heads = 1 + rng.next_u64() % 2;
        cfg.hidden_dim = cfg.heads * (2 + rng.next_u64() % 8);
        cfg.depth = 1 + rng.next_u64() % 3;
        cfg.vocab_size = 11;
        cfg.feature_dim = 5;
        const Model model = build_model(cfg, seed + t);
        const std::size_t k = rng.next_u64() % 17;
        const std::size_t n = 1 + rng.next_u64() % 16;

        CostConfig cc;
        cc.text_len = n;
        cc.visual_len = k;
        cc.hidden_dim = cfg.hidden_dim;
        cc.depth = cfg.depth;
        const InstrumentedCounts counts = instrumented_flops(model, k, n);
        if (counts.baseline != flops_baseline_total(cc)) {
            baseline_exact = false;
            detail = "T=" + std::to_string(n) + " V=" + std::to_string(k) +
                     " h=" + std::to_string(cfg.hidden_dim) + " d=" + std::to_string(cfg.depth);
        }
        const std::uint64_t expected_delta =
            2 * (n + k) * cfg.hidden_dim * cfg.hidden_dim * cfg.depth;
        if (counts.composite != flops_ee_total(cc) + expected_delta) delta_stable = false;
    }
    rep.check(baseline_exact, "instrumented baseline FLOPs equal the analytic formula exactly",
              detail.empty() ? "10 random toy configs" : detail);
    rep.check(delta_stable,
              "instrumented ee delta vs formula is exactly 2(T+V)h^2 per layer",
              "10 random toy configs");

    // Prefill comparison: composite must do strictly less work whenever an
    // image is present.
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 16;
    cfg.heads = 2;
    cfg.vocab_size = 19;
    cfg.feature_dim = 9;
    cfg.mode = Mode::baseline;
    const Model baseline = build_model(cfg, seed + 5);
    Model composite = baseline;
    composite.config.mode = Mode::composite;
    Prng rng(seed + 6);
    const Matrix features = gaussian_init(rng, 8, cfg.feature_dim, 1.0);
    const std::vector<int> prompt = {2, 7, 4};
    std::uint64_t fb = 0, fc = 0;
    {
        flops::Scope scope;
        prefill(baseline, features, prompt);
        fb = scope.count();
    }
    {
        flops::Scope scope;
        prefill(composite, features, prompt);
        fc = scope.count();
    }
    rep.check(fc < fb, "composite prefill counts fewer FLOPs than baseline prefill (k >= 1)",
              std::to_string(fc) + " < " + std::to_string(fb));
}

}  // namespace

int run_verify(std::ostream& out, std::uint64_t seed, int trials) {
    out << "verify: seed=" << seed << " trials=" << trials << "\n";
    Reporter rep{out};
    check_mask_laws(rep);
    check_softmax_properties(rep, seed, trials);
    check_attention_oracles(rep, seed, trials);
    check_aligner_identities(rep);
    check_model_reductions(rep, seed);
    check_cache_agreement(rep, seed);
    check_instrumented_counts(rep, seed);
    out << (rep.failures == 0 ? "verify: all checks passed\n"
                              : "verify: " + std::to_string(rep.failures) + " check(s) FAILED\n");
    return rep.failures;
}

namespace {

struct GradTarget {
    std::string name;
    double max_rel_err = 0.0;
};

void gradcheck_config(std::uint64_t seed, double eps, std::size_t k, std::size_t n,
                      std::size_t h, std::size_t heads, std::vector<GradTarget>& targets) {
    Prng rng(seed);
    const LayerWeights layer = random_layer(rng, h, heads, 0.2);
    const Matrix visual = uniform_init(rng, k, h, -1.0, 1.0);
    const Matrix text = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix up_text = uniform_init(rng, n, h, -1.0, 1.0);
    const Matrix up_visual = uniform_init(rng, k, h, -1.0, 1.0);
    const Matrix up_ffn = uniform_init(rng, n, h, -1.0, 1.0);

    auto note = [&](const std::string& name, double err) {
        targets.push_back({name + " (k=" + std::to_string(k) + ",n=" + std::to_string(n) +
                               ",h=" + std::to_string(h) + ",a=" + std::to_string(heads) + ")",
                           err});
    };

    {  // composite attention
        LayerWeights w = layer;
        Matrix v = visual, t = text;
        const auto loss = [&] { return inner(up_text, composite_attention_forward(v, t, w.attn)); };
        const CompositeAttentionGrads g = composite_attention_backward(v, t, w.attn, up_text);
        double err = 0.0;
        err = std::max(err, max_rel_err_vs_fd(v, g.visual, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(t, g.text, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wq, g.wq, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wk, g.wk, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wv, g.wv, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wo, g.wo, loss, eps));
        note("composite attention", err);
    }

    {  // ffn
        LayerWeights w = layer;
        Matrix x = text;
        const auto loss = [&] { return inner(up_ffn, ffn_forward(x, w)); };
        const FfnGrads g = ffn_backward(x, w, up_ffn);
        double err = 0.0;
        err = std::max(err, max_rel_err_vs_fd(x, g.input, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w1, g.w1, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w2, g.w2, loss, eps));
        note("ffn", err);
    }

    {  // aligner
        LayerWeights w = layer;
        Matrix v = visual;
        const auto loss = [&] { return inner(up_visual, aligner_forward(v, w)); };
        const AlignerGrads g = aligner_backward(v, w, up_visual);
        double err = 0.0;
        err = std::max(err, max_rel_err_vs_fd(v, g.input, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wv, g.wv, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wo, g.wo, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w1, g.w1, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w2, g.w2, loss, eps));
        note("aligner", err);
    }

    {  // full composite decoder layer
        LayerWeights w = layer;
        Matrix v = visual, t = text;
        const auto loss = [&] {
            auto [vo, to] = composite_decoder_layer(v, t, w);
            return inner(up_visual, vo) + inner(up_text, to);
        };
        const CompositeLayerGrads g =
            composite_decoder_layer_backward(v, t, w, up_visual, up_text);
        double err = 0.0;
        err = std::max(err, max_rel_err_vs_fd(v, g.visual, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(t, g.text, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wq, g.wq, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wk, g.wk, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wv, g.wv, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.attn.wo, g.wo, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w1, g.w1, loss, eps));
        err = std::max(err, max_rel_err_vs_fd(w.ffn_w2, g.w2, loss, eps));
        note("composite decoder layer", err);
    }
}

}  // namespace

int run_gradcheck(std::ostream& out, std::uint64_t seed, double eps) {
    out << "gradcheck: seed=" << seed << " eps=" << fmt(eps) << " tolerance 1e-4\n";
    constexpr double tolerance = 1e-4;
    const struct {
        std::size_t k, n, h, a;
    } configs[] = {{3, 4, 8, 2}, {0, 5, 8, 1}, {6, 2, 4, 1}};

    std::vector<GradTarget> targets;
    for (const auto& c : configs) gradcheck_config(seed, eps, c.k, c.n, c.h, c.a, targets);

    int failures = 0;
    for (const GradTarget& t : targets) {
        const bool ok = t.max_rel_err < tolerance;
        out << (ok ? "[PASS] " : "[FAIL] ") << t.name << " max rel err " << fmt(t.max_rel_err)
            << "\n";
        if (!ok) ++failures;
    }
    out << (failures == 0 ? "gradcheck: all targets passed\n"
                          : "gradcheck: " + std::to_string(failures) + " target(s) FAILED\n");
    return failures;
}

}  // namespace eeml::checks
