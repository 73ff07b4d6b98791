#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eeml/attention.hpp"
#include "eeml/matrix.hpp"

namespace eeml {

enum class Mode : std::uint32_t { baseline = 0, composite = 1 };

const char* mode_name(Mode mode);

// One decoder layer. The aligner owns no weights of its own: it reads Wv, Wo
// and the FFN straight from these fields, so it can never drift from the
// attention module it shadows.
struct LayerWeights {
    AttentionWeights attn;
    Matrix ffn_w1;  // h x 4h
    Matrix ffn_w2;  // 4h x h
};

struct ModelConfig {
    std::size_t depth = 1;        // decoder layers
    std::size_t hidden_dim = 8;   // h
    std::size_t heads = 1;        // must divide hidden_dim
    std::size_t vocab_size = 16;  // >= 2
    std::size_t feature_dim = 8;  // raw visual feature width
    Mode mode = Mode::composite;

    void validate() const;
};

struct Model {
    ModelConfig config;
    Matrix embed;          // vocab x h
    Matrix unembed;        // h x vocab
    Matrix projector_w1;   // feat_dim x h
    Matrix projector_w2;   // h x h
    std::vector<LayerWeights> layers;
};

// Deterministic Gaussian init (stddev 0.02, no biases). Matrices are drawn in
// the same order they appear in the weight file, so one seed pins the whole
// model bit-for-bit.
Model build_model(const ModelConfig& config, std::uint64_t seed);

// Two-layer MLP mapping raw visual features into the hidden space:
// gelu(features * W1) * W2. A 0-row features matrix (no image) is legal.
Matrix projector_forward(const Matrix& features, const Model& model);

// gelu(x * ffn_w1) * ffn_w2; inner width is fixed at 4h.
Matrix ffn_forward(const Matrix& x, const LayerWeights& layer);

// Aligner: H = I*Wv*Wo + I, O = FFN(H) + H, reusing the layer's own Wv, Wo
// and FFN. A decoder block without attention.
Matrix aligner_forward(const Matrix& visual, const LayerWeights& layer);

// Variant taking the precomputed visual*Wv shared with the attention module.
Matrix aligner_forward(const Matrix& visual, const Matrix& visual_values,
                       const LayerWeights& layer);

// Keys/values one layer contributes to a KV cache.
struct LayerKV {
    Matrix keys;
    Matrix values;
};

// Composite decoder layer. Attention keys/values come from the layer-input
// visual state; the visual value projection is computed once and shared
// between the attention and the aligner. Returns (visual', text').
std::pair<Matrix, Matrix> composite_decoder_layer(const Matrix& visual, const Matrix& text,
                                                  const LayerWeights& layer,
                                                  LayerKV* kv = nullptr);

// Concatenation-style layer: causal self-attention then FFN, both residual.
Matrix baseline_decoder_layer(const Matrix& x, const LayerWeights& layer, LayerKV* kv = nullptr);

// Full forward pass to logits (text rows x vocab). Composite mode keeps
// visual and text streams separate; baseline mode concatenates them and
// slices the text rows at the end.
Matrix model_forward(const Model& model, const Matrix& visual_features,
                     const std::vector<int>& text_ids);

Matrix embed_tokens(const Model& model, const std::vector<int>& text_ids);

// --- analytic backward passes (verification only; there is no training) ---

struct FfnGrads {
    Matrix input, w1, w2;
};
FfnGrads ffn_backward(const Matrix& x, const LayerWeights& layer, const Matrix& upstream);

struct AlignerGrads {
    Matrix input, wv, wo, w1, w2;
};
AlignerGrads aligner_backward(const Matrix& visual, const LayerWeights& layer,
                              const Matrix& upstream);

struct CompositeLayerGrads {
    Matrix visual, text;
    Matrix wq, wk, wv, wo, w1, w2;
};
CompositeLayerGrads composite_decoder_layer_backward(const Matrix& visual, const Matrix& text,
                                                     const LayerWeights& layer,
                                                     const Matrix& upstream_visual,
                                                     const Matrix& upstream_text);

// --- binary file formats (little-endian) ---
//
// Weight file: magic "EEML", version u32 = 1, then d, h, a, vocab, feat_dim,
// mode as u32, then raw row-major f64 matrices in declaration order: embed,
// unembed, projector_w1, projector_w2, then per layer Wq, Wk, Wv, Wo,
// ffn_w1, ffn_w2.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// Visual feature file: u32 rows, u32 cols, raw row-major f64.
void save_features(const Matrix& features, const std::string& path);
Matrix load_features(const std::string& path);

}  // namespace eeml
