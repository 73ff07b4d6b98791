#include "eeml/layers.hpp"

#include <bit>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "eeml/kernels.hpp"

namespace eeml {

const char* mode_name(Mode mode) { return mode == Mode::baseline ? "baseline" : "composite"; }

void ModelConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("ModelConfig: hidden_dim must be >= 1");
    if (heads < 1 || hidden_dim % heads != 0)
        throw std::invalid_argument("ModelConfig: heads (" + std::to_string(heads) +
                                    ") must divide hidden_dim (" + std::to_string(hidden_dim) +
                                    ")");
    if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
    if (feature_dim < 1) throw std::invalid_argument("ModelConfig: feature_dim must be >= 1");
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    constexpr double stddev = 0.02;
    Prng rng(seed);
    Model m;
    m.config = config;
    const std::size_t h = config.hidden_dim;
    m.embed = gaussian_init(rng, config.vocab_size, h, stddev);
    m.unembed = gaussian_init(rng, h, config.vocab_size, stddev);
    m.projector_w1 = gaussian_init(rng, config.feature_dim, h, stddev);
    m.projector_w2 = gaussian_init(rng, h, h, stddev);
    m.layers.reserve(config.depth);
    for (std::size_t l = 0; l < config.depth; ++l) {
        LayerWeights lw;
        lw.attn.wq = gaussian_init(rng, h, h, stddev);
        lw.attn.wk = gaussian_init(rng, h, h, stddev);
        lw.attn.wv = gaussian_init(rng, h, h, stddev);
        lw.attn.wo = gaussian_init(rng, h, h, stddev);
        lw.attn.heads = config.heads;
        lw.ffn_w1 = gaussian_init(rng, h, 4 * h, stddev);
        lw.ffn_w2 = gaussian_init(rng, 4 * h, h, stddev);
        m.layers.push_back(std::move(lw));
    }
    return m;
}

Matrix projector_forward(const Matrix& features, const Model& model) {
    const std::size_t fd = model.config.feature_dim;
    if (features.rows() == 0) return Matrix(0, model.config.hidden_dim);
    if (features.cols() != fd)
        throw std::invalid_argument("projector_forward: features " + shape_str(features) +
                                    " do not match feature_dim " + std::to_string(fd));
    return matmul(gelu(matmul(features, model.projector_w1)), model.projector_w2);
}

Matrix ffn_forward(const Matrix& x, const LayerWeights& layer) {
    if (x.cols() != layer.ffn_w1.rows())
        throw std::invalid_argument("ffn_forward: input " + shape_str(x) + " does not match W1 " +
                                    shape_str(layer.ffn_w1));
    return matmul(gelu(matmul(x, layer.ffn_w1)), layer.ffn_w2);
}

Matrix aligner_forward(const Matrix& visual, const LayerWeights& layer) {
    Matrix v = visual;
    if (v.rows() == 0 && v.cols() != layer.attn.wv.rows()) v = Matrix(0, layer.attn.wv.rows());
    return aligner_forward(v, matmul(v, layer.attn.wv), layer);
}

Matrix aligner_forward(const Matrix& visual, const Matrix& visual_values,
                       const LayerWeights& layer) {
    const std::size_t h = layer.attn.wv.rows();
    if (visual.rows() > 0 && visual.cols() != h)
        throw std::invalid_argument("aligner_forward: visual " + shape_str(visual) +
                                    " does not match hidden dim " + std::to_string(h));
    if (visual_values.rows() != visual.rows())
        throw std::invalid_argument("aligner_forward: visual values " + shape_str(visual_values) +
                                    " do not match visual " + shape_str(visual));
    const Matrix hid = add(matmul(visual_values, layer.attn.wo), visual);
    return add(ffn_forward(hid, layer), hid);
}

std::pair<Matrix, Matrix> composite_decoder_layer(const Matrix& visual, const Matrix& text,
                                                  const LayerWeights& layer, LayerKV* kv) {
    const std::size_t h = layer.attn.wq.rows();
    Matrix v = visual;
    if (v.rows() == 0 && v.cols() != h) v = Matrix(0, h);

    const Matrix visual_values = matmul(v, layer.attn.wv);  // shared with the aligner
    const Matrix attn_out =
        composite_attention_forward(v, text, layer.attn, visual_values,
                                    kv ? &kv->keys : nullptr, kv ? &kv->values : nullptr);
    const Matrix text_mid = add(text, attn_out);
    Matrix text_out = add(text_mid, ffn_forward(text_mid, layer));
    Matrix visual_out = aligner_forward(v, visual_values, layer);
    return {std::move(visual_out), std::move(text_out)};
}

Matrix baseline_decoder_layer(const Matrix& x, const LayerWeights& layer, LayerKV* kv) {
    const AttentionMask mask = build_causal_mask(x.rows());
    const Matrix attn_out = self_attention_forward(x, layer.attn, mask, kv ? &kv->keys : nullptr,
                                                   kv ? &kv->values : nullptr);
    const Matrix x_mid = add(x, attn_out);
    return add(x_mid, ffn_forward(x_mid, layer));
}

Matrix embed_tokens(const Model& model, const std::vector<int>& text_ids) {
    if (text_ids.empty()) throw std::invalid_argument("embed_tokens: empty token list");
    const std::size_t h = model.config.hidden_dim;
    Matrix t(text_ids.size(), h);
    for (std::size_t i = 0; i < text_ids.size(); ++i) {
        const int id = text_ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab_size)
            throw std::invalid_argument("embed_tokens: token id " + std::to_string(id) +
                                        " outside vocab of " +
                                        std::to_string(model.config.vocab_size));
        for (std::size_t j = 0; j < h; ++j) t(i, j) = model.embed(static_cast<std::size_t>(id), j);
    }
    return t;
}

Matrix model_forward(const Model& model, const Matrix& visual_features,
                     const std::vector<int>& text_ids) {
    Matrix visual = projector_forward(visual_features, model);
    Matrix text = embed_tokens(model, text_ids);
    const std::size_t k = visual.rows();
    const std::size_t n = text.rows();

    if (model.config.mode == Mode::composite) {
        for (const LayerWeights& layer : model.layers) {
            auto [v, t] = composite_decoder_layer(visual, text, layer);
            visual = std::move(v);
            text = std::move(t);
        }
        return matmul(text, model.unembed);
    }
    Matrix x = vstack(visual, text);
    for (const LayerWeights& layer : model.layers) x = baseline_decoder_layer(x, layer);
    return matmul(slice_rows(x, k, n), model.unembed);
}

FfnGrads ffn_backward(const Matrix& x, const LayerWeights& layer, const Matrix& upstream) {
    if (upstream.rows() != x.rows() || upstream.cols() != layer.ffn_w2.cols())
        throw std::invalid_argument("ffn_backward: upstream " + shape_str(upstream) +
                                    " does not match output of " + shape_str(x));
    const Matrix z = matmul(x, layer.ffn_w1);
    const Matrix a = gelu(z);
    FfnGrads g;
    g.w2 = matmul(transpose(a), upstream);
    const Matrix dz = hadamard(matmul(upstream, transpose(layer.ffn_w2)), gelu_grad(z));
    g.w1 = matmul(transpose(x), dz);
    g.input = matmul(dz, transpose(layer.ffn_w1));
    return g;
}

AlignerGrads aligner_backward(const Matrix& visual, const LayerWeights& layer,
                              const Matrix& upstream) {
    const std::size_t h = layer.attn.wv.rows();
    Matrix v = visual;
    if (v.rows() == 0 && v.cols() != h) v = Matrix(0, h);
    if (upstream.rows() != v.rows() || (v.rows() > 0 && upstream.cols() != h))
        throw std::invalid_argument("aligner_backward: upstream " + shape_str(upstream) +
                                    " does not match visual " + shape_str(v));

    const Matrix values = matmul(v, layer.attn.wv);
    const Matrix hid = add(matmul(values, layer.attn.wo), v);

    const FfnGrads ffn = ffn_backward(hid, layer, upstream);
    const Matrix d_hid = add(upstream, ffn.input);

    AlignerGrads g;
    g.w1 = ffn.w1;
    g.w2 = ffn.w2;
    g.wo = matmul(transpose(values), d_hid);
    const Matrix d_values = matmul(d_hid, transpose(layer.attn.wo));
    g.wv = matmul(transpose(v), d_values);
    g.input = add(d_hid, matmul(d_values, transpose(layer.attn.wv)));
    return g;
}

CompositeLayerGrads composite_decoder_layer_backward(const Matrix& visual, const Matrix& text,
                                                     const LayerWeights& layer,
                                                     const Matrix& upstream_visual,
                                                     const Matrix& upstream_text) {
    const std::size_t h = layer.attn.wq.rows();
    Matrix v = visual;
    if (v.rows() == 0 && v.cols() != h) v = Matrix(0, h);

    // Text path: text_out = text_mid + FFN(text_mid), text_mid = text + attn.
    const Matrix attn_out = composite_attention_forward(v, text, layer.attn);
    const Matrix text_mid = add(text, attn_out);

    const FfnGrads ffn_text = ffn_backward(text_mid, layer, upstream_text);
    const Matrix d_text_mid = add(upstream_text, ffn_text.input);

    const CompositeAttentionGrads attn = composite_attention_backward(v, text, layer.attn,
                                                                      d_text_mid);

    // Visual path through the aligner; shares Wv, Wo and the FFN weights.
    const AlignerGrads alg = aligner_backward(v, layer, upstream_visual);

    CompositeLayerGrads g;
    g.text = add(d_text_mid, attn.text);
    g.visual = add(attn.visual, alg.input);
    g.wq = attn.wq;
    g.wk = attn.wk;
    g.wv = add(attn.wv, alg.wv);
    g.wo = add(attn.wo, alg.wo);
    g.w1 = add(ffn_text.w1, alg.w1);
    g.w2 = add(ffn_text.w2, alg.w2);
    return g;
}

// --- binary IO ---

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("weight file: truncated reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& in, const char* what) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error(std::string("file: truncated reading ") + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void write_matrix(std::ostream& out, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) write_f64_le(out, m.data()[i]);
}

Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols, const char* what) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = read_f64_le(in, what);
    return m;
}

std::uint32_t to_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument(std::string("weight file: ") + what + " does not fit u32");
    return static_cast<std::uint32_t>(v);
}

constexpr char kMagic[4] = {'E', 'E', 'M', 'L'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_model(const Model& model, const std::string& path) {
    model.config.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write(kMagic, 4);
    write_u32_le(out, kVersion);
    write_u32_le(out, to_u32(model.config.depth, "depth"));
    write_u32_le(out, to_u32(model.config.hidden_dim, "hidden_dim"));
    write_u32_le(out, to_u32(model.config.heads, "heads"));
    write_u32_le(out, to_u32(model.config.vocab_size, "vocab_size"));
    write_u32_le(out, to_u32(model.config.feature_dim, "feature_dim"));
    write_u32_le(out, static_cast<std::uint32_t>(model.config.mode));
    write_matrix(out, model.embed);
    write_matrix(out, model.unembed);
    write_matrix(out, model.projector_w1);
    write_matrix(out, model.projector_w2);
    for (const LayerWeights& l : model.layers) {
        write_matrix(out, l.attn.wq);
        write_matrix(out, l.attn.wk);
        write_matrix(out, l.attn.wv);
        write_matrix(out, l.attn.wo);
        write_matrix(out, l.ffn_w1);
        write_matrix(out, l.ffn_w2);
    }
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || magic[0] != 'E' || magic[1] != 'E' || magic[2] != 'M' ||
        magic[3] != 'L')
        throw std::runtime_error("load_model: bad magic in " + path);
    const std::uint32_t version = read_u32_le(in, "version");
    if (version != kVersion)
        throw std::runtime_error("load_model: unsupported version " + std::to_string(version));

    Model m;
    m.config.depth = read_u32_le(in, "depth");
    m.config.hidden_dim = read_u32_le(in, "hidden_dim");
    m.config.heads = read_u32_le(in, "heads");
    m.config.vocab_size = read_u32_le(in, "vocab_size");
    m.config.feature_dim = read_u32_le(in, "feature_dim");
    const std::uint32_t mode = read_u32_le(in, "mode");
    if (mode > 1) throw std::runtime_error("load_model: bad mode byte " + std::to_string(mode));
    m.config.mode = static_cast<Mode>(mode);
    m.config.validate();

    const std::size_t h = m.config.hidden_dim;
    m.embed = read_matrix(in, m.config.vocab_size, h, "embed");
    m.unembed = read_matrix(in, h, m.config.vocab_size, "unembed");
    m.projector_w1 = read_matrix(in, m.config.feature_dim, h, "projector_w1");
    m.projector_w2 = read_matrix(in, h, h, "projector_w2");
    m.layers.reserve(m.config.depth);
    for (std::size_t l = 0; l < m.config.depth; ++l) {
        LayerWeights lw;
        lw.attn.wq = read_matrix(in, h, h, "wq");
        lw.attn.wk = read_matrix(in, h, h, "wk");
        lw.attn.wv = read_matrix(in, h, h, "wv");
        lw.attn.wo = read_matrix(in, h, h, "wo");
        lw.attn.heads = m.config.heads;
        lw.ffn_w1 = read_matrix(in, h, 4 * h, "ffn_w1");
        lw.ffn_w2 = read_matrix(in, 4 * h, h, "ffn_w2");
        m.layers.push_back(std::move(lw));
    }
    return m;
}

void save_features(const Matrix& features, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_features: cannot open " + path);
    write_u32_le(out, to_u32(features.rows(), "rows"));
    write_u32_le(out, to_u32(features.cols(), "cols"));
    write_matrix(out, features);
    if (!out) throw std::runtime_error("save_features: write failed for " + path);
}

Matrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_features: cannot open " + path);
    const std::uint32_t rows = read_u32_le(in, "rows");
    const std::uint32_t cols = read_u32_le(in, "cols");
    return read_matrix(in, rows, cols, "features");
}

}  // namespace eeml
