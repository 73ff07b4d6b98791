#include "eeml/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "eeml/kernels.hpp"

namespace eeml {

KVCache::KVCache(std::size_t depth, std::size_t hidden_dim)
    : hidden_(hidden_dim), slots_(depth) {
    if (depth == 0 || hidden_dim == 0)
        throw std::invalid_argument("KVCache: depth and hidden_dim must be >= 1");
}

std::size_t KVCache::positions() const {
    if (slots_.empty()) return 0;
    const std::size_t rows = slots_.front().rows;
    for (const Slot& s : slots_)
        if (s.rows != rows) throw std::logic_error("KVCache: layers disagree on position count");
    return rows;
}

void KVCache::reserve(std::size_t total_positions) {
    for (Slot& s : slots_) {
        s.keys.reserve(total_positions * hidden_);
        s.values.reserve(total_positions * hidden_);
    }
}

void KVCache::append_block(std::size_t layer, const Matrix& keys, const Matrix& values) {
    if (layer >= slots_.size()) throw std::invalid_argument("KVCache: layer out of range");
    if (keys.cols() != hidden_ || values.cols() != hidden_ || keys.rows() != values.rows())
        throw std::invalid_argument("KVCache: block shape mismatch: keys " + shape_str(keys) +
                                    ", values " + shape_str(values));
    Slot& s = slots_[layer];
    s.keys.insert(s.keys.end(), keys.data(), keys.data() + keys.size());
    s.values.insert(s.values.end(), values.data(), values.data() + values.size());
    s.rows += keys.rows();
}

void KVCache::append_row(std::size_t layer, const double* key_row, const double* value_row) {
    Slot& s = slots_[layer];
    s.keys.insert(s.keys.end(), key_row, key_row + hidden_);
    s.values.insert(s.values.end(), value_row, value_row + hidden_);
    s.rows += 1;
}

const double* KVCache::key_data(std::size_t layer) const { return slots_[layer].keys.data(); }
const double* KVCache::value_data(std::size_t layer) const { return slots_[layer].values.data(); }

Matrix KVCache::keys_matrix(std::size_t layer) const {
    const Slot& s = slots_[layer];
    Matrix m(s.rows, hidden_);
    std::copy(s.keys.begin(), s.keys.end(), m.data());
    return m;
}

Matrix KVCache::values_matrix(std::size_t layer) const {
    const Slot& s = slots_[layer];
    Matrix m(s.rows, hidden_);
    std::copy(s.values.begin(), s.values.end(), m.data());
    return m;
}

void KVCache::set_counts(std::size_t visual, std::size_t text) {
    visual_count_ = visual;
    text_count_ = text;
}

namespace {

// Single query row against the cached keys/values; every position permitted.
// Scores and the value blend are recorded with the 2*m*n*p convention as the
// (1 x dh)*(dh x len) and (1 x len)*(len x dh) products they stand for.
void attend_cached(const double* q, const double* keys, const double* values, std::size_t len,
                   std::size_t hidden, std::size_t heads, double* out) {
    const std::size_t dh = hidden / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> p(len);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t off = head * dh;
        flops::add(2ULL * dh * len);
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) {
            const double* krow = keys + t * hidden + off;
            double dot = 0.0;
            for (std::size_t j = 0; j < dh; ++j) dot += q[off + j] * krow[j];
            p[t] = dot * inv_scale;
            if (p[t] > row_max) row_max = p[t];
        }
        double denom = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            p[t] = std::exp(p[t] - row_max);
            denom += p[t];
        }
        for (std::size_t t = 0; t < len; ++t) p[t] /= denom;

        flops::add(2ULL * len * dh);
        for (std::size_t j = 0; j < dh; ++j) out[off + j] = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const double w = p[t];
            const double* vrow = values + t * hidden + off;
            for (std::size_t j = 0; j < dh; ++j) out[off + j] += w * vrow[j];
        }
    }
}

Matrix last_row(const Matrix& m) { return slice_rows(m, m.rows() - 1, 1); }

}  // namespace

PrefillResult prefill(const Model& model, const Matrix& visual_features,
                      const std::vector<int>& prompt_ids) {
    if (prompt_ids.empty()) throw std::invalid_argument("prefill: empty prompt");
    const std::size_t h = model.config.hidden_dim;

    Matrix visual = projector_forward(visual_features, model);
    Matrix text = embed_tokens(model, prompt_ids);
    const std::size_t k = visual.rows();
    const std::size_t n = text.rows();

    PrefillResult res;
    res.cache = KVCache(model.config.depth, h);
    res.cache.reserve(k + n);
    res.cache.set_counts(k, n);

    if (model.config.mode == Mode::composite) {
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            LayerKV kv;
            auto [v, t] = composite_decoder_layer(visual, text, model.layers[l], &kv);
            res.cache.append_block(l, kv.keys, kv.values);
            visual = std::move(v);
            text = std::move(t);
        }
        res.logits = matmul(last_row(text), model.unembed);
    } else {
        Matrix x = vstack(visual, text);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            LayerKV kv;
            x = baseline_decoder_layer(x, model.layers[l], &kv);
            res.cache.append_block(l, kv.keys, kv.values);
        }
        res.logits = matmul(last_row(x), model.unembed);
    }
    return res;
}

Matrix decode_step(const Model& model, KVCache& cache, int token_id) {
    if (token_id < 0 || static_cast<std::size_t>(token_id) >= model.config.vocab_size)
        throw std::invalid_argument("decode_step: token id " + std::to_string(token_id) +
                                    " outside vocab of " + std::to_string(model.config.vocab_size));
    if (cache.depth() != model.config.depth)
        throw std::invalid_argument("decode_step: cache depth " + std::to_string(cache.depth()) +
                                    " does not match model depth " +
                                    std::to_string(model.config.depth));
    const std::size_t h = model.config.hidden_dim;

    Matrix x(1, h);
    for (std::size_t j = 0; j < h; ++j) x(0, j) = model.embed(static_cast<std::size_t>(token_id), j);

    Matrix attn(1, h);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LayerWeights& layer = model.layers[l];
        const Matrix q = matmul(x, layer.attn.wq);
        const Matrix k_new = matmul(x, layer.attn.wk);
        const Matrix v_new = matmul(x, layer.attn.wv);
        cache.append_row(l, k_new.data(), v_new.data());

        const std::size_t len = cache.rows(l);
        attend_cached(q.data(), cache.key_data(l), cache.value_data(l), len, h,
                      layer.attn.heads, attn.data());
        x = add(x, matmul(attn, layer.attn.wo));
        x = add(x, ffn_forward(x, layer));
    }
    cache.note_text_appended();
    return matmul(x, model.unembed);
}

int argmax_row(const Matrix& logits, std::size_t row) {
    if (logits.rows() <= row || logits.cols() == 0)
        throw std::invalid_argument("argmax_row: row " + std::to_string(row) + " not in " +
                                    shape_str(logits));
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(row, j) > logits(row, best)) best = j;
    return static_cast<int>(best);
}

std::vector<int> generate_greedy(const Model& model, const Matrix& visual_features,
                                 const std::vector<int>& prompt_ids, std::size_t max_new) {
    if (max_new == 0) throw std::invalid_argument("generate_greedy: max_new must be >= 1");
    PrefillResult pre = prefill(model, visual_features, prompt_ids);
    pre.cache.reserve(pre.cache.positions() + max_new);

    std::vector<int> out;
    out.reserve(max_new);
    out.push_back(argmax_row(pre.logits));
    for (std::size_t i = 1; i < max_new; ++i) {
        const Matrix logits = decode_step(model, pre.cache, out.back());
        out.push_back(argmax_row(logits));
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct TimedRun {
    double prefill_seconds = 0.0;
    std::vector<double> decode_seconds;
};

TimedRun run_generation(const Model& model, const Matrix& features,
                        const std::vector<int>& prompt_ids, std::size_t max_gen) {
    TimedRun run;
    const auto t0 = Clock::now();
    PrefillResult pre = prefill(model, features, prompt_ids);
    run.prefill_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    pre.cache.reserve(pre.cache.positions() + max_gen);
    run.decode_seconds.reserve(max_gen > 0 ? max_gen - 1 : 0);
    int token = argmax_row(pre.logits);
    for (std::size_t i = 1; i < max_gen; ++i) {
        const auto s = Clock::now();
        const Matrix logits = decode_step(model, pre.cache, token);
        run.decode_seconds.push_back(std::chrono::duration<double>(Clock::now() - s).count());
        token = argmax_row(logits);
    }
    return run;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void bench_one_model(const Model& model, const Matrix& features,
                     const std::vector<int>& prompt_ids,
                     const std::vector<std::size_t>& gen_lengths, std::size_t repeats,
                     std::size_t visual_len, std::size_t text_len,
                     std::vector<BenchReport>& out) {
    const std::size_t max_gen = *std::max_element(gen_lengths.begin(), gen_lengths.end());

    run_generation(model, features, prompt_ids, max_gen);  // warm-up, discarded

    std::vector<TimedRun> runs;
    runs.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r)
        runs.push_back(run_generation(model, features, prompt_ids, max_gen));

    std::vector<double> prefills;
    for (const TimedRun& r : runs) prefills.push_back(r.prefill_seconds);
    const double prefill_s = median(prefills);

    std::vector<double> per_token(max_gen > 0 ? max_gen - 1 : 0);
    for (std::size_t i = 0; i < per_token.size(); ++i) {
        std::vector<double> samples;
        samples.reserve(repeats);
        for (const TimedRun& r : runs) samples.push_back(r.decode_seconds[i]);
        per_token[i] = median(samples);
    }

    for (std::size_t gen : gen_lengths) {
        BenchReport rep;
        rep.mode = mode_name(model.config.mode);
        rep.visual_len = visual_len;
        rep.text_len = text_len;
        rep.gen = gen;
        rep.prefill_seconds = prefill_s;
        rep.decode_seconds.assign(per_token.begin(), per_token.begin() + (gen - 1));
        rep.decode_seconds_total = 0.0;
        for (double d : rep.decode_seconds) rep.decode_seconds_total += d;
        rep.tokens_per_second =
            static_cast<double>(gen) / (rep.prefill_seconds + rep.decode_seconds_total);
        out.push_back(std::move(rep));
    }
}

}  // namespace

const BenchReport& BenchTable::find(Mode mode, std::size_t gen) const {
    for (const BenchReport& r : reports)
        if (r.mode == mode_name(mode) && r.gen == gen) return r;
    throw std::invalid_argument("BenchTable: no report for " + std::string(mode_name(mode)) +
                                " gen=" + std::to_string(gen));
}

BenchTable bench_prefill_decode(const Model& baseline_model, const Model& composite_model,
                                std::size_t visual_len, std::size_t text_len,
                                const std::vector<std::size_t>& gen_lengths, std::size_t repeats,
                                std::uint64_t seed) {
    if (repeats < 3) throw std::invalid_argument("bench_prefill_decode: repeats must be >= 3");
    if (gen_lengths.empty())
        throw std::invalid_argument("bench_prefill_decode: no generation lengths");
    for (std::size_t g : gen_lengths)
        if (g < 1) throw std::invalid_argument("bench_prefill_decode: generation lengths must be >= 1");
    if (text_len < 1) throw std::invalid_argument("bench_prefill_decode: text_len must be >= 1");
    if (baseline_model.config.mode != Mode::baseline ||
        composite_model.config.mode != Mode::composite)
        throw std::invalid_argument("bench_prefill_decode: model modes are swapped");
    ModelConfig a = baseline_model.config, b = composite_model.config;
    a.mode = b.mode = Mode::baseline;
    if (a.depth != b.depth || a.hidden_dim != b.hidden_dim || a.heads != b.heads ||
        a.vocab_size != b.vocab_size || a.feature_dim != b.feature_dim)
        throw std::invalid_argument("bench_prefill_decode: models must share config except mode");

    Prng rng(seed);
    const Matrix features =
        gaussian_init(rng, visual_len, baseline_model.config.feature_dim, 1.0);
    std::vector<int> prompt_ids(text_len);
    for (std::size_t i = 0; i < text_len; ++i)
        prompt_ids[i] =
            static_cast<int>(rng.next_u64() % baseline_model.config.vocab_size);

    BenchTable table;
    bench_one_model(baseline_model, features, prompt_ids, gen_lengths, repeats, visual_len,
                    text_len, table.reports);
    bench_one_model(composite_model, features, prompt_ids, gen_lengths, repeats, visual_len,
                    text_len, table.reports);
    return table;
}

std::string bench_to_csv(const BenchTable& table) {
    std::ostringstream out;
    out << "mode,V,T,gen,prefill_s,decode_s_total,tok_per_s\n";
    out.precision(9);
    out << std::fixed;
    for (const BenchReport& r : table.reports)
        out << r.mode << ',' << r.visual_len << ',' << r.text_len << ',' << r.gen << ','
            << r.prefill_seconds << ',' << r.decode_seconds_total << ',' << r.tokens_per_second
            << '\n';
    return out.str();
}

}  // namespace eeml
