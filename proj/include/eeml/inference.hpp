#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eeml/layers.hpp"
#include "eeml/matrix.hpp"

namespace eeml {

// Per-layer keys/values for all cached positions: the visual tokens plus
// every text token seen so far. Owned by a single generation session.
class KVCache {
public:
    KVCache() = default;
    KVCache(std::size_t depth, std::size_t hidden_dim);

    std::size_t depth() const { return slots_.size(); }
    std::size_t hidden_dim() const { return hidden_; }

    // Cached positions per layer (identical across layers by construction).
    std::size_t positions() const;
    // Row count of one layer's slot; layers differ only mid-decode-step.
    std::size_t rows(std::size_t layer) const { return slots_[layer].rows; }
    std::size_t visual_count() const { return visual_count_; }
    std::size_t text_count() const { return text_count_; }

    void reserve(std::size_t total_positions);
    void append_block(std::size_t layer, const Matrix& keys, const Matrix& values);
    void append_row(std::size_t layer, const double* key_row, const double* value_row);

    const double* key_data(std::size_t layer) const;
    const double* value_data(std::size_t layer) const;

    Matrix keys_matrix(std::size_t layer) const;
    Matrix values_matrix(std::size_t layer) const;

    void set_counts(std::size_t visual, std::size_t text);
    void note_text_appended() { ++text_count_; }

private:
    struct Slot {
        std::vector<double> keys;
        std::vector<double> values;
        std::size_t rows = 0;
    };

    std::size_t hidden_ = 0;
    std::vector<Slot> slots_;
    std::size_t visual_count_ = 0;
    std::size_t text_count_ = 0;
};

struct PrefillResult {
    KVCache cache;
    Matrix logits;  // 1 x vocab, for the position after the prompt
};

// Runs the prompt (and visual tokens) through the model once, filling the KV
// cache. Composite mode derives each layer's visual keys/values through the
// aligner chain and never forms a visual-visual score matrix; baseline mode
// runs full causal attention over the concatenation.
PrefillResult prefill(const Model& model, const Matrix& visual_features,
                      const std::vector<int>& prompt_ids);

// One incremental generation step: appends the token's keys/values to every
// layer and attends the single new query against the cache. Visual cache
// entries are never recomputed. Returns the 1 x vocab logits row.
Matrix decode_step(const Model& model, KVCache& cache, int token_id);

// Greedy argmax decoding, ties broken toward the lowest token id.
std::vector<int> generate_greedy(const Model& model, const Matrix& visual_features,
                                 const std::vector<int>& prompt_ids, std::size_t max_new);

int argmax_row(const Matrix& logits, std::size_t row = 0);

struct BenchReport {
    std::string mode;
    std::size_t visual_len = 0;
    std::size_t text_len = 0;
    std::size_t gen = 0;
    double prefill_seconds = 0.0;
    std::vector<double> decode_seconds;  // per token after the first
    double decode_seconds_total = 0.0;
    double tokens_per_second = 0.0;
};

struct BenchTable {
    std::vector<BenchReport> reports;  // baseline rows first, then composite

    const BenchReport& find(Mode mode, std::size_t gen) const;
};

// Times prefill + greedy decode for both models at each generation length.
// One warm-up run is discarded; prefill takes the median of `repeats` runs
// and per-token decode times take elementwise medians, so a single noisy run
// cannot skew the report. Both models must share everything except mode.
BenchTable bench_prefill_decode(const Model& baseline_model, const Model& composite_model,
                                std::size_t visual_len, std::size_t text_len,
                                const std::vector<std::size_t>& gen_lengths, std::size_t repeats,
                                std::uint64_t seed);

// CSV: mode,V,T,gen,prefill_s,decode_s_total,tok_per_s
std::string bench_to_csv(const BenchTable& table);

}  // namespace eeml
