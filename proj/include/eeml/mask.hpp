#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace eeml {

// Boolean attention permission matrix, query rows by key columns.
struct AttentionMask {
    std::size_t query_rows = 0;
    std::size_t key_cols = 0;
    std::vector<std::uint8_t> permit;  // row-major, nonzero = may attend

    bool permits(std::size_t q, std::size_t k) const { return permit[q * key_cols + k] != 0; }
};

// Lower-triangular mask: text token i attends to tokens 0..i.
AttentionMask build_causal_mask(std::size_t text_len);

// Trapezoidal mask over [visual; text] key columns: text token i attends to
// every visual token plus text tokens 0..i, so row i permits exactly
// visual_len + i + 1 entries.
AttentionMask build_trapezoidal_mask(std::size_t visual_len, std::size_t text_len);

}  // namespace eeml
