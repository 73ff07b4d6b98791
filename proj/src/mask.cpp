#include "eeml/mask.hpp"

#include <stdexcept>

namespace eeml {

AttentionMask build_causal_mask(std::size_t text_len) {
    if (text_len == 0) throw std::invalid_argument("build_causal_mask: text_len must be >= 1");
    AttentionMask m;
    m.query_rows = text_len;
    m.key_cols = text_len;
    m.permit.assign(text_len * text_len, 0);
    for (std::size_t i = 0; i < text_len; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.permit[i * text_len + j] = 1;
    return m;
}

AttentionMask build_trapezoidal_mask(std::size_t visual_len, std::size_t text_len) {
    if (text_len == 0) throw std::invalid_argument("build_trapezoidal_mask: text_len must be >= 1");
    AttentionMask m;
    m.query_rows = text_len;
    m.key_cols = visual_len + text_len;
    m.permit.assign(m.query_rows * m.key_cols, 0);
    for (std::size_t i = 0; i < text_len; ++i)
        for (std::size_t j = 0; j < visual_len + i + 1; ++j) m.permit[i * m.key_cols + j] = 1;
    return m;
}

}  // namespace eeml
