#pragma once

#include <cstdint>
#include <functional>
#include <ostream>

#include "eeml/layers.hpp"
#include "eeml/matrix.hpp"

namespace eeml::checks {

// Straight-line reference implementations with plain loops and no shared
// code with the kernels they check. Slow; only used for verification at
// small sizes.

// Full attention over [visual; text] under an extended mask (visual query
// rows self-only, text rows trapezoidal), returning only the text rows.
// A composite attention implementation must match this slice.
Matrix reference_composite_attention(const Matrix& visual, const Matrix& text,
                                     const AttentionWeights& w);

// Causal multi-head self-attention, same straight-line style.
Matrix reference_self_attention(const Matrix& x, const AttentionWeights& w);

Matrix reference_projector(const Matrix& features, const Matrix& w1, const Matrix& w2);
Matrix reference_ffn(const Matrix& x, const LayerWeights& layer);
Matrix reference_aligner(const Matrix& visual, const LayerWeights& layer);

// Central finite differences on every entry of `target` against `analytic`.
// Relative error per entry is |a - n| / max(|a| + |n|, 1e-4); returns the max.
double max_rel_err_vs_fd(Matrix& target, const Matrix& analytic,
                         const std::function<double()>& loss, double eps);

// Property/oracle suites behind the CLI. Both print one line per check and
// return the number of failures; output is deterministic for a fixed seed.
int run_verify(std::ostream& out, std::uint64_t seed, int trials);
int run_gradcheck(std::ostream& out, std::uint64_t seed, double eps);

}  // namespace eeml::checks
