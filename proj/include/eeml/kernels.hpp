#pragma once

#include <cstdint>

#include "eeml/mask.hpp"
#include "eeml/matrix.hpp"

namespace eeml {

namespace flops {

// Per-thread matmul FLOP counter using the 2*m*n*p convention (only matrix
// products are counted; softmax, activations and residual adds are not).
// Counting is confined to the calling thread, so a Scope on one thread never
// observes products issued from another.
bool enabled();
void add(std::uint64_t count);

// RAII counting window. Nested scopes fold their counts into the enclosing
// scope on destruction.
class Scope {
public:
    Scope();
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

    std::uint64_t count() const;

private:
    bool prev_enabled_;
    std::uint64_t prev_count_;
};

}  // namespace flops

// OpenMP-parallel kernels. Work splits by output row and every row runs
// through the same non-inlined serial worker, so results are bitwise
// identical to the serial_ref variants for any thread count.

// Standard product; accumulation in 64-bit floats, 2*m*n*p FLOPs recorded
// when a flops::Scope is active.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise masked softmax with per-row max subtraction. Masked entries act as
// the most negative finite score and are zeroed exactly in the output. A row
// with no permitted entry is a contract violation.
Matrix softmax_rows_masked(const Matrix& scores, const AttentionMask& mask);

// Gaussian-error gate: 0.5*x*(1 + erf(x/sqrt(2))), and its derivative.
Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);

namespace serial_ref {

// Single-threaded reference kernels kept for tests and the kernel benchmark.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows_masked(const Matrix& scores, const AttentionMask& mask);
Matrix gelu(const Matrix& x);

}  // namespace serial_ref

}  // namespace eeml
