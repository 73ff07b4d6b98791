#include "eeml/kernels.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace eeml {

namespace flops {

namespace {
thread_local bool tl_enabled = false;
thread_local std::uint64_t tl_count = 0;
}  // namespace

bool enabled() { return tl_enabled; }

void add(std::uint64_t count) {
    if (tl_enabled) tl_count += count;
}

Scope::Scope() : prev_enabled_(tl_enabled), prev_count_(tl_count) {
    tl_enabled = true;
    tl_count = 0;
}

Scope::~Scope() {
    const std::uint64_t window = tl_count;
    tl_enabled = prev_enabled_;
    tl_count = prev_count_ + (prev_enabled_ ? window : 0);
}

std::uint64_t Scope::count() const { return tl_count; }

}  // namespace flops

namespace {

// One output row of a*b, ikj order. Marked noinline so the serial and OpenMP
// entry points execute the exact same code and stay bitwise identical.
[[gnu::noinline]] void matmul_row(const double* a_row, const double* b, double* c_row,
                                  std::size_t inner, std::size_t cols) {
    for (std::size_t j = 0; j < cols; ++j) c_row[j] = 0.0;
    for (std::size_t k = 0; k < inner; ++k) {
        const double aik = a_row[k];
        const double* b_row = b + k * cols;
        for (std::size_t j = 0; j < cols; ++j) c_row[j] += aik * b_row[j];
    }
}

[[gnu::noinline]] void softmax_row(const double* scores, const std::uint8_t* permit, double* out,
                                   std::size_t cols) {
    const double lowest = std::numeric_limits<double>::lowest();
    double row_max = lowest;
    for (std::size_t j = 0; j < cols; ++j) {
        const double v = permit[j] ? scores[j] : lowest;
        if (v > row_max) row_max = v;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        if (permit[j]) {
            out[j] = std::exp(scores[j] - row_max);
            denom += out[j];
        } else {
            out[j] = 0.0;
        }
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= denom;
}

[[gnu::noinline]] void gelu_row(const double* x, double* out, std::size_t cols) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (std::size_t j = 0; j < cols; ++j)
        out[j] = 0.5 * x[j] * (1.0 + std::erf(x[j] * inv_sqrt2));
}

[[gnu::noinline]] void gelu_grad_row(const double* x, double* out, std::size_t cols) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    for (std::size_t j = 0; j < cols; ++j)
        out[j] = 0.5 * (1.0 + std::erf(x[j] * inv_sqrt2)) +
                 x[j] * inv_sqrt2pi * std::exp(-0.5 * x[j] * x[j]);
}

void check_matmul_shapes(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ: " + shape_str(a) + " * " +
                                    shape_str(b));
}

void check_softmax_args(const Matrix& scores, const AttentionMask& mask) {
    if (mask.query_rows != scores.rows() || mask.key_cols != scores.cols())
        throw std::invalid_argument("softmax_rows_masked: mask " + std::to_string(mask.query_rows) +
                                    "x" + std::to_string(mask.key_cols) +
                                    " does not match scores " + shape_str(scores));
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        bool any = false;
        for (std::size_t j = 0; j < scores.cols(); ++j)
            if (mask.permits(i, j)) {
                any = true;
                break;
            }
        if (!any)
            throw std::invalid_argument("softmax_rows_masked: row " + std::to_string(i) +
                                        " permits no entries");
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_shapes(a, b);
    flops::add(2ULL * a.rows() * a.cols() * b.cols());
    Matrix c(a.rows(), b.cols());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i)
        matmul_row(a.row(static_cast<std::size_t>(i)), b.data(), c.row(static_cast<std::size_t>(i)),
                   a.cols(), b.cols());
    return c;
}

Matrix softmax_rows_masked(const Matrix& scores, const AttentionMask& mask) {
    check_softmax_args(scores, mask);
    Matrix out(scores.rows(), scores.cols());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(scores.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
        const auto r = static_cast<std::size_t>(i);
        softmax_row(scores.row(r), mask.permit.data() + r * mask.key_cols, out.row(r),
                    scores.cols());
    }
    return out;
}

Matrix gelu(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
        const auto r = static_cast<std::size_t>(i);
        gelu_row(x.row(r), out.row(r), x.cols());
    }
    return out;
}

Matrix gelu_grad(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
        const auto r = static_cast<std::size_t>(i);
        gelu_grad_row(x.row(r), out.row(r), x.cols());
    }
    return out;
}

namespace serial_ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul_shapes(a, b);
    flops::add(2ULL * a.rows() * a.cols() * b.cols());
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a.row(i), b.data(), c.row(i), a.cols(), b.cols());
    return c;
}

Matrix softmax_rows_masked(const Matrix& scores, const AttentionMask& mask) {
    check_softmax_args(scores, mask);
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i)
        softmax_row(scores.row(i), mask.permit.data() + i * mask.key_cols, out.row(i),
                    scores.cols());
    return out;
}

Matrix gelu(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) gelu_row(x.row(i), out.row(i), x.cols());
    return out;
}

}  // namespace serial_ref

}  // namespace eeml
