#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace eeml {

// Dense row-major matrix of 64-bit floats. The single value carrier of the
// library: weights, token states, attention scores, gradients.
//
// Operations treat matrices as values: they never mutate their inputs, so
// concurrent reads of a constructed matrix are safe.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// "RxC" shape string for error messages.
std::string shape_str(const Matrix& m);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);

// Stack on the row axis; both sides must have equal column counts (a zero-row
// side is fine).
Matrix vstack(const Matrix& top, const Matrix& bottom);

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count);
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count);

// Paste a column block into dst starting at column `begin`.
void set_cols(Matrix& dst, std::size_t begin, const Matrix& src);

double sum(const Matrix& m);

// Frobenius inner product; used by gradient checks to form scalar losses.
double inner(const Matrix& a, const Matrix& b);

// Deterministic, platform-independent random stream.
//
// Core generator is splitmix64 (pure 64-bit integer arithmetic, so the raw
// stream is identical on every platform). Uniform doubles take the top 53
// bits of the stream; gaussians come from the Marsaglia polar method with a
// cached spare. std::normal_distribution is not used: its output is
// implementation-defined.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double next_double();    // uniform [0, 1)
    double next_gaussian();  // standard normal

private:
    std::uint64_t state_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Matrix gaussian_init(Prng& rng, std::size_t rows, std::size_t cols, double stddev);
Matrix uniform_init(Prng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

struct ApproxResult {
    double max_abs_diff = 0.0;
    bool within = false;
};

// Entrywise max |a-b| plus whether it is <= atol. Shapes must match.
ApproxResult approx_equal(const Matrix& a, const Matrix& b, double atol);

}  // namespace eeml
