#include "eeml/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace eeml {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch: " + shape_str(a) +
                                    " vs " + shape_str(b));
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "subtract");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

Matrix scale(const Matrix& m, double factor) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = m.data()[i] * factor;
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.rows() == 0) return bottom;
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols())
        throw std::invalid_argument("vstack: column mismatch: " + shape_str(top) + " vs " +
                                    shape_str(bottom));
    Matrix out(top.rows() + bottom.rows(), top.cols());
    for (std::size_t i = 0; i < top.size(); ++i) out.data()[i] = top.data()[i];
    for (std::size_t i = 0; i < bottom.size(); ++i) out.data()[top.size() + i] = bottom.data()[i];
    return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + count) + ") exceeds " + shape_str(m));
    Matrix out(count, m.cols());
    for (std::size_t i = 0; i < count * m.cols(); ++i) out.data()[i] = m.row(begin)[i];
    return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.cols())
        throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + count) + ") exceeds " + shape_str(m));
    Matrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, begin + j);
    return out;
}

void set_cols(Matrix& dst, std::size_t begin, const Matrix& src) {
    if (src.rows() != dst.rows() || begin + src.cols() > dst.cols())
        throw std::invalid_argument("set_cols: block " + shape_str(src) + " at column " +
                                    std::to_string(begin) + " does not fit " + shape_str(dst));
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

double sum(const Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += m.data()[i];
    return acc;
}

double inner(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "inner");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
}

std::uint64_t Prng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014)
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Prng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Prng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_double() - 1.0;
        v = 2.0 * next_double() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
}

Matrix gaussian_init(Prng& rng, std::size_t rows, std::size_t cols, double stddev) {
    if (!(stddev > 0.0))
        throw std::invalid_argument("gaussian_init: stddev must be positive, got " +
                                    std::to_string(stddev));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.next_gaussian();
    return m;
}

Matrix uniform_init(Prng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("uniform_init: empty range");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.next_double();
    return m;
}

ApproxResult approx_equal(const Matrix& a, const Matrix& b, double atol) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("approx_equal: shape mismatch: " + shape_str(a) + " vs " +
                                    shape_str(b));
    ApproxResult res;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a.data()[i] - b.data()[i]);
        if (std::isnan(d)) {
            res.max_abs_diff = d;
            break;
        }
        if (d > res.max_abs_diff) res.max_abs_diff = d;
    }
    res.within = res.max_abs_diff <= atol;
    return res;
}

}  // namespace eeml
