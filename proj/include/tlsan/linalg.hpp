#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tlsan/kernels.hpp"
#include "tlsan/rng.hpp"

namespace tlsan {

using Vec = std::vector<double>;

// Row-major dense matrix of 64-bit floats.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double* row(size_t i) { return a.data() + i * cols; }
    const double* row(size_t i) const { return a.data() + i * cols; }
    double& operator()(size_t i, size_t j) { return a[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return a[i * cols + j]; }
};

namespace linalg {

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    return kernels::active().dot(a.data(), b.data(), a.size());
}

inline Vec matvec(const Mat& m, const Vec& v) {
    if (m.cols != v.size()) throw std::invalid_argument("matvec: dimension mismatch");
    Vec out(m.rows);
    const auto& k = kernels::active();
    for (size_t i = 0; i < m.rows; ++i)
        out[i] = k.dot(m.row(i), v.data(), m.cols);
    return out;
}

// y = B x where B is the kxk block of m anchored at (row0, col0)
inline void block_matvec(const Mat& m, size_t row0, size_t col0, size_t k,
                         const double* x, double* y) {
    const auto& ks = kernels::active();
    for (size_t i = 0; i < k; ++i)
        y[i] = ks.dot(m.row(row0 + i) + col0, x, k);
}

// y = B^T x for the same block
inline void block_matvec_t(const Mat& m, size_t row0, size_t col0, size_t k,
                           const double* x, double* y) {
    const auto& ks = kernels::active();
    for (size_t i = 0; i < k; ++i) y[i] = 0.0;
    for (size_t i = 0; i < k; ++i)
        ks.axpy(x[i], m.row(row0 + i) + col0, y, k);
}

inline Vec relu(const Vec& v) {
    Vec out(v.size());
    kernels::active().relu(v.data(), out.data(), v.size());
    return out;
}

// numerically stable: never exponentiates a large positive argument
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)), stable for large |x|
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("add: length mismatch");
    Vec out(a.size());
    kernels::active().add(a.data(), b.data(), out.data(), a.size());
    return out;
}

inline Vec mul(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("mul: length mismatch");
    Vec out(a.size());
    kernels::active().mul(a.data(), b.data(), out.data(), a.size());
    return out;
}

inline void scale(Vec& v, double alpha) {
    kernels::active().scale(alpha, v.data(), v.size());
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    kernels::active().axpy(alpha, x.data(), y.data(), x.size());
}

// Feature-wise softmax: normalize each row of scores across the unmasked
// positions j, independently per feature dimension. Masked columns come out
// as exact zeros. Max-subtraction per row for stability.
Mat softmax_over_positions(const Mat& scores, const std::vector<bool>& mask);

enum class Init { GlorotUniform, EmbeddingUniform, Zeros, Ones };

Mat init_matrix(Rng& rng, size_t rows, size_t cols, Init scheme);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace linalg
}  // namespace tlsan
