#include "tlsan/kernels.hpp"

namespace tlsan::kernels {
namespace {

double dot_scalar(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_scalar(const double* x, const double* y, double* z, size_t n) {
    for (size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void add_scalar(const double* x, const double* y, double* z, size_t n) {
    for (size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void scale_scalar(double alpha, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void relu_scalar(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace

const KernelSet& scalar() {
    static const KernelSet k = {
        "scalar", dot_scalar, axpy_scalar, mul_scalar,
        add_scalar, scale_scalar, relu_scalar,
    };
    return k;
}

}  // namespace tlsan::kernels
