#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the linalg layer. Every kernel has a
// scalar reference implementation and, on x86-64, an AVX2 variant selected
// at runtime. The active set can be forced with the TLSAN_SIMD environment
// variable ("scalar" or "avx2") before the first call.

namespace tlsan::kernels {

struct KernelSet {
    const char* name;
    double (*dot)(const double* a, const double* b, size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, size_t n);
    // z = x * y elementwise
    void (*mul)(const double* x, const double* y, double* z, size_t n);
    // z = x + y elementwise
    void (*add)(const double* x, const double* y, double* z, size_t n);
    // x *= alpha
    void (*scale)(double alpha, double* x, size_t n);
    // y = max(x, 0)
    void (*relu)(const double* x, double* y, size_t n);
};

const KernelSet& scalar();
#if defined(__x86_64__)
const KernelSet& avx2();
bool avx2_supported();
#endif

// Runtime-selected set (scalar unless AVX2 is available / forced off).
const KernelSet& active();

}  // namespace tlsan::kernels
