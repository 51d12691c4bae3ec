#include <cstdlib>
#include <cstring>

#include "tlsan/kernels.hpp"

namespace tlsan::kernels {
namespace {

const KernelSet& select() {
    const char* force = std::getenv("TLSAN_SIMD");
    if (force && std::strcmp(force, "scalar") == 0) return scalar();
#if defined(__x86_64__)
    if (force && std::strcmp(force, "avx2") == 0) return avx2();
    if (avx2_supported()) return avx2();
#endif
    return scalar();
}

}  // namespace

const KernelSet& active() {
    static const KernelSet& k = select();
    return k;
}

}  // namespace tlsan::kernels
