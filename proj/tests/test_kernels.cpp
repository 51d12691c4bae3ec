#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "tlsan/kernels.hpp"
#include "tlsan/rng.hpp"

using tlsan::Rng;
namespace kernels = tlsan::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

}  // namespace

TEST_CASE("scalar and avx2 kernel sets agree") {
#if defined(__x86_64__)
    if (!kernels::avx2_supported()) return;
    const auto& s = kernels::scalar();
    const auto& v = kernels::avx2();
    Rng rng(17);
    // odd lengths exercise the remainder loops
    for (size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 64, 65, 127}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);

        // dot may differ only by summation order
        CHECK(s.dot(a.data(), b.data(), n) ==
              doctest::Approx(v.dot(a.data(), b.data(), n)).epsilon(1e-12));

        auto y1 = b, y2 = b;
        s.axpy(0.75, a.data(), y1.data(), n);
        v.axpy(0.75, a.data(), y2.data(), n);
        CHECK(y1 == y2);

        std::vector<double> z1(n), z2(n);
        s.mul(a.data(), b.data(), z1.data(), n);
        v.mul(a.data(), b.data(), z2.data(), n);
        CHECK(z1 == z2);

        s.add(a.data(), b.data(), z1.data(), n);
        v.add(a.data(), b.data(), z2.data(), n);
        CHECK(z1 == z2);

        auto x1 = a, x2 = a;
        s.scale(-1.5, x1.data(), n);
        v.scale(-1.5, x2.data(), n);
        CHECK(x1 == x2);

        s.relu(a.data(), z1.data(), n);
        v.relu(a.data(), z2.data(), n);
        CHECK(z1 == z2);
    }
#endif
}

TEST_CASE("scalar kernels match naive loops") {
    const auto& s = kernels::scalar();
    Rng rng(3);
    auto a = random_vec(rng, 33);
    auto b = random_vec(rng, 33);

    double expect = 0.0;
    for (size_t i = 0; i < a.size(); ++i) expect += a[i] * b[i];
    CHECK(s.dot(a.data(), b.data(), a.size()) == doctest::Approx(expect));

    auto y = b;
    s.axpy(2.0, a.data(), y.data(), a.size());
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(y[i] == doctest::Approx(b[i] + 2.0 * a[i]));

    std::vector<double> r(a.size());
    s.relu(a.data(), r.data(), a.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(r[i] == std::max(a[i], 0.0));
}

TEST_CASE("active kernel set honors the availability checks") {
    const auto& act = kernels::active();
    std::string name = act.name;
#if defined(__x86_64__)
    const char* force = std::getenv("TLSAN_SIMD");
    if (force) {
        CHECK(name == force);
    } else {
        CHECK(name == (kernels::avx2_supported() ? "avx2" : "scalar"));
    }
#else
    CHECK(name == "scalar");
#endif
}
