#include "doctest.h"
#include "eow/kernels.hpp"
#include "eow/rng.hpp"

#include <cmath>
#include <vector>

using namespace eow;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

// Scalar vs SIMD agreement for one gemm variant over random shapes.
void check_gemm(void (*scalar_fn)(int, int, int, const double*, const double*, double*, bool),
                void (*simd_fn)(int, int, int, const double*, const double*, double*, bool),
                int m, int k, int n, Rng& rng, bool acc) {
    const auto a = random_vec(std::size_t(m) * k, rng);
    const auto b = random_vec(std::size_t(k) * n, rng);
    auto c_ref = random_vec(std::size_t(m) * n, rng);
    auto c_simd = c_ref;
    scalar_fn(m, k, n, a.data(), b.data(), c_ref.data(), acc);
    simd_fn(m, k, n, a.data(), b.data(), c_simd.data(), acc);
    for (std::size_t i = 0; i < c_ref.size(); ++i) {
        const double tol = 1e-12 * (std::abs(c_ref[i]) + double(k));
        CHECK(std::abs(c_ref[i] - c_simd[i]) <= tol);
    }
}

}  // namespace

TEST_CASE("active backend is available and named") {
    const auto& k = kernels::active();
    CHECK((std::string(k.name) == "scalar" || std::string(k.name) == "avx2"));
}

TEST_CASE("scalar/simd equivalence across shapes and ops") {
    const auto* simd = kernels::avx2_backend();
    if (!simd) return;  // non-x86 build: scalar is the only lane
    const auto& ref = kernels::scalar_backend();

    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + int(rng.below(20));
        const int k = 1 + int(rng.below(40));
        const int n = 1 + int(rng.below(33));
        check_gemm(ref.gemm_nn, simd->gemm_nn, m, k, n, rng, trial % 2 == 0);
        check_gemm(ref.gemm_nt, simd->gemm_nt, m, n, k, rng, trial % 2 == 1);
        check_gemm(ref.gemm_tn, simd->gemm_tn, m, k, n, rng, trial % 2 == 0);
    }

    for (std::size_t n : {1u, 3u, 4u, 17u, 256u, 1001u}) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        std::vector<double> r1(n), r2(n);

        ref.add(a.data(), b.data(), r1.data(), n);
        simd->add(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);  // add/mul/relu are bit-exact between lanes

        ref.mul(a.data(), b.data(), r1.data(), n);
        simd->mul(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        ref.relu(a.data(), r1.data(), n);
        simd->relu(a.data(), r2.data(), n);
        CHECK(r1 == r2);

        ref.negate(a.data(), r1.data(), n);
        simd->negate(a.data(), r2.data(), n);
        CHECK(r1 == r2);

        std::vector<double> acc1(n, 0.5), acc2(n, 0.5);
        ref.relu_mask_add(a.data(), b.data(), acc1.data(), n);
        simd->relu_mask_add(a.data(), b.data(), acc2.data(), n);
        CHECK(acc1 == acc2);

        CHECK(ref.sum(a.data(), n) == doctest::Approx(simd->sum(a.data(), n)).epsilon(1e-13));
        CHECK(ref.dot(a.data(), b.data(), n) ==
              doctest::Approx(simd->dot(a.data(), b.data(), n)).epsilon(1e-13));
        CHECK(ref.sumsq(a.data(), n) == doctest::Approx(simd->sumsq(a.data(), n)).epsilon(1e-13));
    }
}

TEST_CASE("all_finite flags NaN and Inf in any lane position") {
    Rng rng(7);
    for (const auto* backend : {&kernels::scalar_backend(), kernels::avx2_backend()}) {
        if (!backend) continue;
        for (std::size_t n : {1u, 5u, 8u, 23u}) {
            auto v = random_vec(n, rng);
            CHECK(backend->all_finite(v.data(), n));
            for (std::size_t pos = 0; pos < n; ++pos) {
                auto w = v;
                w[pos] = std::nan("");
                CHECK_FALSE(backend->all_finite(w.data(), n));
                w[pos] = INFINITY;
                CHECK_FALSE(backend->all_finite(w.data(), n));
            }
        }
    }
}

TEST_CASE("gemm_nn identity and zero cases") {
    const auto& k = kernels::active();
    const std::vector<double> eye = {1, 0, 0, 1};
    const std::vector<double> b = {5, 6, 7, 8};
    std::vector<double> c(4, -1);
    k.gemm_nn(2, 2, 2, eye.data(), b.data(), c.data(), false);
    CHECK(c == b);

    const std::vector<double> zero(4, 0.0);
    k.gemm_nn(2, 2, 2, b.data(), zero.data(), c.data(), false);
    CHECK(c == zero);
}
