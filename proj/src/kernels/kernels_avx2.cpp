// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime CPU check in dispatch.cpp.
#include "eow/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace eow::kernels {
namespace {

// C row block of 16 doubles held in 4 accumulators; k-loop broadcasts A.
// Per-element accumulation order over p matches the scalar kernel, so the
// only divergence from the reference is FMA rounding.
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    const int n16 = n & ~15;
    for (int i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (int j = 0; j < n16; j += 16) {
            __m256d c0, c1, c2, c3;
            if (acc) {
                c0 = _mm256_loadu_pd(ci + j);
                c1 = _mm256_loadu_pd(ci + j + 4);
                c2 = _mm256_loadu_pd(ci + j + 8);
                c3 = _mm256_loadu_pd(ci + j + 12);
            } else {
                c0 = c1 = c2 = c3 = _mm256_setzero_pd();
            }
            for (int p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(ai[p]);
                const double* bp = b + std::size_t(p) * n + j;
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
                c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 8), c2);
                c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 12), c3);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
            _mm256_storeu_pd(ci + j + 8, c2);
            _mm256_storeu_pd(ci + j + 12, c3);
        }
        for (int j = n16; j < n; ++j) {
            double s = acc ? ci[j] : 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * b[std::size_t(p) * n + j];
            ci[j] = s;
        }
    }
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// Rows of A against rows of B: contiguous dot products over p.
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    const int k16 = k & ~15;
    for (int i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + std::size_t(j) * k;
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            for (int p = 0; p < k16; p += 16) {
                s0 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), s0);
                s1 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p + 4), _mm256_loadu_pd(bj + p + 4), s1);
                s2 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p + 8), _mm256_loadu_pd(bj + p + 8), s2);
                s3 = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p + 12), _mm256_loadu_pd(bj + p + 12), s3);
            }
            double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
            for (int p = k16; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = acc ? ci[j] + s : s;
        }
    }
}

void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    const int n4 = n & ~3;
    for (int p = 0; p < k; ++p) {
        const double* ap = a + std::size_t(p) * m;
        const double* bp = b + std::size_t(p) * n;
        for (int i = 0; i < m; ++i) {
            const __m256d av = _mm256_set1_pd(ap[i]);
            double* ci = c + std::size_t(i) * n;
            for (int j = 0; j < n4; j += 4)
                _mm256_storeu_pd(ci + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), _mm256_loadu_pd(ci + j)));
            for (int j = n4; j < n; ++j) ci[j] += ap[i] * bp[j];
        }
    }
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void negate(const double* a, double* out, std::size_t n) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_xor_pd(_mm256_loadu_pd(a + i), sign));
    for (; i < n; ++i) out[i] = -a[i];
}

void relu(const double* a, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_mask_add(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d gv = _mm256_and_pd(_mm256_loadu_pd(g + i), mask);
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), gv));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) out[i] += g[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        s = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s);
    double r = hsum(s);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum(const double* a, std::size_t n) {
    __m256d s = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) s = _mm256_add_pd(s, _mm256_loadu_pd(a + i));
    double r = hsum(s);
    for (; i < n; ++i) r += a[i];
    return r;
}

double sumsq(const double* a, std::size_t n) {
    __m256d s = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(a + i);
        s = _mm256_fmadd_pd(v, v, s);
    }
    double r = hsum(s);
    for (; i < n; ++i) r += a[i] * a[i];
    return r;
}

// Finite iff the exponent field is not all-ones.
bool all_finite(const double* a, std::size_t n) {
    const __m256i expmask = _mm256_set1_epi64x(0x7ff0000000000000LL);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256i v = _mm256_castpd_si256(_mm256_loadu_pd(a + i));
        const __m256i e = _mm256_and_si256(v, expmask);
        if (_mm256_movemask_pd(_mm256_castsi256_pd(_mm256_cmpeq_epi64(e, expmask)))) return false;
    }
    for (; i < n; ++i) {
        const auto bits = *reinterpret_cast<const unsigned long long*>(a + i);
        if ((bits & 0x7ff0000000000000ULL) == 0x7ff0000000000000ULL) return false;
    }
    return true;
}

}  // namespace

const Backend* avx2_backend() {
    static const Backend backend{
        "avx2", gemm_nn, gemm_nt, gemm_tn, add,  sub,   mul,    negate,
        relu,   relu_mask_add,    axpy,    scale, dot,  sum,    sumsq,
        all_finite,
    };
    return &backend;
}

}  // namespace eow::kernels

#else

namespace eow::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace eow::kernels

#endif
