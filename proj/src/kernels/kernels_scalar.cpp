#include "eow/kernels.hpp"

#include <cmath>
#include <cstring>

namespace eow::kernels {
namespace {

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    for (int i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + std::size_t(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C[i,j] = sum_p A[i,p] * B[j,p]
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + std::size_t(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = acc ? ci[j] + s : s;
        }
    }
}

// C[i,j] = sum_p A[p,i] * B[p,j]
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    if (!acc) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    for (int p = 0; p < k; ++p) {
        const double* ap = a + std::size_t(p) * m;
        const double* bp = b + std::size_t(p) * n;
        for (int i = 0; i < m; ++i) {
            const double api = ap[i];
            double* ci = c + std::size_t(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void negate(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = -a[i];
}

void relu(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_mask_add(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) out[i] += g[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

double sumsq(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

bool all_finite(const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend backend{
        "scalar", gemm_nn, gemm_nt, gemm_tn, add,  sub,   mul,    negate,
        relu,     relu_mask_add,    axpy,    scale, dot,  sum,    sumsq,
        all_finite,
    };
    return backend;
}

}  // namespace eow::kernels
