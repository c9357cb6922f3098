#pragma once

#include <cstddef>
#include <string>

// Dense f64 kernels behind the array/tape layer. Every entry point has a
// scalar reference implementation; on x86 an AVX2+FMA variant is compiled
// separately and selected at runtime. The active backend is fixed per
// process (overridable with EOW_KERNELS=scalar|avx2), so repeated runs on
// the same machine are bit-identical.
namespace eow::kernels {

struct Backend {
    const char* name;

    // Row-major GEMM. acc=false overwrites C, acc=true adds into it.
    // gemm_nn: C[m x n]  = A[m x k] * B[k x n]
    // gemm_nt: C[m x n]  = A[m x k] * B[n x k]^T
    // gemm_tn: C[m x n]  = A[k x m]^T * B[k x n]
    void (*gemm_nn)(int m, int k, int n, const double* a, const double* b, double* c, bool acc);
    void (*gemm_nt)(int m, int k, int n, const double* a, const double* b, double* c, bool acc);
    void (*gemm_tn)(int m, int k, int n, const double* a, const double* b, double* c, bool acc);

    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*negate)(const double* a, double* out, std::size_t n);
    void (*relu)(const double* a, double* out, std::size_t n);
    // out += g where x > 0 (relu backward; subgradient at 0 is 0)
    void (*relu_mask_add)(const double* x, const double* g, double* out, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);   // y += alpha*x
    void (*scale)(double alpha, const double* x, double* y, std::size_t n);  // y = alpha*x

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*sumsq)(const double* a, std::size_t n);
    bool (*all_finite)(const double* a, std::size_t n);
};

const Backend& scalar_backend();
const Backend* avx2_backend();  // nullptr if unsupported on this build/CPU

// Selected once at startup: AVX2 when the CPU has avx2+fma, else scalar.
const Backend& active();
// Force a backend by name ("scalar" or "avx2"); throws if unavailable.
void set_active(const std::string& name);

}  // namespace eow::kernels
