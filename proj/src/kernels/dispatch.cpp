#include "eow/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace eow::kernels {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Backend* pick_default() {
    if (const char* env = std::getenv("EOW_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") return &scalar_backend();
        if (want == "avx2" && avx2_backend() && cpu_has_avx2_fma()) return avx2_backend();
        // Unknown or unavailable request falls through to auto-detection.
    }
    if (avx2_backend() && cpu_has_avx2_fma()) return avx2_backend();
    return &scalar_backend();
}

const Backend*& active_slot() {
    static const Backend* slot = pick_default();
    return slot;
}

}  // namespace

const Backend& active() { return *active_slot(); }

void set_active(const std::string& name) {
    if (name == "scalar") {
        active_slot() = &scalar_backend();
        return;
    }
    if (name == "avx2") {
        if (!avx2_backend() || !cpu_has_avx2_fma())
            throw std::runtime_error("avx2 kernels unavailable on this CPU/build");
        active_slot() = avx2_backend();
        return;
    }
    throw std::runtime_error("unknown kernel backend: " + name);
}

}  // namespace eow::kernels
