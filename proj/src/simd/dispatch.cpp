#include "tetforge/error.hpp"
#include "tetforge/simd/kernels.hpp"

#include <cstdlib>
#include <string>

namespace tetforge::simd {

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    }
    return "unknown";
}

namespace {

bool cpu_has(Isa isa) {
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
        return __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
        return true;
#else
        return false;
#endif
    }
    return false;
}

Isa choose_isa() {
    const char* env = std::getenv("TF_SIMD");
    const std::string request = env ? env : "auto";
    if (request == "scalar") return Isa::scalar;
    if (request == "avx2" || request == "neon") {
        const Isa wanted = request == "avx2" ? Isa::avx2 : Isa::neon;
        if (!cpu_has(wanted)) throw ConfigError("TF_SIMD=" + request + " is not supported on this CPU");
        return wanted;
    }
    if (request != "auto") throw ConfigError("TF_SIMD must be scalar, avx2, neon or auto, got '" + request + "'");
    if (cpu_has(Isa::avx2)) return Isa::avx2;
    if (cpu_has(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

template <typename T>
void check_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ContractError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                            std::to_string(b) + ")");
    }
}

} // namespace

std::vector<Isa> available_isas() {
    std::vector<Isa> out{Isa::scalar};
    if (cpu_has(Isa::avx2)) out.push_back(Isa::avx2);
    if (cpu_has(Isa::neon)) out.push_back(Isa::neon);
    return out;
}

template <typename T>
const KernelTable<T>* table_for(Isa isa) {
    if (!cpu_has(isa)) return nullptr;
    switch (isa) {
    case Isa::scalar: return &detail::scalar_table<T>();
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
        return &detail::avx2_table<T>();
#else
        return nullptr;
#endif
    case Isa::neon:
#if defined(__aarch64__)
        return &detail::neon_table<T>();
#else
        return nullptr;
#endif
    }
    return nullptr;
}

Isa active_isa() {
    static const Isa isa = choose_isa();
    return isa;
}

template <typename T>
const KernelTable<T>& active() {
    static const KernelTable<T>& table = *table_for<T>(active_isa());
    return table;
}

template <typename T>
void axpby(std::span<const T> x, std::span<const T> y, T a, T b, std::span<T> out) {
    check_same<T>(x.size(), y.size(), "axpby");
    check_same<T>(x.size(), out.size(), "axpby");
    active<T>().axpby(x.data(), y.data(), a, b, out.data(), x.size());
}

template <typename T>
void sub(std::span<const T> x, std::span<const T> y, std::span<T> out) {
    check_same<T>(x.size(), y.size(), "sub");
    check_same<T>(x.size(), out.size(), "sub");
    active<T>().sub(x.data(), y.data(), out.data(), x.size());
}

template <typename T>
void scale(std::span<T> out, T a) {
    active<T>().scale(out.data(), a, out.size());
}

template <typename T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamCoefficients<T>& c) {
    check_same<T>(params.size(), grads.size(), "adam");
    check_same<T>(params.size(), m.size(), "adam");
    check_same<T>(params.size(), v.size(), "adam");
    active<T>().adam(params.data(), grads.data(), m.data(), v.data(), params.size(), c);
}

#define TF_INSTANTIATE(T)                                                                          \
    template const KernelTable<T>* table_for<T>(Isa);                                              \
    template const KernelTable<T>& active<T>();                                                    \
    template void axpby<T>(std::span<const T>, std::span<const T>, T, T, std::span<T>);            \
    template void sub<T>(std::span<const T>, std::span<const T>, std::span<T>);                    \
    template void scale<T>(std::span<T>, T);                                                       \
    template void adam<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,            \
                          const AdamCoefficients<T>&);

TF_INSTANTIATE(float)
TF_INSTANTIATE(double)

#undef TF_INSTANTIATE

} // namespace tetforge::simd
