#pragma once

// Elementwise arithmetic kernels used on the hot paths of the distillation
// loop (noising, guidance combination, residuals, optimizer updates).
//
// Each kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 (x86-64) or NEON (aarch64) variant. The variant is
// picked once at runtime from the CPU features; TF_SIMD=scalar|avx2|neon|auto
// overrides the choice. Variants perform the same IEEE operations in the same
// order (no fused multiply-add), so they are bit-identical to the scalar
// reference.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace tetforge::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

template <typename T>
struct AdamCoefficients {
    T learning_rate;
    T beta1;
    T beta2;
    T epsilon;
    T bias1; // 1 - beta1^step
    T bias2; // 1 - beta2^step
};

template <typename T>
struct KernelTable {
    Isa isa;
    // out[i] = a * x[i] + b * y[i]; out may alias x or y.
    void (*axpby)(const T* x, const T* y, T a, T b, T* out, std::size_t n);
    // out[i] = x[i] - y[i]
    void (*sub)(const T* x, const T* y, T* out, std::size_t n);
    // out[i] *= a
    void (*scale)(T* out, T a, std::size_t n);
    void (*adam)(T* params, const T* grads, T* m, T* v, std::size_t n,
                 const AdamCoefficients<T>& c);
};

// Variants compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();

// Table for a specific variant; nullptr when unavailable.
template <typename T>
const KernelTable<T>* table_for(Isa isa);

// Table selected for this process (first call fixes the choice).
template <typename T>
const KernelTable<T>& active();

Isa active_isa();

template <typename T>
void axpby(std::span<const T> x, std::span<const T> y, T a, T b, std::span<T> out);

template <typename T>
void sub(std::span<const T> x, std::span<const T> y, std::span<T> out);

template <typename T>
void scale(std::span<T> out, T a);

template <typename T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamCoefficients<T>& c);

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
template <typename T>
const KernelTable<T>& avx2_table();
#endif
#if defined(__aarch64__)
template <typename T>
const KernelTable<T>& neon_table();
#endif
} // namespace detail

} // namespace tetforge::simd
