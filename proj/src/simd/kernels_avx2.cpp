#include "tetforge/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#define TF_AVX2 __attribute__((target("avx2")))

namespace tetforge::simd::detail {
namespace {

// Thin per-type wrappers so each kernel is written once.
template <typename T>
struct Avx;

template <>
struct Avx<float> {
    using reg = __m256;
    static constexpr std::size_t width = 8;
    TF_AVX2 static reg load(const float* p) { return _mm256_loadu_ps(p); }
    TF_AVX2 static void store(float* p, reg r) { _mm256_storeu_ps(p, r); }
    TF_AVX2 static reg set1(float v) { return _mm256_set1_ps(v); }
    TF_AVX2 static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    TF_AVX2 static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    TF_AVX2 static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    TF_AVX2 static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
    TF_AVX2 static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
};

template <>
struct Avx<double> {
    using reg = __m256d;
    static constexpr std::size_t width = 4;
    TF_AVX2 static reg load(const double* p) { return _mm256_loadu_pd(p); }
    TF_AVX2 static void store(double* p, reg r) { _mm256_storeu_pd(p, r); }
    TF_AVX2 static reg set1(double v) { return _mm256_set1_pd(v); }
    TF_AVX2 static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    TF_AVX2 static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    TF_AVX2 static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    TF_AVX2 static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
    TF_AVX2 static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
};

template <typename T>
TF_AVX2 void axpby_avx2(const T* x, const T* y, T a, T b, T* out, std::size_t n) {
    using V = Avx<T>;
    const auto va = V::set1(a);
    const auto vb = V::set1(b);
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) {
        const auto ax = V::mul(va, V::load(x + i));
        const auto by = V::mul(vb, V::load(y + i));
        V::store(out + i, V::add(ax, by));
    }
    for (; i < n; ++i) {
        const T ax = a * x[i];
        const T by = b * y[i];
        out[i] = ax + by;
    }
}

template <typename T>
TF_AVX2 void sub_avx2(const T* x, const T* y, T* out, std::size_t n) {
    using V = Avx<T>;
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) V::store(out + i, V::sub(V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

template <typename T>
TF_AVX2 void scale_avx2(T* out, T a, std::size_t n) {
    using V = Avx<T>;
    const auto va = V::set1(a);
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) V::store(out + i, V::mul(V::load(out + i), va));
    for (; i < n; ++i) out[i] *= a;
}

template <typename T>
TF_AVX2 void adam_avx2(T* params, const T* grads, T* m, T* v, std::size_t n,
                       const AdamCoefficients<T>& c) {
    using V = Avx<T>;
    const T one_minus_b1 = T(1) - c.beta1;
    const T one_minus_b2 = T(1) - c.beta2;
    const auto b1 = V::set1(c.beta1);
    const auto b2 = V::set1(c.beta2);
    const auto nb1 = V::set1(one_minus_b1);
    const auto nb2 = V::set1(one_minus_b2);
    const auto bias1 = V::set1(c.bias1);
    const auto bias2 = V::set1(c.bias2);
    const auto lr = V::set1(c.learning_rate);
    const auto eps = V::set1(c.epsilon);
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) {
        const auto g = V::load(grads + i);
        const auto mi = V::add(V::mul(b1, V::load(m + i)), V::mul(nb1, g));
        const auto vi = V::add(V::mul(b2, V::load(v + i)), V::mul(nb2, V::mul(g, g)));
        V::store(m + i, mi);
        V::store(v + i, vi);
        const auto m_hat = V::div(mi, bias1);
        const auto v_hat = V::div(vi, bias2);
        const auto step = V::mul(lr, m_hat);
        const auto denom = V::add(V::sqrt(v_hat), eps);
        V::store(params + i, V::sub(V::load(params + i), V::div(step, denom)));
    }
    for (; i < n; ++i) {
        const T g = grads[i];
        const T mi = c.beta1 * m[i] + one_minus_b1 * g;
        const T vi = c.beta2 * v[i] + one_minus_b2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const T m_hat = mi / c.bias1;
        const T v_hat = vi / c.bias2;
        const T step = c.learning_rate * m_hat;
        params[i] = params[i] - step / (std::sqrt(v_hat) + c.epsilon);
    }
}

} // namespace

template <typename T>
const KernelTable<T>& avx2_table() {
    static const KernelTable<T> table{Isa::avx2, &axpby_avx2<T>, &sub_avx2<T>, &scale_avx2<T>,
                                      &adam_avx2<T>};
    return table;
}

template const KernelTable<float>& avx2_table<float>();
template const KernelTable<double>& avx2_table<double>();

} // namespace tetforge::simd::detail

#endif
