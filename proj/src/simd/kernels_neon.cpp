#include "tetforge/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace tetforge::simd::detail {
namespace {

template <typename T>
struct Neon;

template <>
struct Neon<float> {
    using reg = float32x4_t;
    static constexpr std::size_t width = 4;
    static reg load(const float* p) { return vld1q_f32(p); }
    static void store(float* p, reg r) { vst1q_f32(p, r); }
    static reg set1(float v) { return vdupq_n_f32(v); }
    static reg add(reg a, reg b) { return vaddq_f32(a, b); }
    static reg sub(reg a, reg b) { return vsubq_f32(a, b); }
    static reg mul(reg a, reg b) { return vmulq_f32(a, b); }
    static reg div(reg a, reg b) { return vdivq_f32(a, b); }
    static reg sqrt(reg a) { return vsqrtq_f32(a); }
};

template <>
struct Neon<double> {
    using reg = float64x2_t;
    static constexpr std::size_t width = 2;
    static reg load(const double* p) { return vld1q_f64(p); }
    static void store(double* p, reg r) { vst1q_f64(p, r); }
    static reg set1(double v) { return vdupq_n_f64(v); }
    static reg add(reg a, reg b) { return vaddq_f64(a, b); }
    static reg sub(reg a, reg b) { return vsubq_f64(a, b); }
    static reg mul(reg a, reg b) { return vmulq_f64(a, b); }
    static reg div(reg a, reg b) { return vdivq_f64(a, b); }
    static reg sqrt(reg a) { return vsqrtq_f64(a); }
};

// vmulq/vaddq are kept separate (no vfmaq) to stay bit-identical with the
// scalar reference.
template <typename T>
void axpby_neon(const T* x, const T* y, T a, T b, T* out, std::size_t n) {
    using V = Neon<T>;
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
void sub_neon(const T* x, const T* y, T* out, std::size_t n) {
    using V = Neon<T>;
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) V::store(out + i, V::sub(V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

template <typename T>
void scale_neon(T* out, T a, std::size_t n) {
    using V = Neon<T>;
    const auto va = V::set1(a);
    std::size_t i = 0;
    for (; i + V::width <= n; i += V::width) V::store(out + i, V::mul(V::load(out + i), va));
    for (; i < n; ++i) out[i] *= a;
}

template <typename T>
void adam_neon(T* params, const T* grads, T* m, T* v, std::size_t n, const AdamCoefficients<T>& c) {
    using V = Neon<T>;
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
        const auto step = V::mul(lr, V::div(mi, bias1));
        const auto denom = V::add(V::sqrt(V::div(vi, bias2)), eps);
        V::store(params + i, V::sub(V::load(params + i), V::div(step, denom)));
    }
    for (; i < n; ++i) {
        const T g = grads[i];
        const T mi = c.beta1 * m[i] + one_minus_b1 * g;
        const T vi = c.beta2 * v[i] + one_minus_b2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const T step = c.learning_rate * (mi / c.bias1);
        params[i] = params[i] - step / (std::sqrt(vi / c.bias2) + c.epsilon);
    }
}

} // namespace

template <typename T>
const KernelTable<T>& neon_table() {
    static const KernelTable<T> table{Isa::neon, &axpby_neon<T>, &sub_neon<T>, &scale_neon<T>,
                                      &adam_neon<T>};
    return table;
}

template const KernelTable<float>& neon_table<float>();
template const KernelTable<double>& neon_table<double>();

} // namespace tetforge::simd::detail

#endif
