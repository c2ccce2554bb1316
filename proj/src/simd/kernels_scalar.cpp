#include "tetforge/simd/kernels.hpp"

#include <cmath>

namespace tetforge::simd::detail {
namespace {

template <typename T>
void axpby_scalar(const T* x, const T* y, T a, T b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T ax = a * x[i];
        const T by = b * y[i];
        out[i] = ax + by;
    }
}

template <typename T>
void sub_scalar(const T* x, const T* y, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

template <typename T>
void scale_scalar(T* out, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] *= a;
}

template <typename T>
void adam_scalar(T* params, const T* grads, T* m, T* v, std::size_t n,
                 const AdamCoefficients<T>& c) {
    const T one_minus_b1 = T(1) - c.beta1;
    const T one_minus_b2 = T(1) - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
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
const KernelTable<T>& scalar_table() {
    static const KernelTable<T> table{Isa::scalar, &axpby_scalar<T>, &sub_scalar<T>,
                                      &scale_scalar<T>, &adam_scalar<T>};
    return table;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

} // namespace tetforge::simd::detail
