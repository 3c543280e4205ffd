#pragma once

#include <cstdint>

namespace glpnet::detail {

// c[M,Q] += a[M,P] * b[P,Q]
template <typename T>
inline void gemm_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t p, std::int64_t q) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * p;
        T* crow = c + i * q;
        for (std::int64_t k = 0; k < p; ++k) {
            const T aik = arow[k];
            const T* brow = b + k * q;
            for (std::int64_t j = 0; j < q; ++j) crow[j] += aik * brow[j];
        }
    }
}

// c[M,Q] += a[M,P] * b[Q,P]^T
template <typename T>
inline void gemm_acc_bt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t p, std::int64_t q) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * p;
        for (std::int64_t j = 0; j < q; ++j) {
            const T* brow = b + j * p;
            T s = T(0);
            for (std::int64_t k = 0; k < p; ++k) s += arow[k] * brow[k];
            c[i * q + j] += s;
        }
    }
}

// c[K,Q] += a[M,K]^T * b[M,Q]
template <typename T>
inline void gemm_acc_at(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t q) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * q;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            T* crow = c + kk * q;
            for (std::int64_t j = 0; j < q; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace glpnet::detail
