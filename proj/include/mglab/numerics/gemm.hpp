#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

// Row-major matrix products used by the dense layers. All kernels accumulate
// into C; callers zero C first when they want a plain product. Loop orders are
// fixed so results are bit-reproducible for a given build.

namespace mglab::gemm {

namespace detail {

inline constexpr std::size_t MR = 4;
inline constexpr std::size_t NR = 32;

// C tile [MR,NR] += A rows [MR,K] (row stride lda, column stride acol) * B [K, NR] (row stride N).
template <typename T>
inline void tile(std::size_t K, const T* A, std::size_t lda, std::size_t acol, const T* B, std::size_t ldb, T* C,
                 std::size_t ldc)
{
    T acc[MR][NR] = {};
    for (std::size_t k = 0; k < K; ++k) {
        const T* b = B + k * ldb;
        for (std::size_t r = 0; r < MR; ++r) {
            const T a = A[r * lda + k * acol];
            for (std::size_t c = 0; c < NR; ++c) acc[r][c] += a * b[c];
        }
    }
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t c = 0; c < NR; ++c) C[r * ldc + c] += acc[r][c];
}

// Generic edge case for partial tiles.
template <typename T>
inline void edge(std::size_t mr, std::size_t nr, std::size_t K, const T* A, std::size_t lda, std::size_t acol,
                 const T* B, std::size_t ldb, T* C, std::size_t ldc)
{
    for (std::size_t r = 0; r < mr; ++r)
        for (std::size_t c = 0; c < nr; ++c) {
            T s = 0;
            for (std::size_t k = 0; k < K; ++k) s += A[r * lda + k * acol] * B[k * ldb + c];
            C[r * ldc + c] += s;
        }
}

template <typename T>
void driver(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, std::size_t acol, const T* B,
            T* C)
{
    // B panels are packed contiguously; strided rows alias in cache when N
    // is a multiple of a page.
    std::vector<T> panel(K * NR);
    std::size_t j = 0;
    for (; j + NR <= N; j += NR) {
        for (std::size_t k = 0; k < K; ++k) std::copy(B + k * N + j, B + k * N + j + NR, panel.data() + k * NR);
        std::size_t i = 0;
        for (; i + MR <= M; i += MR) tile(K, A + i * lda, lda, acol, panel.data(), NR, C + i * N + j, N);
        if (i < M) edge(M - i, NR, K, A + i * lda, lda, acol, panel.data(), NR, C + i * N + j, N);
    }
    if (j < N) edge(M, N - j, K, A, lda, acol, B + j, N, C + j, N);
}

}  // namespace detail

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C)
{
    detail::driver(M, N, K, A, K, 1, B, C);
}

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C)
{
    detail::driver(M, N, K, A, 1, M, B, C);
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C)
{
    std::vector<T> bt(K * N);
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
    nn(M, N, K, A, bt.data(), C);
}

}  // namespace mglab::gemm
