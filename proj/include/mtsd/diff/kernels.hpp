#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

// Fixed-order dense kernels. Every output element accumulates its inner-product
// terms in ascending index order, so results do not depend on blocking and match
// a naive dot-product loop bit for bit (the build disables FMA contraction).
namespace mtsd::diff::kernels {

inline constexpr std::size_t column_block = 256;

// C[M,P] += A[M,N] * B[N,P]
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t P, const double* A, const double* B, double* C) {
    for (std::size_t j0 = 0; j0 < P; j0 += column_block) {
        const std::size_t j1 = std::min(P, j0 + column_block);
        for (std::size_t i = 0; i < M; ++i) {
            double* c = C + i * P;
            const double* a = A + i * N;
            for (std::size_t k = 0; k < N; ++k) {
                const double aik = a[k];
                const double* b = B + k * P;
                for (std::size_t j = j0; j < j1; ++j) c[j] += aik * b[j];
            }
        }
    }
}

// C[N,P] += A[M,N]^T * B[M,P]
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t P, const double* A, const double* B, double* C) {
    for (std::size_t j0 = 0; j0 < P; j0 += column_block) {
        const std::size_t j1 = std::min(P, j0 + column_block);
        for (std::size_t i = 0; i < M; ++i) {
            const double* a = A + i * N;
            const double* b = B + i * P;
            for (std::size_t k = 0; k < N; ++k) {
                const double aik = a[k];
                double* c = C + k * P;
                for (std::size_t j = j0; j < j1; ++j) c[j] += aik * b[j];
            }
        }
    }
}

// out[cols,rows] = in[rows,cols]^T
inline void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

// C[M,N] += A[M,P] * B[N,P]^T
inline void gemm_nt(std::size_t M, std::size_t P, std::size_t N, const double* A, const double* B, double* C) {
    std::vector<double> bt(P * N);
    transpose(N, P, B, bt.data());
    gemm_nn(M, P, N, A, bt.data(), C);
}

} // namespace mtsd::diff::kernels
