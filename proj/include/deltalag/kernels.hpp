#pragma once

#include <cstddef>

// Dense row-major kernels. The functions in `kernels` are OpenMP-parallel over
// output rows once the work exceeds a threshold; `kernels::reference` holds the
// plain serial versions the tests and benchmarks compare against. Each output
// element is reduced in the same order in both, so matmul results agree bit for
// bit regardless of thread count.
namespace deltalag::kernels {

// Flop count (m*n*k) above which the parallel kernels fork threads.
inline constexpr std::size_t kParallelWork = std::size_t{1} << 16;

// c[m x n] (+)= a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false);
// c[m x n] (+)= a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);
// c[m x n] (+)= a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);

// Pearson correlation between every column of x[rows x p] and every column of
// y[rows x q], written to out[p x q]. A column containing a non-finite value or
// having zero variance yields NaN for all of its pairs.
void column_correlation(const double* x, const double* y, double* out, std::size_t rows,
                        std::size_t p, std::size_t q);

namespace reference {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);
void column_correlation(const double* x, const double* y, double* out, std::size_t rows,
                        std::size_t p, std::size_t q);

}  // namespace reference

}  // namespace deltalag::kernels
