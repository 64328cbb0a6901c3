#pragma once

// Dense f64 inner loops used by the autodiff core and optimizer.
//
// Every kernel has a portable scalar reference in actvocab::simd::scalar and,
// on x86-64, an AVX2+FMA variant in actvocab::simd::avx2. The unqualified
// entry points dispatch to the backend picked at startup (AVX2 when the CPU
// reports it, scalar otherwise). Setting ACTVOCAB_SIMD=scalar in the
// environment forces the reference path.
//
// All matrices are row-major and contiguous.

#include <cstddef>
#include <span>
#include <string_view>

namespace actvocab::simd {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend backend);
bool avx2_supported();
Backend active_backend();
/// Throws std::invalid_argument if the backend is not available on this CPU.
void set_backend(Backend backend);

struct AdamWScalars {
    double learning_rate;
    double beta1;
    double beta2;
    double weight_decay;
    double epsilon;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void add_row_broadcast(std::size_t rows, std::size_t cols, const double* row, double* inout);
void sum_rows(std::size_t rows, std::size_t cols, const double* src, double* out);
void adamw_update(const AdamWScalars& s, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define ACTVOCAB_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void add_row_broadcast(std::size_t rows, std::size_t cols, const double* row, double* inout);
void sum_rows(std::size_t rows, std::size_t cols, const double* src, double* out);
void adamw_update(const AdamWScalars& s, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v);
}  // namespace avx2
#else
#define ACTVOCAB_HAVE_AVX2_KERNELS 0
#endif

/// C[m,n] = A[m,k] * B[k,n], or C += A*B when accumulate is set.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
/// dst[cols,rows] = src[rows,cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
/// inout[i,:] += row for every i.
void add_row_broadcast(std::size_t rows, std::size_t cols, const double* row, double* inout);
/// out[j] += sum_i src[i,j]
void sum_rows(std::size_t rows, std::size_t cols, const double* src, double* out);
void adamw_update(const AdamWScalars& s, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v);

}  // namespace actvocab::simd
