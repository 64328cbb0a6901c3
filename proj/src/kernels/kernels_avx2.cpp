// Compiled with -mavx2 -mfma; only called after a runtime CPU check.
#include "actvocab/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace actvocab::simd::avx2 {

namespace {

// R rows of C, 8 columns, full k sweep. C tile stays in registers.
template <int R>
inline void tile_rx8(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                     bool accumulate) {
    __m256d acc[R][2];
    for (int r = 0; r < R; ++r) {
        if (accumulate) {
            acc[r][0] = _mm256_loadu_pd(c + r * n);
            acc[r][1] = _mm256_loadu_pd(c + r * n + 4);
        } else {
            acc[r][0] = _mm256_setzero_pd();
            acc[r][1] = _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
        for (int r = 0; r < R; ++r) {
            const __m256d av = _mm256_broadcast_sd(a + r * k + p);
            acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_storeu_pd(c + r * n, acc[r][0]);
        _mm256_storeu_pd(c + r * n + 4, acc[r][1]);
    }
}

template <int R>
inline void tile_rx4(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                     bool accumulate) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = accumulate ? _mm256_loadu_pd(c + r * n) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n);
        for (int r = 0; r < R; ++r)
            acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * k + p), b0, acc[r]);
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + r * n, acc[r]);
}

template <int R>
inline void tile_rx1(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                     bool accumulate) {
    double acc[R];
    for (int r = 0; r < R; ++r) acc[r] = accumulate ? c[r * n] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * n];
        for (int r = 0; r < R; ++r) acc[r] = std::fma(a[r * k + p], bv, acc[r]);
    }
    for (int r = 0; r < R; ++r) c[r * n] = acc[r];
}

template <int R>
void row_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) tile_rx8<R>(n, k, a, b + j, c + j, accumulate);
    for (; j + 4 <= n; j += 4) tile_rx4<R>(n, k, a, b + j, c + j, accumulate);
    for (; j < n; ++j) tile_rx1<R>(n, k, a, b + j, c + j, accumulate);
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_block<4>(n, k, a + i * k, b, c + i * n, accumulate);
    for (; i < m; ++i) row_block<1>(n, k, a + i * k, b, c + i * n, accumulate);
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) {
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            const __m256d r0 = _mm256_loadu_pd(src + (i + 0) * cols + j);
            const __m256d r1 = _mm256_loadu_pd(src + (i + 1) * cols + j);
            const __m256d r2 = _mm256_loadu_pd(src + (i + 2) * cols + j);
            const __m256d r3 = _mm256_loadu_pd(src + (i + 3) * cols + j);
            const __m256d t0 = _mm256_unpacklo_pd(r0, r1);
            const __m256d t1 = _mm256_unpackhi_pd(r0, r1);
            const __m256d t2 = _mm256_unpacklo_pd(r2, r3);
            const __m256d t3 = _mm256_unpackhi_pd(r2, r3);
            _mm256_storeu_pd(dst + (j + 0) * rows + i, _mm256_permute2f128_pd(t0, t2, 0x20));
            _mm256_storeu_pd(dst + (j + 1) * rows + i, _mm256_permute2f128_pd(t1, t3, 0x20));
            _mm256_storeu_pd(dst + (j + 2) * rows + i, _mm256_permute2f128_pd(t0, t2, 0x31));
            _mm256_storeu_pd(dst + (j + 3) * rows + i, _mm256_permute2f128_pd(t1, t3, 0x31));
        }
        for (; j < cols; ++j)
            for (std::size_t r = i; r < i + 4; ++r) dst[j * rows + r] = src[r * cols + j];
    }
    for (; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t size = x.size();
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= size; i += 4)
        _mm256_storeu_pd(y.data() + i,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i)));
    for (; i < size; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double dot(std::span<const double> x, std::span<const double> y) {
    const std::size_t size = x.size();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= size; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i + 4), _mm256_loadu_pd(y.data() + i + 4), acc1);
    }
    for (; i + 4 <= size; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i), acc0);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
    double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < size; ++i) acc = std::fma(x[i], y[i], acc);
    return acc;
}

void add_row_broadcast(std::size_t rows, std::size_t cols, const double* row, double* inout) {
    for (std::size_t i = 0; i < rows; ++i) {
        double* dst = inout + i * cols;
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4)
            _mm256_storeu_pd(dst + j, _mm256_add_pd(_mm256_loadu_pd(dst + j), _mm256_loadu_pd(row + j)));
        for (; j < cols; ++j) dst[j] += row[j];
    }
}

void sum_rows(std::size_t rows, std::size_t cols, const double* src, double* out) {
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
        __m256d acc = _mm256_loadu_pd(out + j);
        for (std::size_t i = 0; i < rows; ++i) acc = _mm256_add_pd(acc, _mm256_loadu_pd(src + i * cols + j));
        _mm256_storeu_pd(out + j, acc);
    }
    for (; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) out[j] += src[i * cols + j];
}

void adamw_update(const AdamWScalars& s, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v) {
    const std::size_t size = param.size();
    const __m256d b1 = _mm256_set1_pd(s.beta1);
    const __m256d b2 = _mm256_set1_pd(s.beta2);
    const __m256d one_b1 = _mm256_set1_pd(1.0 - s.beta1);
    const __m256d one_b2 = _mm256_set1_pd(1.0 - s.beta2);
    const __m256d bc1 = _mm256_set1_pd(s.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(s.bias_correction2);
    const __m256d eps = _mm256_set1_pd(s.epsilon);
    const __m256d lr = _mm256_set1_pd(s.learning_rate);
    const __m256d wd = _mm256_set1_pd(s.weight_decay);
    std::size_t i = 0;
    for (; i + 4 <= size; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad.data() + i);
        __m256d mv = _mm256_loadu_pd(m.data() + i);
        __m256d vv = _mm256_loadu_pd(v.data() + i);
        __m256d p = _mm256_loadu_pd(param.data() + i);
        mv = _mm256_add_pd(_mm256_mul_pd(b1, mv), _mm256_mul_pd(one_b1, g));
        vv = _mm256_add_pd(_mm256_mul_pd(b2, vv), _mm256_mul_pd(_mm256_mul_pd(one_b2, g), g));
        const __m256d m_hat = _mm256_div_pd(mv, bc1);
        const __m256d v_hat = _mm256_div_pd(vv, bc2);
        const __m256d step = _mm256_add_pd(_mm256_div_pd(m_hat, _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps)),
                                           _mm256_mul_pd(wd, p));
        p = _mm256_sub_pd(p, _mm256_mul_pd(lr, step));
        _mm256_storeu_pd(m.data() + i, mv);
        _mm256_storeu_pd(v.data() + i, vv);
        _mm256_storeu_pd(param.data() + i, p);
    }
    if (i < size) {
        scalar::adamw_update(s, param.subspan(i), grad.subspan(i), m.subspan(i), v.subspan(i));
    }
}

}  // namespace actvocab::simd::avx2
