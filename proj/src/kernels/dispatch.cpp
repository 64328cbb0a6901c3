#include <cstdlib>
#include <stdexcept>
#include <string>

#include "actvocab/kernels.hpp"

namespace actvocab::simd {

namespace {

struct Table {
    Backend backend;
    decltype(&scalar::gemm) gemm;
    decltype(&scalar::transpose) transpose;
    decltype(&scalar::axpy) axpy;
    decltype(&scalar::dot) dot;
    decltype(&scalar::add_row_broadcast) add_row_broadcast;
    decltype(&scalar::sum_rows) sum_rows;
    decltype(&scalar::adamw_update) adamw_update;
};

constexpr Table kScalar{Backend::scalar,          scalar::gemm,     scalar::transpose,
                        scalar::axpy,             scalar::dot,      scalar::add_row_broadcast,
                        scalar::sum_rows,         scalar::adamw_update};

#if ACTVOCAB_HAVE_AVX2_KERNELS
constexpr Table kAvx2{Backend::avx2,          avx2::gemm,     avx2::transpose,
                      avx2::axpy,             avx2::dot,      avx2::add_row_broadcast,
                      avx2::sum_rows,         avx2::adamw_update};
#endif

const Table* pick_default() {
    if (const char* env = std::getenv("ACTVOCAB_SIMD"); env != nullptr && std::string(env) == "scalar") {
        return &kScalar;
    }
#if ACTVOCAB_HAVE_AVX2_KERNELS
    if (avx2_supported()) return &kAvx2;
#endif
    return &kScalar;
}

const Table*& active() {
    static const Table* table = pick_default();
    return table;
}

}  // namespace

std::string_view backend_name(Backend backend) {
    switch (backend) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "unknown";
}

bool avx2_supported() {
#if ACTVOCAB_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() { return active()->backend; }

void set_backend(Backend backend) {
    if (backend == Backend::scalar) {
        active() = &kScalar;
        return;
    }
#if ACTVOCAB_HAVE_AVX2_KERNELS
    if (avx2_supported()) {
        active() = &kAvx2;
        return;
    }
#endif
    throw std::invalid_argument("simd backend avx2 is not supported on this CPU");
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
    active()->gemm(m, n, k, a, b, c, accumulate);
}
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
    active()->transpose(rows, cols, src, dst);
}
void axpy(double alpha, std::span<const double> x, std::span<double> y) { active()->axpy(alpha, x, y); }
double dot(std::span<const double> x, std::span<const double> y) { return active()->dot(x, y); }
void add_row_broadcast(std::size_t rows, std::size_t cols, const double* row, double* inout) {
    active()->add_row_broadcast(rows, cols, row, inout);
}
void sum_rows(std::size_t rows, std::size_t cols, const double* src, double* out) {
    active()->sum_rows(rows, cols, src, out);
}
void adamw_update(const AdamWScalars& s, std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v) {
    active()->adamw_update(s, param, grad, m, v);
}

}  // namespace actvocab::simd
