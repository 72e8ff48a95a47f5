#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vidfill::kernels {

// Runtime switch between the serial reference kernels and the OpenMP ones.
// Both flavours perform the identical per-element arithmetic in the identical
// order, so results are bit-equal and runs are reproducible at any thread
// count. Reductions are blocked (fixed 4096-element blocks, block partials
// combined in block order) for the same reason.
enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);
bool parallel_enabled();

inline constexpr std::size_t kSumBlock = 4096;

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void softmax_rows(double* s, std::size_t rows, std::size_t cols);
double block_sum(const double* x, std::size_t n);
void pool_video(const double* video, std::size_t T, std::size_t H, std::size_t W, std::size_t C,
                std::size_t st, std::size_t sh, std::size_t sw, double* cells, std::size_t lt,
                std::size_t lh, std::size_t lw);
void upsample_video(const double* cells, std::size_t lt, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W);
void min_pool_time(const std::uint8_t* mask, std::size_t T, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt);
void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw);
void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius);
void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out);

}  // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void softmax_rows(double* s, std::size_t rows, std::size_t cols);
double block_sum(const double* x, std::size_t n);
void pool_video(const double* video, std::size_t T, std::size_t H, std::size_t W, std::size_t C,
                std::size_t st, std::size_t sh, std::size_t sw, double* cells, std::size_t lt,
                std::size_t lh, std::size_t lw);
void upsample_video(const double* cells, std::size_t lt, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W);
void min_pool_time(const std::uint8_t* mask, std::size_t T, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt);
void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw);
void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius);
void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out);

}  // namespace par

// Dispatchers.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a = false, bool trans_b = false, bool accumulate = false);
void softmax_rows(double* s, std::size_t rows, std::size_t cols);
double block_sum(const double* x, std::size_t n);
void pool_video(const double* video, std::size_t T, std::size_t H, std::size_t W, std::size_t C,
                std::size_t st, std::size_t sh, std::size_t sw, double* cells, std::size_t lt,
                std::size_t lh, std::size_t lw);
void upsample_video(const double* cells, std::size_t lt, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W);
void min_pool_time(const std::uint8_t* mask, std::size_t T, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt);
void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw);
void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius);
void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out);

// Elementwise map over [0, n); f(i) must touch index i only.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    if (parallel_enabled()) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long i = 0; i < static_cast<long long>(n); ++i) f(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) f(i);
    }
}

// Blocked deterministic sum of f(i) over [0, n).
template <class F>
double block_sum_map(std::size_t n, F&& f) {
    const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    if (nblocks == 0) return 0.0;
    std::vector<double> partial(nblocks, 0.0);
    auto body = [&](std::size_t b) {
        const std::size_t lo = b * kSumBlock;
        const std::size_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        partial[b] = s;
    };
    if (parallel_enabled()) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long b = 0; b < static_cast<long long>(nblocks); ++b)
            body(static_cast<std::size_t>(b));
    } else {
        for (std::size_t b = 0; b < nblocks; ++b) body(b);
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace vidfill::kernels
