#include "vidfill/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace vidfill::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
bool parallel_enabled() { return backend() == Backend::parallel; }

// ---------------------------------------------------------------------------
// Shared element formulas. Each kernel computes one output element with a
// fixed inner-loop order; serial and parallel flavours call the same body so
// they agree bit-for-bit.
// ---------------------------------------------------------------------------

namespace detail {

inline double matmul_cell(const double* a, const double* b, std::size_t m, std::size_t k,
                          std::size_t n, bool trans_a, bool trans_b, std::size_t i,
                          std::size_t j) {
    double acc = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = trans_a ? a[kk * m + i] : a[i * k + kk];
        const double bv = trans_b ? b[j * k + kk] : b[kk * n + j];
        acc += av * bv;
    }
    return acc;
}

inline void softmax_row(double* row, std::size_t cols) {
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        row[j] = std::exp(row[j] - mx);
        denom += row[j];
    }
    const double inv = 1.0 / denom;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
}

// Mean over one causal group x spatial patch, one channel.
// Group 0 is pixel frame 0 alone; group g >= 1 covers frames
// [(g-1)*st+1 .. g*st].
inline double pool_cell(const double* video, std::size_t H, std::size_t W, std::size_t C,
                        std::size_t st, std::size_t sh, std::size_t sw, std::size_t g,
                        std::size_t cy, std::size_t cx, std::size_t ch) {
    const std::size_t f0 = g == 0 ? 0 : (g - 1) * st + 1;
    const std::size_t f1 = g == 0 ? 1 : g * st + 1;
    double acc = 0.0;
    for (std::size_t f = f0; f < f1; ++f)
        for (std::size_t y = cy * sh; y < (cy + 1) * sh; ++y)
            for (std::size_t x = cx * sw; x < (cx + 1) * sw; ++x)
                acc += video[((f * H + y) * W + x) * C + ch];
    return acc / static_cast<double>((f1 - f0) * sh * sw);
}

inline std::size_t group_of_frame(std::size_t f, std::size_t st) {
    return f == 0 ? 0 : (f - 1) / st + 1;
}

inline std::uint8_t min_time_cell(const std::uint8_t* mask, std::size_t H, std::size_t W,
                                  std::size_t st, std::size_t g, std::size_t y, std::size_t x) {
    const std::size_t f0 = g == 0 ? 0 : (g - 1) * st + 1;
    const std::size_t f1 = g == 0 ? 1 : g * st + 1;
    std::uint8_t v = 1;
    for (std::size_t f = f0; f < f1; ++f) v = std::min(v, mask[(f * H + y) * W + x]);
    return v;
}

inline std::uint8_t min_space_cell(const std::uint8_t* stack, std::size_t H, std::size_t W,
                                   std::size_t sh, std::size_t sw, std::size_t g, std::size_t cy,
                                   std::size_t cx) {
    std::uint8_t v = 1;
    for (std::size_t y = cy * sh; y < (cy + 1) * sh; ++y)
        for (std::size_t x = cx * sw; x < (cx + 1) * sw; ++x)
            v = std::min(v, stack[(g * H + y) * W + x]);
    return v;
}

// Sliding max along one axis of a (n0, n1, n2) uint8 grid, clipped at borders.
inline void max_line(const std::uint8_t* in, std::uint8_t* out, std::size_t len,
                     std::size_t stride, std::size_t radius) {
    for (std::size_t i = 0; i < len; ++i) {
        const std::size_t lo = i > radius ? i - radius : 0;
        const std::size_t hi = std::min(len - 1, i + radius);
        std::uint8_t v = 0;
        for (std::size_t j = lo; j <= hi; ++j) v = std::max(v, in[j * stride]);
        out[i * stride] = v;
    }
}

}  // namespace detail

// Blocked sum shared by both flavours; the fixed block size pins the
// summation order so results do not depend on the backend or thread count.
static double block_partial(const double* x, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    return s;
}

static double blocked_sum_serial(const double* x, std::size_t n) {
    const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    double total = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b)
        total += block_partial(x, b * kSumBlock, std::min(n, (b + 1) * kSumBlock));
    return total;
}

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = detail::matmul_cell(a, b, m, k, n, trans_a, trans_b, i, j);
            if (accumulate)
                c[i * n + j] += v;
            else
                c[i * n + j] = v;
        }
}

void softmax_rows(double* s, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) detail::softmax_row(s + i * cols, cols);
}

double block_sum(const double* x, std::size_t n) { return blocked_sum_serial(x, n); }

void pool_video(const double* video, std::size_t /*T*/, std::size_t H, std::size_t W,
                std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* cells,
                std::size_t lt, std::size_t lh, std::size_t lw) {
    for (std::size_t g = 0; g < lt; ++g)
        for (std::size_t cy = 0; cy < lh; ++cy)
            for (std::size_t cx = 0; cx < lw; ++cx)
                for (std::size_t ch = 0; ch < C; ++ch)
                    cells[((g * lh + cy) * lw + cx) * C + ch] =
                        detail::pool_cell(video, H, W, C, st, sh, sw, g, cy, cx, ch);
}

void upsample_video(const double* cells, std::size_t /*lt*/, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W) {
    for (std::size_t f = 0; f < T; ++f) {
        const std::size_t g = detail::group_of_frame(f, st);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t ch = 0; ch < C; ++ch)
                    video[((f * H + y) * W + x) * C + ch] =
                        cells[((g * lh + y / sh) * lw + x / sw) * C + ch];
    }
}

void min_pool_time(const std::uint8_t* mask, std::size_t /*T*/, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt) {
    for (std::size_t g = 0; g < lt; ++g)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out[(g * H + y) * W + x] = detail::min_time_cell(mask, H, W, st, g, y, x);
}

void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw) {
    for (std::size_t g = 0; g < lt; ++g)
        for (std::size_t cy = 0; cy < lh; ++cy)
            for (std::size_t cx = 0; cx < lw; ++cx)
                out[(g * lh + cy) * lw + cx] =
                    detail::min_space_cell(stack, H, W, sh, sw, g, cy, cx);
}

void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius) {
    if (axis == 0) {
        for (std::size_t i1 = 0; i1 < n1; ++i1)
            for (std::size_t i2 = 0; i2 < n2; ++i2)
                detail::max_line(in + i1 * n2 + i2, out + i1 * n2 + i2, n0, n1 * n2, radius);
    } else if (axis == 1) {
        for (std::size_t i0 = 0; i0 < n0; ++i0)
            for (std::size_t i2 = 0; i2 < n2; ++i2)
                detail::max_line(in + i0 * n1 * n2 + i2, out + i0 * n1 * n2 + i2, n1, n2, radius);
    } else {
        for (std::size_t i0 = 0; i0 < n0; ++i0)
            for (std::size_t i1 = 0; i1 < n1; ++i1)
                detail::max_line(in + (i0 * n1 + i1) * n2, out + (i0 * n1 + i1) * n2, n2, 1,
                                 radius);
    }
}

void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out) {
    const std::size_t ow = w - win + 1;
    const std::size_t oh = h - win + 1;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < win; ++i) acc += g[i] * img[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t j = 0; j < win; ++j) acc += g[j] * tmp[(y + j) * ow + x];
            out[y * ow + x] = acc;
        }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations. Loop bodies match the serial reference exactly.
// ---------------------------------------------------------------------------

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = detail::matmul_cell(a, b, m, k, n, trans_a, trans_b,
                                                 static_cast<std::size_t>(i), j);
            if (accumulate)
                c[static_cast<std::size_t>(i) * n + j] += v;
            else
                c[static_cast<std::size_t>(i) * n + j] = v;
        }
}

void softmax_rows(double* s, std::size_t rows, std::size_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(rows); ++i)
        detail::softmax_row(s + static_cast<std::size_t>(i) * cols, cols);
}

double block_sum(const double* x, std::size_t n) {
    const std::size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    std::vector<double> partial(nblocks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kSumBlock;
        partial[static_cast<std::size_t>(b)] = block_partial(x, lo, std::min(n, lo + kSumBlock));
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

void pool_video(const double* video, std::size_t /*T*/, std::size_t H, std::size_t W,
                std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* cells,
                std::size_t lt, std::size_t lh, std::size_t lw) {
    const std::size_t ncells = lt * lh * lw;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long idx = 0; idx < static_cast<long long>(ncells); ++idx) {
        const std::size_t cell = static_cast<std::size_t>(idx);
        const std::size_t g = cell / (lh * lw);
        const std::size_t cy = (cell / lw) % lh;
        const std::size_t cx = cell % lw;
        for (std::size_t ch = 0; ch < C; ++ch)
            cells[cell * C + ch] = detail::pool_cell(video, H, W, C, st, sh, sw, g, cy, cx, ch);
    }
}

void upsample_video(const double* cells, std::size_t /*lt*/, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long fi = 0; fi < static_cast<long long>(T); ++fi) {
        const std::size_t f = static_cast<std::size_t>(fi);
        const std::size_t g = detail::group_of_frame(f, st);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t ch = 0; ch < C; ++ch)
                    video[((f * H + y) * W + x) * C + ch] =
                        cells[((g * lh + y / sh) * lw + x / sw) * C + ch];
    }
}

void min_pool_time(const std::uint8_t* mask, std::size_t /*T*/, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long gi = 0; gi < static_cast<long long>(lt); ++gi) {
        const std::size_t g = static_cast<std::size_t>(gi);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out[(g * H + y) * W + x] = detail::min_time_cell(mask, H, W, st, g, y, x);
    }
}

void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw) {
    const std::size_t ncells = lt * lh * lw;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long idx = 0; idx < static_cast<long long>(ncells); ++idx) {
        const std::size_t cell = static_cast<std::size_t>(idx);
        const std::size_t g = cell / (lh * lw);
        const std::size_t cy = (cell / lw) % lh;
        const std::size_t cx = cell % lw;
        out[cell] = detail::min_space_cell(stack, H, W, sh, sw, g, cy, cx);
    }
}

void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius) {
    if (axis == 0) {
        const std::size_t nlines = n1 * n2;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long l = 0; l < static_cast<long long>(nlines); ++l)
            detail::max_line(in + static_cast<std::size_t>(l), out + static_cast<std::size_t>(l),
                             n0, n1 * n2, radius);
    } else if (axis == 1) {
        const std::size_t nlines = n0 * n2;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long l = 0; l < static_cast<long long>(nlines); ++l) {
            const std::size_t i0 = static_cast<std::size_t>(l) / n2;
            const std::size_t i2 = static_cast<std::size_t>(l) % n2;
            detail::max_line(in + i0 * n1 * n2 + i2, out + i0 * n1 * n2 + i2, n1, n2, radius);
        }
    } else {
        const std::size_t nlines = n0 * n1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long long l = 0; l < static_cast<long long>(nlines); ++l)
            detail::max_line(in + static_cast<std::size_t>(l) * n2,
                             out + static_cast<std::size_t>(l) * n2, n2, 1, radius);
    }
}

void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out) {
    const std::size_t ow = w - win + 1;
    const std::size_t oh = h - win + 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long yi = 0; yi < static_cast<long long>(h); ++yi) {
        const std::size_t y = static_cast<std::size_t>(yi);
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < win; ++i) acc += g[i] * img[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long yi = 0; yi < static_cast<long long>(oh); ++yi) {
        const std::size_t y = static_cast<std::size_t>(yi);
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t j = 0; j < win; ++j) acc += g[j] * tmp[(y + j) * ow + x];
            out[y * ow + x] = acc;
        }
    }
}

}  // namespace par

// ---------------------------------------------------------------------------
// Dispatchers.
// ---------------------------------------------------------------------------

#define VIDFILL_DISPATCH(fn, ...)            \
    do {                                     \
        if (parallel_enabled())              \
            par::fn(__VA_ARGS__);            \
        else                                 \
            serial::fn(__VA_ARGS__);         \
    } while (0)

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    VIDFILL_DISPATCH(matmul, a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

void softmax_rows(double* s, std::size_t rows, std::size_t cols) {
    VIDFILL_DISPATCH(softmax_rows, s, rows, cols);
}

double block_sum(const double* x, std::size_t n) {
    return parallel_enabled() ? par::block_sum(x, n) : serial::block_sum(x, n);
}

void pool_video(const double* video, std::size_t T, std::size_t H, std::size_t W, std::size_t C,
                std::size_t st, std::size_t sh, std::size_t sw, double* cells, std::size_t lt,
                std::size_t lh, std::size_t lw) {
    VIDFILL_DISPATCH(pool_video, video, T, H, W, C, st, sh, sw, cells, lt, lh, lw);
}

void upsample_video(const double* cells, std::size_t lt, std::size_t lh, std::size_t lw,
                    std::size_t C, std::size_t st, std::size_t sh, std::size_t sw, double* video,
                    std::size_t T, std::size_t H, std::size_t W) {
    VIDFILL_DISPATCH(upsample_video, cells, lt, lh, lw, C, st, sh, sw, video, T, H, W);
}

void min_pool_time(const std::uint8_t* mask, std::size_t T, std::size_t H, std::size_t W,
                   std::size_t st, std::uint8_t* out, std::size_t lt) {
    VIDFILL_DISPATCH(min_pool_time, mask, T, H, W, st, out, lt);
}

void min_pool_space(const std::uint8_t* stack, std::size_t lt, std::size_t H, std::size_t W,
                    std::size_t sh, std::size_t sw, std::uint8_t* out, std::size_t lh,
                    std::size_t lw) {
    VIDFILL_DISPATCH(min_pool_space, stack, lt, H, W, sh, sw, out, lh, lw);
}

void max_filter_axis(const std::uint8_t* in, std::uint8_t* out, std::size_t n0, std::size_t n1,
                     std::size_t n2, int axis, std::size_t radius) {
    VIDFILL_DISPATCH(max_filter_axis, in, out, n0, n1, n2, axis, radius);
}

void sepconv_valid(const double* img, std::size_t h, std::size_t w, const double* g,
                   std::size_t win, double* tmp, double* out) {
    VIDFILL_DISPATCH(sepconv_valid, img, h, w, g, win, tmp, out);
}

#undef VIDFILL_DISPATCH

}  // namespace vidfill::kernels
