// Compares the serial reference kernels against the OpenMP ones: checks
// bit-equality, then times both.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "vidfill/kernels.hpp"
#include "vidfill/rng.hpp"

namespace k = vidfill::kernels;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_ms(F&& fn, int reps) {
    const double t0 = now_ms();
    for (int i = 0; i < reps; ++i) fn();
    return (now_ms() - t0) / reps;
}

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-18s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms, equal ? "match" : "MISMATCH");
}

}  // namespace

int main() {
    vidfill::Rng rng(42);

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel backend runs serially\n\n");
#endif

    {
        const std::size_t m = 256, kk = 256, n = 256;
        std::vector<double> a(m * kk), b(kk * n), c1(m * n), c2(m * n);
        for (double& x : a) x = rng.normal();
        for (double& x : b) x = rng.normal();
        k::serial::matmul(a.data(), b.data(), c1.data(), m, kk, n, false, false, false);
        k::par::matmul(a.data(), b.data(), c2.data(), m, kk, n, false, false, false);
        const bool eq = std::memcmp(c1.data(), c2.data(), c1.size() * 8) == 0;
        const double ts = time_ms(
            [&] { k::serial::matmul(a.data(), b.data(), c1.data(), m, kk, n, false, false, false); },
            3);
        const double tp = time_ms(
            [&] { k::par::matmul(a.data(), b.data(), c2.data(), m, kk, n, false, false, false); },
            3);
        report("matmul 256^3", ts, tp, eq);
    }

    {
        const std::size_t rows = 2048, cols = 2048;
        std::vector<double> base(rows * cols);
        for (double& x : base) x = rng.normal();
        std::vector<double> s1 = base, s2 = base;
        k::serial::softmax_rows(s1.data(), rows, cols);
        k::par::softmax_rows(s2.data(), rows, cols);
        const bool eq = std::memcmp(s1.data(), s2.data(), s1.size() * 8) == 0;
        const double ts = time_ms([&] {
            std::vector<double> s = base;
            k::serial::softmax_rows(s.data(), rows, cols);
        }, 3);
        const double tp = time_ms([&] {
            std::vector<double> s = base;
            k::par::softmax_rows(s.data(), rows, cols);
        }, 3);
        report("softmax 2048x2048", ts, tp, eq);
    }

    {
        const std::size_t T = 81, H = 128, W = 128, C = 3, st = 8, sh = 4, sw = 4;
        const std::size_t lt = 1 + (T - 1) / st, lh = H / sh, lw = W / sw;
        std::vector<double> video(T * H * W * C);
        for (double& x : video) x = rng.uniform();
        std::vector<double> p1(lt * lh * lw * C), p2(p1.size());
        k::serial::pool_video(video.data(), T, H, W, C, st, sh, sw, p1.data(), lt, lh, lw);
        k::par::pool_video(video.data(), T, H, W, C, st, sh, sw, p2.data(), lt, lh, lw);
        const bool eq = std::memcmp(p1.data(), p2.data(), p1.size() * 8) == 0;
        const double ts = time_ms([&] {
            k::serial::pool_video(video.data(), T, H, W, C, st, sh, sw, p1.data(), lt, lh, lw);
        }, 5);
        const double tp = time_ms([&] {
            k::par::pool_video(video.data(), T, H, W, C, st, sh, sw, p2.data(), lt, lh, lw);
        }, 5);
        report("pool 81x128x128", ts, tp, eq);
    }

    {
        const std::size_t t = 16, h = 64, w = 64, r = 2;
        std::vector<std::uint8_t> in(t * h * w), o1(in.size()), o2(in.size());
        for (auto& x : in) x = rng.uniform() < 0.1 ? 1 : 0;
        k::serial::max_filter_axis(in.data(), o1.data(), t, h, w, 1, r);
        k::par::max_filter_axis(in.data(), o2.data(), t, h, w, 1, r);
        const bool eq = o1 == o2;
        const double ts = time_ms(
            [&] { k::serial::max_filter_axis(in.data(), o1.data(), t, h, w, 1, r); }, 10);
        const double tp =
            time_ms([&] { k::par::max_filter_axis(in.data(), o2.data(), t, h, w, 1, r); }, 10);
        report("dilate 16x64x64", ts, tp, eq);
    }

    {
        const std::size_t h = 1080, w = 1920, win = 11;
        std::vector<double> img(h * w), g(win, 1.0 / win);
        for (double& x : img) x = rng.uniform();
        const std::size_t ow = w - win + 1, oh = h - win + 1;
        std::vector<double> tmp(h * ow), r1(oh * ow), r2(oh * ow);
        k::serial::sepconv_valid(img.data(), h, w, g.data(), win, tmp.data(), r1.data());
        k::par::sepconv_valid(img.data(), h, w, g.data(), win, tmp.data(), r2.data());
        const bool eq = std::memcmp(r1.data(), r2.data(), r1.size() * 8) == 0;
        const double ts = time_ms([&] {
            k::serial::sepconv_valid(img.data(), h, w, g.data(), win, tmp.data(), r1.data());
        }, 3);
        const double tp = time_ms([&] {
            k::par::sepconv_valid(img.data(), h, w, g.data(), win, tmp.data(), r2.data());
        }, 3);
        report("window sums 1080p", ts, tp, eq);
    }

    return 0;
}
