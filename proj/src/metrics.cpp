#include "vidfill/metrics.hpp"

#include <cmath>
#include <vector>

#include "vidfill/kernels.hpp"

namespace vidfill::metrics {

namespace {

constexpr double kC1 = kSsimK1 * kSsimK1;  // dynamic range 1
constexpr double kC2 = kSsimK2 * kSsimK2;

std::vector<double> gaussian_window() {
    std::vector<double> g(kSsimWindow);
    const double half = (kSsimWindow - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - half;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

double ssim_value(double ma, double mb, double saa, double sbb, double sab) {
    const double va = saa - ma * ma;
    const double vb = sbb - mb * mb;
    const double cov = sab - ma * mb;
    return (2.0 * ma * mb + kC1) * (2.0 * cov + kC2) /
           ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

// SSIM map for one (H, W) plane pair. For frames smaller than the window, a
// single truncated-Gaussian window over the whole plane produces a 1x1 map.
void ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h,
                std::size_t w, std::vector<double>& map, std::size_t& oh, std::size_t& ow) {
    static const std::vector<double> g = gaussian_window();
    if (h >= kSsimWindow && w >= kSsimWindow) {
        oh = h - kSsimWindow + 1;
        ow = w - kSsimWindow + 1;
        const std::size_t n = h * w;
        std::vector<double> aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        std::vector<double> tmp(h * ow);
        std::vector<double> ma(oh * ow), mb(oh * ow), maa(oh * ow), mbb(oh * ow), mab(oh * ow);
        kernels::sepconv_valid(a.data(), h, w, g.data(), kSsimWindow, tmp.data(), ma.data());
        kernels::sepconv_valid(b.data(), h, w, g.data(), kSsimWindow, tmp.data(), mb.data());
        kernels::sepconv_valid(aa.data(), h, w, g.data(), kSsimWindow, tmp.data(), maa.data());
        kernels::sepconv_valid(bb.data(), h, w, g.data(), kSsimWindow, tmp.data(), mbb.data());
        kernels::sepconv_valid(ab.data(), h, w, g.data(), kSsimWindow, tmp.data(), mab.data());
        map.assign(oh * ow, 0.0);
        for (std::size_t i = 0; i < oh * ow; ++i)
            map[i] = ssim_value(ma[i], mb[i], maa[i], mbb[i], mab[i]);
    } else {
        oh = ow = 1;
        double wsum = 0.0, ma = 0.0, mb = 0.0, maa = 0.0, mbb = 0.0, mab = 0.0;
        const double hy = (static_cast<double>(h) - 1) / 2.0;
        const double hx = (static_cast<double>(w) - 1) / 2.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - hy;
                const double dx = static_cast<double>(x) - hx;
                const double wgt =
                    std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
                const double av = a[y * w + x], bv = b[y * w + x];
                wsum += wgt;
                ma += wgt * av;
                mb += wgt * bv;
                maa += wgt * av * av;
                mbb += wgt * bv * bv;
                mab += wgt * av * bv;
            }
        map.assign(1, ssim_value(ma / wsum, mb / wsum, maa / wsum, mbb / wsum, mab / wsum));
    }
}

void extract_plane(const VideoTensor& v, std::size_t t, std::size_t c, std::vector<double>& out) {
    out.resize(v.height * v.width);
    for (std::size_t y = 0; y < v.height; ++y)
        for (std::size_t x = 0; x < v.width; ++x) out[y * v.width + x] = v.at(t, y, x, c);
}

}  // namespace

double mse(const VideoTensor& a, const VideoTensor& b) {
    require(a.same_extents(b), "mse: extent mismatch");
    const std::size_t n = a.size();
    return kernels::block_sum_map(n, [&](std::size_t i) {
               const double d = a.data[i] - b.data[i];
               return d * d;
           }) /
           static_cast<double>(n);
}

double mae(const VideoTensor& a, const VideoTensor& b) {
    require(a.same_extents(b), "mae: extent mismatch");
    const std::size_t n = a.size();
    return kernels::block_sum_map(n, [&](std::size_t i) {
               return std::abs(a.data[i] - b.data[i]);
           }) /
           static_cast<double>(n);
}

double psnr(const VideoTensor& a, const VideoTensor& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const VideoTensor& a, const VideoTensor& b) {
    require(a.same_extents(b), "ssim: extent mismatch");
    std::vector<double> pa, pb, map;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < a.frames; ++t)
        for (std::size_t c = 0; c < a.channels; ++c) {
            extract_plane(a, t, c, pa);
            extract_plane(b, t, c, pb);
            std::size_t oh = 0, ow = 0;
            ssim_plane(pa, pb, a.height, a.width, map, oh, ow);
            double s = 0.0;
            for (double v : map) s += v;
            total += s / static_cast<double>(map.size());
            ++count;
        }
    return total / static_cast<double>(count);
}

RegionReport region_metrics(const VideoTensor& out, const VideoTensor& gt,
                            const MaskVideo& mask) {
    require(out.same_extents(gt), "region_metrics: extent mismatch");
    require(out.frames == mask.frames && out.height == mask.height && out.width == mask.width,
            "region_metrics: mask extent mismatch");

    double se[2] = {0, 0}, ae[2] = {0, 0};
    std::size_t px[2] = {0, 0};  // [0]=hole, [1]=known
    for (std::size_t t = 0; t < out.frames; ++t)
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x) {
                const int r = mask.at(t, y, x) ? 1 : 0;
                ++px[r];
                for (std::size_t c = 0; c < out.channels; ++c) {
                    const double d = out.at(t, y, x, c) - gt.at(t, y, x, c);
                    se[r] += d * d;
                    ae[r] += std::abs(d);
                }
            }

    // region-restricted SSIM: average map values whose window centre lies in
    // the region
    double ssim_sum[2] = {0, 0};
    std::size_t ssim_n[2] = {0, 0};
    std::vector<double> pa, pb, map;
    const std::size_t off = kSsimWindow / 2;
    if (out.height >= kSsimWindow && out.width >= kSsimWindow) {
        for (std::size_t t = 0; t < out.frames; ++t)
            for (std::size_t c = 0; c < out.channels; ++c) {
                extract_plane(out, t, c, pa);
                extract_plane(gt, t, c, pb);
                std::size_t oh = 0, ow = 0;
                ssim_plane(pa, pb, out.height, out.width, map, oh, ow);
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x) {
                        const int r = mask.at(t, y + off, x + off) ? 1 : 0;
                        ssim_sum[r] += map[y * ow + x];
                        ++ssim_n[r];
                    }
            }
    }

    RegionReport report;
    for (int r = 0; r < 2; ++r) {
        if (px[r] == 0) continue;
        RegionMetrics m;
        m.pixels = px[r];
        const double n = static_cast<double>(px[r] * out.channels);
        m.mse = se[r] / n;
        m.mae = ae[r] / n;
        m.psnr = m.mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / m.mse));
        if (ssim_n[r] > 0) m.ssim = ssim_sum[r] / static_cast<double>(ssim_n[r]);
        (r == 0 ? report.hole : report.known) = m;
    }
    return report;
}

double temporal_consistency(const VideoTensor& v) {
    require(v.frames >= 2, "temporal_consistency: need at least two frames");
    const std::size_t per_frame = v.height * v.width * v.channels;
    const std::size_t n = (v.frames - 1) * per_frame;
    return kernels::block_sum_map(n, [&](std::size_t i) {
               return std::abs(v.data[per_frame + i] - v.data[i]);
           }) /
           static_cast<double>(n);
}

double temporal_consistency(const VideoTensor& v, const MaskVideo& mask) {
    require(v.frames >= 2, "temporal_consistency: need at least two frames");
    require(v.frames == mask.frames && v.height == mask.height && v.width == mask.width,
            "temporal_consistency: mask extent mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 1; t < v.frames; ++t)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x) {
                if (mask.at(t, y, x) != 0) continue;
                for (std::size_t c = 0; c < v.channels; ++c)
                    acc += std::abs(v.at(t, y, x, c) - v.at(t - 1, y, x, c));
                n += v.channels;
            }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace vidfill::metrics
