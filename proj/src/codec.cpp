#include "vidfill/codec.hpp"

#include <cmath>
#include <string>

#include "vidfill/kernels.hpp"
#include "vidfill/rng.hpp"

namespace vidfill::codec {

LatentShape latent_shape(std::size_t T, std::size_t H, std::size_t W, const CodecConfig& cfg) {
    require(T >= 1, "latent_shape: T must be >= 1");
    if ((T - 1) % cfg.s_t != 0)
        throw std::invalid_argument("latent_shape: temporal axis " + std::to_string(T) +
                                    " is not 1 mod " + std::to_string(cfg.s_t));
    if (H % cfg.s_h != 0)
        throw std::invalid_argument("latent_shape: height " + std::to_string(H) +
                                    " not divisible by " + std::to_string(cfg.s_h));
    if (W % cfg.s_w != 0)
        throw std::invalid_argument("latent_shape: width " + std::to_string(W) +
                                    " not divisible by " + std::to_string(cfg.s_w));
    return {1 + (T - 1) / cfg.s_t, H / cfg.s_h, W / cfg.s_w, cfg.c_lat};
}

std::pair<VideoTensor, PadInfo> pad_to_grid(const VideoTensor& video, const CodecConfig& cfg) {
    require(video.frames >= 1, "pad_to_grid: empty video");
    const PadInfo info{video.frames, video.height, video.width};

    std::size_t T = video.frames;
    if ((T - 1) % cfg.s_t != 0) T += cfg.s_t - (T - 1) % cfg.s_t;
    const std::size_t H = (video.height + cfg.s_h - 1) / cfg.s_h * cfg.s_h;
    const std::size_t W = (video.width + cfg.s_w - 1) / cfg.s_w * cfg.s_w;

    if (T == video.frames && H == video.height && W == video.width) return {video, info};

    VideoTensor out(T, H, W, video.channels);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t ts = std::min(t, video.frames - 1);
        for (std::size_t y = 0; y < H; ++y) {
            const std::size_t ys = std::min(y, video.height - 1);
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t xs = std::min(x, video.width - 1);
                for (std::size_t c = 0; c < video.channels; ++c)
                    out.at(t, y, x, c) = video.at(ts, ys, xs, c);
            }
        }
    }
    return {std::move(out), info};
}

VideoTensor crop_to(const VideoTensor& video, const PadInfo& info) {
    require(info.frames <= video.frames && info.height <= video.height &&
                info.width <= video.width,
            "crop_to: target extents exceed video");
    if (info.frames == video.frames && info.height == video.height && info.width == video.width)
        return video;
    VideoTensor out(info.frames, info.height, info.width, video.channels);
    for (std::size_t t = 0; t < info.frames; ++t)
        for (std::size_t y = 0; y < info.height; ++y)
            for (std::size_t x = 0; x < info.width; ++x)
                for (std::size_t c = 0; c < video.channels; ++c)
                    out.at(t, y, x, c) = video.at(t, y, x, c);
    return out;
}

// Modified Gram-Schmidt on a seeded Gaussian square matrix; returns the
// requested (c_lat x C) slice.
std::vector<double> projection_matrix(const CodecConfig& cfg, std::size_t channels) {
    const std::size_t n = std::max(cfg.c_lat, channels);
    Rng rng(derive_seed(cfg.projection_seed, "codec-projection"));
    std::vector<double> m(n * n);
    for (double& x : m) x = rng.normal();

    // Orthonormalize columns.
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t prev = 0; prev < j; ++prev) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += m[i * n + j] * m[i * n + prev];
            for (std::size_t i = 0; i < n; ++i) m[i * n + j] -= dot * m[i * n + prev];
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += m[i * n + j] * m[i * n + j];
        norm = std::sqrt(norm);
        if (norm < 1e-10) {
            for (std::size_t i = 0; i < n; ++i) m[i * n + j] = i == j ? 1.0 : 0.0;
            norm = 1.0;
        }
        for (std::size_t i = 0; i < n; ++i) m[i * n + j] /= norm;
    }

    std::vector<double> p(cfg.c_lat * channels);
    for (std::size_t r = 0; r < cfg.c_lat; ++r)
        for (std::size_t c = 0; c < channels; ++c) p[r * channels + c] = m[r * n + c];
    return p;
}

LatentGrid encode(const VideoTensor& video, const CodecConfig& cfg) {
    const LatentShape ls = latent_shape(video.frames, video.height, video.width, cfg);
    for (double x : video.data)
        if (!std::isfinite(x)) throw std::runtime_error("encode: non-finite video value");

    const std::size_t C = video.channels;
    const std::size_t ncells = ls.t * ls.h * ls.w;
    std::vector<double> pooled(ncells * C);
    kernels::pool_video(video.data.data(), video.frames, video.height, video.width, C, cfg.s_t,
                        cfg.s_h, cfg.s_w, pooled.data(), ls.t, ls.h, ls.w);

    const std::vector<double> p = projection_matrix(cfg, C);
    LatentGrid out(ls.t, ls.h, ls.w, cfg.c_lat);
    // out[cell,:] = pooled[cell,:] * P^T   (P is c_lat x C)
    kernels::matmul(pooled.data(), p.data(), out.data.data(), ncells, C, cfg.c_lat,
                    /*trans_a=*/false, /*trans_b=*/true);
    return out;
}

VideoTensor decode(const LatentGrid& latent, const CodecConfig& cfg, std::size_t channels) {
    require(latent.t >= 1 && latent.h >= 1 && latent.w >= 1, "decode: empty latent");
    require(latent.c == cfg.c_lat, "decode: latent channels do not match config");

    const std::size_t ncells = latent.t * latent.h * latent.w;
    const std::vector<double> p = projection_matrix(cfg, channels);
    std::vector<double> cells(ncells * channels);
    // cells[cell,:] = latent[cell,:] * P   (inverse projection = P^T on columns)
    kernels::matmul(latent.data.data(), p.data(), cells.data(), ncells, cfg.c_lat, channels,
                    /*trans_a=*/false, /*trans_b=*/false);

    const std::size_t T = (latent.t - 1) * cfg.s_t + 1;
    VideoTensor out(T, latent.h * cfg.s_h, latent.w * cfg.s_w, channels);
    kernels::upsample_video(cells.data(), latent.t, latent.h, latent.w, channels, cfg.s_t,
                            cfg.s_h, cfg.s_w, out.data.data(), T, out.height, out.width);
    return out;
}

double gradient_l1_metric(const VideoTensor& a, const VideoTensor& b) {
    require(a.same_extents(b), "gradient_l1_metric: extent mismatch");
    if (a.height < 2 || a.width < 2) return 0.0;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < a.frames; ++t)
        for (std::size_t y = 0; y + 1 < a.height; ++y)
            for (std::size_t x = 0; x + 1 < a.width; ++x)
                for (std::size_t c = 0; c < a.channels; ++c) {
                    const double ga = std::abs(a.at(t, y + 1, x, c) - a.at(t, y, x, c)) +
                                      std::abs(a.at(t, y, x + 1, c) - a.at(t, y, x, c));
                    const double gb = std::abs(b.at(t, y + 1, x, c) - b.at(t, y, x, c)) +
                                      std::abs(b.at(t, y, x + 1, c) - b.at(t, y, x, c));
                    acc += std::abs(ga - gb);
                    ++n;
                }
    return acc / static_cast<double>(n);
}

double decoder_loss(const VideoTensor& recon, const VideoTensor& target, double adv_score,
                    const PerceptualMetric& perceptual) {
    require(recon.same_extents(target), "decoder_loss: extent mismatch");
    if (!std::isfinite(adv_score)) throw std::runtime_error("decoder_loss: non-finite adv_score");

    const std::size_t n = recon.size();
    const double mae = kernels::block_sum_map(n, [&](std::size_t i) {
                           return std::abs(recon.data[i] - target.data[i]);
                       }) /
                       static_cast<double>(n);
    const double perc = perceptual(recon, target);
    if (!std::isfinite(mae) || !std::isfinite(perc) || perc < 0.0)
        throw std::runtime_error("decoder_loss: non-finite or negative loss term");
    return mae + perc + 0.05 * adv_score;
}

}  // namespace vidfill::codec
