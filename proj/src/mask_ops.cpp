#include "vidfill/mask_ops.hpp"

#include <string>

#include "vidfill/kernels.hpp"

namespace vidfill::maskops {

VideoTensor apply_mask(const VideoTensor& video, const MaskVideo& mask) {
    require(video.frames == mask.frames && video.height == mask.height &&
                video.width == mask.width,
            "apply_mask: video/mask extent mismatch");
    VideoTensor out = video;
    const std::size_t C = video.channels;
    kernels::parallel_for(mask.size(), [&](std::size_t i) {
        if (mask.data[i] == 0)
            for (std::size_t c = 0; c < C; ++c) out.data[i * C + c] = 0.0;
    });
    return out;
}

MaskVideo downsample_temporal(const MaskVideo& mask, std::size_t s_t) {
    require(s_t >= 1, "downsample_temporal: s_t must be >= 1");
    if ((mask.frames - 1) % s_t != 0)
        throw std::invalid_argument("downsample_temporal: " + std::to_string(mask.frames) +
                                    " frames is not 1 mod " + std::to_string(s_t));
    const std::size_t lt = 1 + (mask.frames - 1) / s_t;
    MaskVideo out(lt, mask.height, mask.width);
    kernels::min_pool_time(mask.data.data(), mask.frames, mask.height, mask.width, s_t,
                           out.data.data(), lt);
    return out;
}

LatentMask downsample_spatial(const MaskVideo& stack, std::size_t s_h, std::size_t s_w) {
    if (stack.height % s_h != 0)
        throw std::invalid_argument("downsample_spatial: height " + std::to_string(stack.height) +
                                    " not divisible by " + std::to_string(s_h));
    if (stack.width % s_w != 0)
        throw std::invalid_argument("downsample_spatial: width " + std::to_string(stack.width) +
                                    " not divisible by " + std::to_string(s_w));
    const std::size_t lh = stack.height / s_h;
    const std::size_t lw = stack.width / s_w;
    LatentMask out(stack.frames, lh, lw);
    kernels::min_pool_space(stack.data.data(), stack.frames, stack.height, stack.width, s_h, s_w,
                            out.data.data(), lh, lw);
    return out;
}

LatentMask to_latent_mask(const MaskVideo& mask, const codec::CodecConfig& cfg) {
    return downsample_spatial(downsample_temporal(mask, cfg.s_t), cfg.s_h, cfg.s_w);
}

HoleMap dilate_holes(const LatentMask& mask, std::size_t radius) {
    HoleMap hole(mask.t, mask.h, mask.w);
    for (std::size_t i = 0; i < mask.data.size(); ++i) hole.data[i] = mask.data[i] ? 0 : 1;
    if (radius == 0) return hole;

    // Box dilation is separable: a max filter along each axis in turn.
    std::vector<std::uint8_t> buf(hole.data.size());
    kernels::max_filter_axis(hole.data.data(), buf.data(), mask.t, mask.h, mask.w, 0, radius);
    kernels::max_filter_axis(buf.data(), hole.data.data(), mask.t, mask.h, mask.w, 1, radius);
    kernels::max_filter_axis(hole.data.data(), buf.data(), mask.t, mask.h, mask.w, 2, radius);
    hole.data = std::move(buf);
    return hole;
}

MaskVideo pad_to_grid(const MaskVideo& mask, const codec::CodecConfig& cfg) {
    require(mask.frames >= 1, "pad_to_grid: empty mask");
    std::size_t T = mask.frames;
    if ((T - 1) % cfg.s_t != 0) T += cfg.s_t - (T - 1) % cfg.s_t;
    const std::size_t H = (mask.height + cfg.s_h - 1) / cfg.s_h * cfg.s_h;
    const std::size_t W = (mask.width + cfg.s_w - 1) / cfg.s_w * cfg.s_w;
    if (T == mask.frames && H == mask.height && W == mask.width) return mask;

    MaskVideo out(T, H, W);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t ts = std::min(t, mask.frames - 1);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out.at(t, y, x) =
                    mask.at(ts, std::min(y, mask.height - 1), std::min(x, mask.width - 1));
    }
    return out;
}

}  // namespace vidfill::maskops
