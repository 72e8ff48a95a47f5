#pragma once

#include "vidfill/codec.hpp"
#include "vidfill/tensor.hpp"

namespace vidfill::maskops {

// out = video * mask, mask broadcast across channels (hole pixels zeroed).
VideoTensor apply_mask(const VideoTensor& video, const MaskVideo& mask);

// Causal temporal reduction. Output frame 0 = mask frame 0; output frame
// k >= 1 = elementwise minimum over mask frames [(k-1)*s_t+1 .. k*s_t], so a
// pixel stays known only if it is known throughout its group.
MaskVideo downsample_temporal(const MaskVideo& mask, std::size_t s_t);

// Each s_h x s_w cell is the minimum over its pixels.
LatentMask downsample_spatial(const MaskVideo& stack, std::size_t s_h, std::size_t s_w);

// downsample_spatial . downsample_temporal
LatentMask to_latent_mask(const MaskVideo& mask, const codec::CodecConfig& cfg);

// Box dilation of the inverted keep-map with a (2r+1)^3 structuring element
// over (t, h, w). radius 0 is pure inversion.
HoleMap dilate_holes(const LatentMask& mask, std::size_t radius);

// Pads a mask exactly like codec::pad_to_grid pads its paired video.
MaskVideo pad_to_grid(const MaskVideo& mask, const codec::CodecConfig& cfg);

}  // namespace vidfill::maskops
