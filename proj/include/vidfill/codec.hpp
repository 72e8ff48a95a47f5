#pragma once

#include <functional>
#include <tuple>
#include <vector>

#include "vidfill/tensor.hpp"

namespace vidfill::codec {

struct CodecConfig {
    std::size_t s_t = 8;
    std::size_t s_h = 32;
    std::size_t s_w = 32;
    std::size_t c_lat = 8;
    std::uint64_t projection_seed = 17;
};

struct LatentShape {
    std::size_t t = 0, h = 0, w = 0, c = 0;
};

// Original extents recorded by pad_to_grid so decode output can be cropped.
struct PadInfo {
    std::size_t frames = 0, height = 0, width = 0;
};

// t = 1 + (T-1)/s_t, h = H/s_h, w = W/s_w. Throws naming the offending axis
// when an extent is not on the grid.
LatentShape latent_shape(std::size_t T, std::size_t H, std::size_t W, const CodecConfig& cfg);

// Repeats the last frame until T = 1 (mod s_t) and replicate-pads the spatial
// edges up to multiples of s_h/s_w.
std::pair<VideoTensor, PadInfo> pad_to_grid(const VideoTensor& video, const CodecConfig& cfg);

VideoTensor crop_to(const VideoTensor& video, const PadInfo& info);

// Seeded channel projection, row-major (c_lat x C). Orthonormal columns when
// c_lat >= C (decode . encode is exact on cell-constant videos), orthonormal
// rows otherwise.
std::vector<double> projection_matrix(const CodecConfig& cfg, std::size_t channels);

// Causal grouped mean-pool followed by the channel projection. Latent frame 0
// sees pixel frame 0 alone; latent frame k>=1 sees pixel frames
// [(k-1)*s_t+1 .. k*s_t].
LatentGrid encode(const VideoTensor& video, const CodecConfig& cfg);

// Transposed projection then nearest-neighbour upsampling onto the causal
// pixel grid.
VideoTensor decode(const LatentGrid& latent, const CodecConfig& cfg, std::size_t channels = 3);

using PerceptualMetric = std::function<double(const VideoTensor&, const VideoTensor&)>;

// Mean absolute difference of forward-difference gradient magnitudes; the
// default stand-in for a learned perceptual score.
double gradient_l1_metric(const VideoTensor& a, const VideoTensor& b);

// mean-absolute-error + perceptual(recon, target) + 0.05 * adv_score
double decoder_loss(const VideoTensor& recon, const VideoTensor& target, double adv_score,
                    const PerceptualMetric& perceptual = gradient_l1_metric);

}  // namespace vidfill::codec
