#pragma once

#include <optional>

#include "vidfill/tensor.hpp"

namespace vidfill::metrics {

inline constexpr double kPsnrCap = 99.0;  // sentinel for identical inputs
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

double mse(const VideoTensor& a, const VideoTensor& b);
double mae(const VideoTensor& a, const VideoTensor& b);

// 10*log10(1/MSE) for unit dynamic range, capped at kPsnrCap.
double psnr(const VideoTensor& a, const VideoTensor& b);

// Structural similarity, 11x11 Gaussian window sigma=1.5, k1=0.01, k2=0.03,
// dynamic range 1. Per-frame per-channel maps over the valid (fully covered)
// region; the video score is the mean over frames.
double ssim(const VideoTensor& a, const VideoTensor& b);

struct RegionMetrics {
    double mse = 0.0;
    double mae = 0.0;
    double psnr = 0.0;
    std::optional<double> ssim;  // absent when no full window fits the region
    std::size_t pixels = 0;
};

struct RegionReport {
    std::optional<RegionMetrics> hole;
    std::optional<RegionMetrics> known;
};

// Metrics over hole pixels (mask 0) and known pixels (mask 1) separately; an
// empty region yields an absent entry.
RegionReport region_metrics(const VideoTensor& out, const VideoTensor& gt,
                            const MaskVideo& mask);

// Mean absolute difference between consecutive frames; lower is smoother.
double temporal_consistency(const VideoTensor& v);

// Same, restricted to pixels that are holes (mask 0) in the later frame.
double temporal_consistency(const VideoTensor& v, const MaskVideo& mask);

}  // namespace vidfill::metrics
