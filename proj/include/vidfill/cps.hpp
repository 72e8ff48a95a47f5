#pragma once

#include <functional>
#include <vector>

#include "vidfill/rng.hpp"
#include "vidfill/tensor.hpp"

namespace vidfill::cps {

// Reflected circular index sequence: [0, 1, ..., l-1, l-2, ..., 1] of length
// L = 2l - 2. Interior frames appear twice, frames 0 and l-1 once.
struct CircularSchedule {
    std::size_t l = 0;
    std::size_t L = 0;
    std::vector<std::size_t> indices;  // circular position -> original frame
    std::size_t f = 0;                 // window length
    std::size_t alpha = 0;             // per-timestep shift offset
    std::size_t alpha_sigma = 0;       // accumulated shift offset
};

struct Window {
    std::vector<std::size_t> positions;  // circular positions, contiguous arc
    std::vector<std::size_t> frames;     // original frame index per position
};

struct WindowPlan {
    std::size_t alpha_sigma = 0;  // offset the plan was built at (mod L)
    std::vector<Window> windows;
};

CircularSchedule build_circular(std::size_t l);

// Wrap-padded tiling: windows are contiguous arcs of length f starting at
// alpha_sigma (mod L); together they cover every circular position exactly
// once. Requires f | L.
WindowPlan plan_windows(const CircularSchedule& schedule);

// Velocity over one gathered window: (z, cond_video, cond_mask, t) -> v.
using WindowVelocityModel = std::function<LatentGrid(
    const LatentGrid& z, const LatentGrid& cond_video, const LatentMask& cond_mask, double t)>;

struct CpsTrace {
    bool used_cps = false;
    std::vector<WindowPlan> plans;             // one per timestep
    std::vector<std::size_t> alpha_sigma_log;  // accumulated offset per timestep
};

// Full circular position-shift denoising loop: per timestep plan windows at
// the current accumulated offset, advance each window one Euler step, then
// shift. Returns positions [0, l) of z_0. Delegates to single_pass_denoise
// when l <= f.
LatentGrid cps_denoise(const WindowVelocityModel& model, const LatentGrid& cond_video,
                       const LatentMask& cond_mask, std::size_t steps, std::size_t f,
                       std::size_t alpha, Rng& rng, CpsTrace* trace = nullptr);

// Plain Euler sampling over the whole latent (short-sequence fast path).
LatentGrid single_pass_denoise(const WindowVelocityModel& model, const LatentGrid& cond_video,
                               const LatentMask& cond_mask, std::size_t steps, Rng& rng);

}  // namespace vidfill::cps
