#include "vidfill/cps.hpp"

#include <cmath>
#include <string>

#include "vidfill/flow.hpp"

namespace vidfill::cps {

namespace {

LatentGrid gather_latent(const LatentGrid& src, const std::vector<std::size_t>& frames) {
    LatentGrid out(frames.size(), src.h, src.w, src.c);
    const std::size_t row = src.h * src.w * src.c;
    for (std::size_t i = 0; i < frames.size(); ++i)
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(frames[i] * row), row,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * row));
    return out;
}

LatentMask gather_mask(const LatentMask& src, const std::vector<std::size_t>& frames) {
    LatentMask out(frames.size(), src.h, src.w);
    const std::size_t row = src.h * src.w;
    for (std::size_t i = 0; i < frames.size(); ++i)
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(frames[i] * row), row,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * row));
    return out;
}

}  // namespace

CircularSchedule build_circular(std::size_t l) {
    if (l < 2) throw std::invalid_argument("build_circular: need l >= 2 (short sequences are single-window)");
    CircularSchedule s;
    s.l = l;
    s.L = 2 * l - 2;
    s.indices.reserve(s.L);
    for (std::size_t i = 0; i < l; ++i) s.indices.push_back(i);
    for (std::size_t i = l - 2; i >= 1; --i) s.indices.push_back(i);
    return s;
}

WindowPlan plan_windows(const CircularSchedule& schedule) {
    const std::size_t L = schedule.L;
    const std::size_t f = schedule.f;
    require(f >= 1 && f <= L, "plan_windows: window length out of range");
    if (L % f != 0)
        throw std::runtime_error("plan_windows: window " + std::to_string(f) +
                                 " does not divide circular length " + std::to_string(L) +
                                 "; pad the latent sequence so 2l-2 is a multiple of f");

    WindowPlan plan;
    plan.alpha_sigma = schedule.alpha_sigma % L;
    const std::size_t n_windows = L / f;
    plan.windows.resize(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) {
        Window& win = plan.windows[w];
        win.positions.reserve(f);
        win.frames.reserve(f);
        for (std::size_t i = 0; i < f; ++i) {
            const std::size_t pos = (plan.alpha_sigma + w * f + i) % L;
            win.positions.push_back(pos);
            win.frames.push_back(schedule.indices[pos]);
        }
    }
    return plan;
}

LatentGrid single_pass_denoise(const WindowVelocityModel& model, const LatentGrid& cond_video,
                               const LatentMask& cond_mask, std::size_t steps, Rng& rng) {
    require(cond_video.t == cond_mask.t && cond_video.h == cond_mask.h &&
                cond_video.w == cond_mask.w,
            "single_pass_denoise: conditioning extent mismatch");
    flow::VelocityFn v = [&](const LatentGrid& z, double t) {
        return model(z, cond_video, cond_mask, t);
    };
    return flow::euler_sample(v, cond_video.t, cond_video.h, cond_video.w, cond_video.c, steps,
                              rng);
}

LatentGrid cps_denoise(const WindowVelocityModel& model, const LatentGrid& cond_video,
                       const LatentMask& cond_mask, std::size_t steps, std::size_t f,
                       std::size_t alpha, Rng& rng, CpsTrace* trace) {
    require(cond_video.t == cond_mask.t && cond_video.h == cond_mask.h &&
                cond_video.w == cond_mask.w,
            "cps_denoise: conditioning extent mismatch");
    require(steps >= 1, "cps_denoise: steps must be >= 1");
    const std::size_t l = cond_video.t;

    if (l <= f) {
        if (trace) trace->used_cps = false;
        return single_pass_denoise(model, cond_video, cond_mask, steps, rng);
    }

    CircularSchedule schedule = build_circular(l);
    schedule.f = f;
    schedule.alpha = alpha;
    if (trace) trace->used_cps = true;

    // independent initial noise per circular position (mirror copies included)
    LatentGrid z = flow::gaussian_latent(schedule.L, cond_video.h, cond_video.w, cond_video.c,
                                         rng);
    const std::size_t row = cond_video.h * cond_video.w * cond_video.c;

    for (std::size_t j = steps; j >= 1; --j) {
        const double t_hi = static_cast<double>(j) / static_cast<double>(steps);
        const double t_lo = static_cast<double>(j - 1) / static_cast<double>(steps);
        const double dt = t_hi - t_lo;

        const WindowPlan plan = plan_windows(schedule);
        if (trace) {
            trace->plans.push_back(plan);
            trace->alpha_sigma_log.push_back(schedule.alpha_sigma);
        }
        for (const Window& win : plan.windows) {
            LatentGrid zw = gather_latent(z, win.positions);
            const LatentGrid cmv = gather_latent(cond_video, win.frames);
            const LatentMask cm = gather_mask(cond_mask, win.frames);
            const LatentGrid v = model(zw, cmv, cm, t_hi);
            require(v.same_extents(zw), "cps_denoise: velocity extent mismatch");
            for (std::size_t i = 0; i < zw.data.size(); ++i) {
                zw.data[i] -= dt * v.data[i];
                if (!std::isfinite(zw.data[i]))
                    throw std::runtime_error("cps_denoise: non-finite latent");
            }
            for (std::size_t i = 0; i < win.positions.size(); ++i)
                std::copy_n(zw.data.begin() + static_cast<std::ptrdiff_t>(i * row), row,
                            z.data.begin() +
                                static_cast<std::ptrdiff_t>(win.positions[i] * row));
        }
        schedule.alpha_sigma += alpha;  // line 15: shift after every timestep
    }

    LatentGrid out(l, cond_video.h, cond_video.w, cond_video.c);
    std::copy_n(z.data.begin(), out.data.size(), out.data.begin());
    return out;
}

}  // namespace vidfill::cps
