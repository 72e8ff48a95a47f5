#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vidfill/codec.hpp"
#include "vidfill/data_synth.hpp"
#include "vidfill/denoiser.hpp"
#include "vidfill/rng.hpp"
#include "vidfill/tensor.hpp"

namespace vidfill::flow {

struct FlowConfig {
    std::size_t steps = 40;  // denoising steps at inference
    std::size_t stage1_iters = 1200;
    std::size_t stage2_iters = 400;
    double lr = 1e-3;  // toy scale; the full-scale recipe used 3e-5
    std::size_t warmup_iters = 100;
    double weight_decay = 1e-4;
    std::size_t batch_size = 2;
    double prompt_dropout = 0.1;
    int frame_step_min = 1;
    int frame_step_max = 6;
    double cfg_scale = 3.0;
    std::size_t dilation_radius = 1;
    std::size_t clip_frames = 17;  // cap on source frames per training clip
    std::uint64_t seed = 0;
    std::string log_path;  // optional JSONL metrics log

    void validate() const;
};

// Straight-path interpolation z_t = (1-t)*x0 + t*noise (t=0 data, t=1 noise).
LatentGrid interpolate(const LatentGrid& x0, const LatentGrid& noise, double t);

// Constant velocity along the straight path: v = noise - x0.
LatentGrid velocity_target(const LatentGrid& x0, const LatentGrid& noise);

// Uniform integer in [lo, hi]; the training-clip temporal stride.
int sample_frame_step(Rng& rng, int lo = 1, int hi = 6);

// v_uncond + scale * (v_cond - v_uncond); scale 0 and 1 return the inputs
// exactly.
LatentGrid cfg_combine(const LatentGrid& v_uncond, const LatentGrid& v_cond, double scale);

using VelocityFn = std::function<LatentGrid(const LatentGrid& z, double t)>;

LatentGrid gaussian_latent(std::size_t t, std::size_t h, std::size_t w, std::size_t c, Rng& rng);

// Explicit Euler from t=1 down to t=0 on the time grid j/steps; the velocity
// is evaluated at the interval's upper endpoint.
LatentGrid euler_integrate(const VelocityFn& velocity, LatentGrid z, std::size_t steps);

// Draws unit Gaussian noise and integrates.
LatentGrid euler_sample(const VelocityFn& velocity, std::size_t t, std::size_t h, std::size_t w,
                        std::size_t c, std::size_t steps, Rng& rng);

// Decoupled-weight-decay Adam with linear warmup.
class AdamW {
public:
    AdamW() = default;
    AdamW(const NamedTensors& params, double lr, double weight_decay, std::size_t warmup_iters);
    void update(NamedTensors& params, const NamedTensors& grads);
    std::size_t step_count() const { return step_; }

private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0.0;
    std::size_t warmup_ = 0, step_ = 0;
    NamedTensors m_, v_;
};

struct FlowState {
    dit::DenoiserConfig model_cfg;
    codec::CodecConfig codec_cfg;
    NamedTensors params;
    AdamW opt;
    std::size_t iteration = 0;
    int stage = 1;
};

struct TrainLogEntry {
    std::size_t iteration = 0;
    int stage = 1;
    double loss = 0.0;
};

// Deterministic clip -> latent sample construction (stride subsample, pad,
// encode, mask reduction, prompt dropout, noise draw).
dit::TrainSample make_train_sample(const synth::Example& ex, const dit::DenoiserConfig& model,
                                   const codec::CodecConfig& codec, const FlowConfig& cfg,
                                   Rng& rng, bool allow_prompt_dropout);

FlowState init_training(const dit::DenoiserConfig& model, const codec::CodecConfig& codec,
                        const FlowConfig& cfg);

// One batch: sample t, form z_t, stage loss, optimizer update. Returns loss.
double train_step(FlowState& state, const synth::Dataset& data, const FlowConfig& cfg, Rng& rng);

// Full two-stage run (stage1_iters then stage2_iters).
std::vector<TrainLogEntry> run_training(FlowState& state, const synth::Dataset& data,
                                        const FlowConfig& cfg);

// One distillation step: teacher conditional/unconditional outputs combined at
// `scale` form the target; the guidance-conditioned student takes a gradient
// step. Returns the distillation loss.
double distill_step(FlowState& student, const NamedTensors& teacher, const synth::Dataset& data,
                    const FlowConfig& cfg, Rng& rng, double scale);

std::vector<TrainLogEntry> run_distillation(FlowState& student, const NamedTensors& teacher,
                                            const synth::Dataset& data, const FlowConfig& cfg,
                                            std::size_t iters, double scale);

// Flat key=value training config file (documented in docs/formats.md).
struct TrainSetup {
    dit::DenoiserConfig model;
    codec::CodecConfig codec;
    FlowConfig flow;
};

TrainSetup parse_train_config(const std::string& path);

}  // namespace vidfill::flow
