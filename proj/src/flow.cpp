#include "vidfill/flow.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vidfill/kernels.hpp"
#include "vidfill/mask_ops.hpp"

namespace vidfill::flow {

void FlowConfig::validate() const {
    require(steps >= 1, "flow config: steps must be >= 1");
    require(frame_step_min >= 1 && frame_step_max <= 6 && frame_step_min <= frame_step_max,
            "flow config: frame_step_range must lie within [1,6]");
    require(batch_size >= 1, "flow config: batch_size must be >= 1");
    require(prompt_dropout >= 0.0 && prompt_dropout <= 1.0,
            "flow config: prompt_dropout out of [0,1]");
}

LatentGrid interpolate(const LatentGrid& x0, const LatentGrid& noise, double t) {
    require(x0.same_extents(noise), "interpolate: extent mismatch");
    require(t >= 0.0 && t <= 1.0, "interpolate: t out of [0,1]");
    LatentGrid out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0 - t) * x0.data[i] + t * noise.data[i];
    return out;
}

LatentGrid velocity_target(const LatentGrid& x0, const LatentGrid& noise) {
    require(x0.same_extents(noise), "velocity_target: extent mismatch");
    LatentGrid out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = noise.data[i] - x0.data[i];
    return out;
}

int sample_frame_step(Rng& rng, int lo, int hi) {
    return static_cast<int>(rng.uniform_int(lo, hi));
}

LatentGrid cfg_combine(const LatentGrid& v_uncond, const LatentGrid& v_cond, double scale) {
    require(v_uncond.same_extents(v_cond), "cfg_combine: extent mismatch");
    if (scale == 1.0) return v_cond;
    if (scale == 0.0) return v_uncond;
    LatentGrid out = v_uncond;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = v_uncond.data[i] + scale * (v_cond.data[i] - v_uncond.data[i]);
    return out;
}

LatentGrid gaussian_latent(std::size_t t, std::size_t h, std::size_t w, std::size_t c,
                           Rng& rng) {
    LatentGrid z(t, h, w, c);
    for (double& v : z.data) v = rng.normal();
    return z;
}

LatentGrid euler_integrate(const VelocityFn& velocity, LatentGrid z, std::size_t steps) {
    require(steps >= 1, "euler_integrate: steps must be >= 1");
    for (std::size_t j = steps; j >= 1; --j) {
        const double t_hi = static_cast<double>(j) / static_cast<double>(steps);
        const double t_lo = static_cast<double>(j - 1) / static_cast<double>(steps);
        const double dt = t_hi - t_lo;
        const LatentGrid v = velocity(z, t_hi);
        require(v.same_extents(z), "euler_integrate: velocity extent mismatch");
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            z.data[i] -= dt * v.data[i];
            if (!std::isfinite(z.data[i]))
                throw std::runtime_error("euler_integrate: non-finite state");
        }
    }
    return z;
}

LatentGrid euler_sample(const VelocityFn& velocity, std::size_t t, std::size_t h, std::size_t w,
                        std::size_t c, std::size_t steps, Rng& rng) {
    return euler_integrate(velocity, gaussian_latent(t, h, w, c, rng), steps);
}

AdamW::AdamW(const NamedTensors& params, double lr, double weight_decay,
             std::size_t warmup_iters)
    : lr_(lr), weight_decay_(weight_decay), warmup_(warmup_iters) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
}

void AdamW::update(NamedTensors& params, const NamedTensors& grads) {
    ++step_;
    const double warm =
        warmup_ > 0 ? std::min(1.0, static_cast<double>(step_) / static_cast<double>(warmup_))
                    : 1.0;
    const double lr = lr_ * warm;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto& p = params.tensor(i).v;
        const auto& g = grads.tensor(i).v;
        auto& m = m_.tensor(i).v;
        auto& v = v_.tensor(i).v;
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[j]);
        }
    }
}

dit::TrainSample make_train_sample(const synth::Example& ex, const dit::DenoiserConfig& model,
                                   const codec::CodecConfig& codec, const FlowConfig& cfg,
                                   Rng& rng, bool allow_prompt_dropout) {
    const std::size_t T_src = std::min<std::size_t>(ex.video.frames, cfg.clip_frames);
    const int stride = sample_frame_step(rng, cfg.frame_step_min, cfg.frame_step_max);
    const std::size_t start =
        T_src > 1 ? static_cast<std::size_t>(rng.uniform_int(
                        0, std::min<std::int64_t>(stride - 1, static_cast<std::int64_t>(T_src) - 1)))
                  : 0;

    // strided clip, capped so the latent fits the model window
    const std::size_t cap = (model.max_f - 1) * codec.s_t + 1;
    std::vector<std::size_t> frames;
    for (std::size_t f = start; f < T_src && frames.size() < cap;
         f += static_cast<std::size_t>(stride))
        frames.push_back(f);

    VideoTensor clip(frames.size(), ex.video.height, ex.video.width, ex.video.channels);
    MaskVideo mclip(frames.size(), ex.mask.height, ex.mask.width);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::size_t src = frames[i];
        std::copy_n(ex.video.data.begin() +
                        static_cast<std::ptrdiff_t>(ex.video.index(src, 0, 0, 0)),
                    ex.video.height * ex.video.width * ex.video.channels,
                    clip.data.begin() + static_cast<std::ptrdiff_t>(clip.index(i, 0, 0, 0)));
        std::copy_n(ex.mask.data.begin() + static_cast<std::ptrdiff_t>(ex.mask.index(src, 0, 0)),
                    ex.mask.height * ex.mask.width,
                    mclip.data.begin() + static_cast<std::ptrdiff_t>(mclip.index(i, 0, 0)));
    }

    auto [padded, pad_info] = codec::pad_to_grid(clip, codec);
    (void)pad_info;
    const MaskVideo mpadded = maskops::pad_to_grid(mclip, codec);

    dit::TrainSample sample;
    const LatentGrid x0 = codec::encode(padded, codec);
    sample.input.cond_video = codec::encode(maskops::apply_mask(padded, mpadded), codec);
    sample.input.cond_mask = maskops::to_latent_mask(mpadded, codec);
    sample.hole = maskops::dilate_holes(sample.input.cond_mask, cfg.dilation_radius);

    const bool drop = allow_prompt_dropout && rng.uniform() < cfg.prompt_dropout;
    sample.input.prompt = drop ? dit::PromptEmbedding::zeros(model.n_txt, model.d_txt)
                               : dit::embed_prompt(ex.prompt, model.d_txt, model.n_txt);

    sample.input.timestep = rng.uniform();
    LatentGrid noise = gaussian_latent(x0.t, x0.h, x0.w, x0.c, rng);
    sample.input.noisy = interpolate(x0, noise, sample.input.timestep);
    sample.target = velocity_target(x0, noise);
    return sample;
}

FlowState init_training(const dit::DenoiserConfig& model, const codec::CodecConfig& codec,
                        const FlowConfig& cfg) {
    cfg.validate();
    FlowState st;
    st.model_cfg = model;
    st.codec_cfg = codec;
    st.params = dit::init_params(model, derive_seed(cfg.seed, "init"));
    st.opt = AdamW(st.params, cfg.lr, cfg.weight_decay, cfg.warmup_iters);
    return st;
}

double train_step(FlowState& state, const synth::Dataset& data, const FlowConfig& cfg,
                  Rng& rng) {
    require(!data.examples.empty(), "train_step: empty dataset");
    state.stage = state.iteration < cfg.stage1_iters ? 1 : 2;

    std::vector<dit::TrainSample> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::size_t idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(data.examples.size()) - 1));
        batch.push_back(make_train_sample(data.examples[idx], state.model_cfg, state.codec_cfg,
                                          cfg, rng, /*allow_prompt_dropout=*/true));
    }

    auto [loss, grads] = dit::loss_and_gradients(state.params, state.model_cfg, batch,
                                                 state.stage);
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training diverged at iteration " << state.iteration;
        throw std::runtime_error(os.str());
    }
    state.opt.update(state.params, grads);
    ++state.iteration;
    return loss;
}

std::vector<TrainLogEntry> run_training(FlowState& state, const synth::Dataset& data,
                                        const FlowConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "train"));
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw std::runtime_error("cannot open metrics log: " + cfg.log_path);
    }
    std::vector<TrainLogEntry> entries;
    const std::size_t total = cfg.stage1_iters + cfg.stage2_iters;
    entries.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double loss = train_step(state, data, cfg, rng);
        entries.push_back({state.iteration, state.stage, loss});
        if (log.is_open())
            log << "{\"iteration\":" << state.iteration << ",\"stage\":" << state.stage
                << ",\"loss\":" << loss << "}\n";
    }
    return entries;
}

double distill_step(FlowState& student, const NamedTensors& teacher, const synth::Dataset& data,
                    const FlowConfig& cfg, Rng& rng, double scale) {
    require(!data.examples.empty(), "distill_step: empty dataset");

    std::vector<dit::TrainSample> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::size_t idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(data.examples.size()) - 1));
        dit::TrainSample s = make_train_sample(data.examples[idx], student.model_cfg,
                                               student.codec_cfg, cfg, rng,
                                               /*allow_prompt_dropout=*/false);
        // teacher targets: conditional and unconditional velocities combined
        dit::DenoiserInput cond = s.input;
        dit::DenoiserInput uncond = s.input;
        uncond.prompt = dit::PromptEmbedding::zeros(student.model_cfg.n_txt,
                                                    student.model_cfg.d_txt);
        const LatentGrid v_c = dit::forward(teacher, student.model_cfg, cond);
        const LatentGrid v_u = dit::forward(teacher, student.model_cfg, uncond);
        s.target = cfg_combine(v_u, v_c, scale);
        s.input.guidance = scale;
        batch.push_back(std::move(s));
    }

    auto [loss, grads] = dit::loss_and_gradients(student.params, student.model_cfg, batch, 1);
    if (!std::isfinite(loss)) throw std::runtime_error("distillation diverged");
    student.opt.update(student.params, grads);
    ++student.iteration;
    return loss;
}

std::vector<TrainLogEntry> run_distillation(FlowState& student, const NamedTensors& teacher,
                                            const synth::Dataset& data, const FlowConfig& cfg,
                                            std::size_t iters, double scale) {
    Rng rng(derive_seed(cfg.seed, "distill"));
    std::vector<TrainLogEntry> entries;
    entries.reserve(iters);
    for (std::size_t i = 0; i < iters; ++i) {
        const double loss = distill_step(student, teacher, data, cfg, rng, scale);
        entries.push_back({student.iteration, 0, loss});
    }
    return entries;
}

TrainSetup parse_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    TrainSetup setup;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = true;
            for (char ch : line)
                if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
            if (blank) continue;
            throw std::runtime_error("config parse error at line " + std::to_string(line_no));
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        auto u = [&] { return static_cast<std::size_t>(std::stoull(val)); };
        auto d = [&] { return std::stod(val); };

        if (key == "steps") setup.flow.steps = u();
        else if (key == "stage1_iters") setup.flow.stage1_iters = u();
        else if (key == "stage2_iters") setup.flow.stage2_iters = u();
        else if (key == "lr") setup.flow.lr = d();
        else if (key == "warmup_iters") setup.flow.warmup_iters = u();
        else if (key == "weight_decay") setup.flow.weight_decay = d();
        else if (key == "batch_size") setup.flow.batch_size = u();
        else if (key == "prompt_dropout") setup.flow.prompt_dropout = d();
        else if (key == "frame_step_min") setup.flow.frame_step_min = static_cast<int>(u());
        else if (key == "frame_step_max") setup.flow.frame_step_max = static_cast<int>(u());
        else if (key == "cfg_scale") setup.flow.cfg_scale = d();
        else if (key == "dilation_radius") setup.flow.dilation_radius = u();
        else if (key == "clip_frames") setup.flow.clip_frames = u();
        else if (key == "seed") setup.flow.seed = std::stoull(val);
        else if (key == "log_path") setup.flow.log_path = val;
        else if (key == "d_model") setup.model.d_model = u();
        else if (key == "n_heads") setup.model.n_heads = u();
        else if (key == "depth") setup.model.depth = u();
        else if (key == "patch_t") setup.model.p_t = u();
        else if (key == "patch_h") setup.model.p_h = u();
        else if (key == "patch_w") setup.model.p_w = u();
        else if (key == "d_txt") setup.model.d_txt = u();
        else if (key == "n_txt") setup.model.n_txt = u();
        else if (key == "max_f") setup.model.max_f = u();
        else if (key == "c_lat") { setup.model.c_lat = u(); setup.codec.c_lat = u(); }
        else if (key == "s_t") setup.codec.s_t = u();
        else if (key == "s_h") setup.codec.s_h = u();
        else if (key == "s_w") setup.codec.s_w = u();
        else if (key == "projection_seed") setup.codec.projection_seed = std::stoull(val);
        else throw std::runtime_error("unknown config key '" + key + "' at line " +
                                      std::to_string(line_no));
    }
    setup.model.c_lat = setup.codec.c_lat;
    return setup;
}

}  // namespace vidfill::flow
