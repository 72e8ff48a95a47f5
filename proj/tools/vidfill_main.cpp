#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vidfill/checkpoint.hpp"
#include "vidfill/cps.hpp"
#include "vidfill/data_synth.hpp"
#include "vidfill/flow.hpp"
#include "vidfill/io.hpp"
#include "vidfill/metrics.hpp"
#include "vidfill/pipeline.hpp"

namespace vf = vidfill;

namespace {

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos)
        throw std::runtime_error("--size must be HxW, e.g. 64x64, got " + s);
    return {std::stoull(s.substr(0, x)), std::stoull(s.substr(x + 1))};
}

int cmd_synth_data(const std::string& out_dir, std::size_t count, std::size_t frames,
                   const std::string& size, std::uint64_t seed) {
    const auto [h, w] = parse_size(size);
    vf::synth::Dataset ds = vf::synth::make_dataset(count, frames, h, w, seed);
    vf::synth::write_dataset(out_dir, ds);
    std::cout << "wrote " << ds.examples.size() << " examples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_path) {
    const vf::flow::TrainSetup setup = vf::flow::parse_train_config(config_path);
    const vf::synth::Dataset data = vf::synth::read_dataset(data_dir);
    vf::flow::FlowState state = vf::flow::init_training(setup.model, setup.codec, setup.flow);
    const auto log = vf::flow::run_training(state, data, setup.flow);

    vf::ckpt::Checkpoint ck;
    ck.model = setup.model;
    ck.codec = setup.codec;
    ck.student = false;
    ck.params = state.params;
    vf::ckpt::save_checkpoint(out_path, ck);

    if (!log.empty())
        std::cout << "trained " << log.size() << " iterations, final loss "
                  << log.back().loss << "\n";
    std::cout << "checkpoint written to " << out_path << " ("
              << vf::dit::param_count(ck.params) << " parameters)\n";
    return 0;
}

int cmd_distill(const std::string& teacher_path, const std::string& data_dir, double scale,
                const std::string& out_path, std::size_t iters, const std::string& config_path,
                std::uint64_t seed) {
    vf::ckpt::Checkpoint teacher = vf::ckpt::load_checkpoint(teacher_path);

    vf::flow::FlowConfig fcfg;
    if (!config_path.empty()) fcfg = vf::flow::parse_train_config(config_path).flow;
    fcfg.seed = seed;

    const vf::synth::Dataset data = vf::synth::read_dataset(data_dir);

    vf::flow::FlowState student;
    student.model_cfg = teacher.model;
    student.codec_cfg = teacher.codec;
    student.params = teacher.params;  // student starts from the teacher
    student.opt = vf::flow::AdamW(student.params, fcfg.lr, fcfg.weight_decay, fcfg.warmup_iters);

    const auto log =
        vf::flow::run_distillation(student, teacher.params, data, fcfg, iters, scale);

    vf::ckpt::Checkpoint out;
    out.model = teacher.model;
    out.codec = teacher.codec;
    out.student = true;
    out.params = student.params;
    vf::ckpt::save_checkpoint(out_path, out);

    if (!log.empty())
        std::cout << "distilled " << log.size() << " steps at scale " << scale
                  << ", first loss " << log.front().loss << ", final loss " << log.back().loss
                  << "\n";
    std::cout << "student checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& video_path,
              const std::string& mask_path, const std::string& object_name,
              const std::string& prompt, std::size_t steps, std::size_t window,
              std::size_t alpha, const std::string& composite, std::uint64_t seed,
              const std::string& out_path, double guidance) {
    if (!std::filesystem::exists(ckpt_path))
        throw std::runtime_error("missing checkpoint: " + ckpt_path);
    const vf::ckpt::Checkpoint ck = vf::ckpt::load_checkpoint(ckpt_path);

    vf::pipe::InpaintRequest req;
    req.video = vf::io::read_video_file(video_path);
    req.mask = vf::io::read_mask_file(mask_path);
    req.steps = steps;
    req.window = window;
    req.alpha = alpha;
    req.seed = seed;
    req.guidance = guidance;
    if (composite == "on")
        req.composite = true;
    else if (composite == "off")
        req.composite = false;
    else
        throw std::runtime_error("--composite must be on or off");

    if (prompt == "auto") {
        if (object_name.empty())
            throw std::runtime_error("--prompt auto requires --object NAME");
        auto backend = vf::pipe::default_captioner();
        req.prompt = vf::pipe::generate_prompt(req.video, object_name, *backend, &std::cerr);
        std::cout << "auto prompt: \"" << req.prompt << "\"\n";
    } else {
        req.prompt = prompt;
    }

    vf::pipe::InpaintDiagnostics diag;
    const vf::VideoTensor out = vf::pipe::inpaint(req, ck, &diag);
    vf::io::write_video_file(out_path, out);

    std::cout << (diag.used_cps ? "circular position-shift" : "single pass") << ", "
              << diag.latent_frames << " latent frames";
    if (diag.used_cps)
        std::cout << " (padded to " << diag.padded_latent_frames << "), window " << diag.window;
    std::cout << "\noutput written to " << out_path << "\n";
    return 0;
}

nlohmann::json region_json(const std::optional<vf::metrics::RegionMetrics>& m) {
    if (!m) return nullptr;
    nlohmann::json j{{"mse", m->mse}, {"mae", m->mae}, {"psnr", m->psnr}, {"pixels", m->pixels}};
    if (m->ssim) j["ssim"] = *m->ssim;
    return j;
}

int cmd_eval(const std::string& out_path, const std::string& gt_path,
             const std::string& mask_path, const std::string& report_path) {
    const vf::VideoTensor out = vf::io::read_video_file(out_path);
    const vf::VideoTensor gt = vf::io::read_video_file(gt_path);
    const vf::MaskVideo mask = vf::io::read_mask_file(mask_path);

    nlohmann::json row;
    row["video"] = out_path;
    row["psnr"] = vf::metrics::psnr(out, gt);
    row["ssim"] = vf::metrics::ssim(out, gt);
    row["mse"] = vf::metrics::mse(out, gt);
    row["mae"] = vf::metrics::mae(out, gt);
    if (out.frames >= 2) {
        row["temporal_consistency"] = vf::metrics::temporal_consistency(out);
        row["temporal_consistency_hole"] = vf::metrics::temporal_consistency(out, mask);
    }
    const vf::metrics::RegionReport regions = vf::metrics::region_metrics(out, gt, mask);
    row["hole"] = region_json(regions.hole);
    row["known"] = region_json(regions.known);

    nlohmann::json report;
    report["version"] = 1;
    report["examples"] = nlohmann::json::array({row});
    report["aggregate"] = {{"psnr", row["psnr"]}, {"ssim", row["ssim"]}, {"mse", row["mse"]},
                           {"mae", row["mae"]}};

    std::ofstream f(report_path);
    if (!f) throw std::runtime_error("cannot write report: " + report_path);
    f << report.dump(2) << "\n";
    std::cout << "psnr " << row["psnr"] << "  ssim " << row["ssim"] << "\nreport written to "
              << report_path << "\n";
    return 0;
}

int cmd_schedule_dump(std::size_t frames, std::size_t window, std::size_t alpha,
                      std::size_t steps) {
    vf::cps::CircularSchedule schedule = vf::cps::build_circular(frames);
    schedule.f = window;
    schedule.alpha = alpha;
    std::cout << "l=" << schedule.l << " L=" << schedule.L << " window=" << window
              << " alpha=" << alpha << "\n";
    for (std::size_t step = 1; step <= steps; ++step) {
        const vf::cps::WindowPlan plan = vf::cps::plan_windows(schedule);
        std::cout << "step " << step << " alpha_sigma=" << schedule.alpha_sigma
                  << " (mod L: " << plan.alpha_sigma << ")\n";
        for (std::size_t w = 0; w < plan.windows.size(); ++w) {
            std::cout << "  window " << w << " positions=[";
            for (std::size_t i = 0; i < plan.windows[w].positions.size(); ++i)
                std::cout << (i ? "," : "") << plan.windows[w].positions[i];
            std::cout << "] frames=[";
            for (std::size_t i = 0; i < plan.windows[w].frames.size(); ++i)
                std::cout << (i ? "," : "") << plan.windows[w].frames[i];
            std::cout << "]\n";
        }
        schedule.alpha_sigma += alpha;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"video object removal toolkit"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a procedural dataset");
    std::string s_out;
    std::size_t s_count = 256, s_frames = 17;
    std::string s_size = "64x64";
    std::uint64_t s_seed = 0;
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--count", s_count, "number of examples");
    synth->add_option("--frames", s_frames, "frames per example");
    synth->add_option("--size", s_size, "frame size HxW");
    synth->add_option("--seed", s_seed, "generator seed");

    // train
    auto* train = app.add_subcommand("train", "train the denoiser (stages 1+2)");
    std::string t_data, t_config, t_out;
    train->add_option("--data", t_data, "dataset directory")->required();
    train->add_option("--config", t_config, "training config file")->required();
    train->add_option("--out", t_out, "output checkpoint")->required();

    // distill
    auto* distill = app.add_subcommand("distill", "distill guidance into a student");
    std::string d_teacher, d_data, d_out, d_config;
    double d_scale = 3.0;
    std::size_t d_iters = 500;
    std::uint64_t d_seed = 0;
    distill->add_option("--teacher", d_teacher, "teacher checkpoint")->required();
    distill->add_option("--data", d_data, "dataset directory")->required();
    distill->add_option("--scale", d_scale, "fixed guidance scale");
    distill->add_option("--out", d_out, "student checkpoint")->required();
    distill->add_option("--iters", d_iters, "distillation steps");
    distill->add_option("--config", d_config, "optional training config for lr etc.");
    distill->add_option("--seed", d_seed, "rng seed");

    // infer
    auto* infer = app.add_subcommand("infer", "remove the masked object from a video");
    std::string i_ckpt, i_video, i_mask, i_object, i_prompt = "auto", i_composite = "on",
                i_out;
    std::size_t i_steps = 40, i_window = 0, i_alpha = 7;
    std::uint64_t i_seed = 0;
    double i_guidance = 3.0;
    infer->add_option("--ckpt", i_ckpt, "checkpoint path")->required();
    infer->add_option("--video", i_video, "input video tensor file")->required();
    infer->add_option("--mask", i_mask, "input mask file")->required();
    infer->add_option("--object", i_object, "object name for auto prompting");
    infer->add_option("--prompt", i_prompt, "scene prompt, or 'auto'");
    infer->add_option("--steps", i_steps, "denoising steps");
    infer->add_option("--window", i_window, "latent window length (0: model max)");
    infer->add_option("--alpha", i_alpha, "per-step window shift");
    infer->add_option("--composite", i_composite, "composite known pixels: on|off");
    infer->add_option("--seed", i_seed, "sampling seed");
    infer->add_option("--guidance", i_guidance, "guidance scale");
    infer->add_option("--out", i_out, "output video tensor file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "score an output against ground truth");
    std::string e_out, e_gt, e_mask, e_report;
    eval->add_option("--out", e_out, "output video tensor file")->required();
    eval->add_option("--gt", e_gt, "ground-truth video tensor file")->required();
    eval->add_option("--mask", e_mask, "mask file")->required();
    eval->add_option("--report", e_report, "report JSON path")->required();

    // schedule-dump
    auto* sched = app.add_subcommand("schedule-dump", "print the window plan per timestep");
    std::size_t c_frames = 0, c_window = 0, c_alpha = 0, c_steps = 1;
    sched->add_option("--frames", c_frames, "latent sequence length l")->required();
    sched->add_option("--window", c_window, "window length f")->required();
    sched->add_option("--alpha", c_alpha, "per-step shift")->required();
    sched->add_option("--steps", c_steps, "timesteps to print");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth_data(s_out, s_count, s_frames, s_size, s_seed);
        if (train->parsed()) return cmd_train(t_data, t_config, t_out);
        if (distill->parsed())
            return cmd_distill(d_teacher, d_data, d_scale, d_out, d_iters, d_config, d_seed);
        if (infer->parsed())
            return cmd_infer(i_ckpt, i_video, i_mask, i_object, i_prompt, i_steps, i_window,
                             i_alpha, i_composite, i_seed, i_out, i_guidance);
        if (eval->parsed()) return cmd_eval(e_out, e_gt, e_mask, e_report);
        if (sched->parsed()) return cmd_schedule_dump(c_frames, c_window, c_alpha, c_steps);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
