#include "vidfill/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vidfill/io.hpp"
#include "vidfill/rng.hpp"

namespace vidfill::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

const char* scene_kind_name(SceneKind k) {
    switch (k) {
        case SceneKind::gradient_drift: return "gradient-drift";
        case SceneKind::stripes: return "stripes";
        case SceneKind::blobs: return "blobs";
        case SceneKind::checker_flow: return "checker-flow";
    }
    return "unknown";
}

const char* object_shape_name(ObjectShape s) {
    switch (s) {
        case ObjectShape::ellipse: return "ellipse";
        case ObjectShape::rectangle: return "rectangle";
        case ObjectShape::polygon_blob: return "polygon-blob";
    }
    return "unknown";
}

SceneKind parse_scene_kind(const std::string& name) {
    for (SceneKind k : {SceneKind::gradient_drift, SceneKind::stripes, SceneKind::blobs,
                        SceneKind::checker_flow})
        if (name == scene_kind_name(k)) return k;
    throw std::invalid_argument("unknown scene kind: " + name);
}

ObjectShape parse_object_shape(const std::string& name) {
    for (ObjectShape s :
         {ObjectShape::ellipse, ObjectShape::rectangle, ObjectShape::polygon_blob})
        if (name == object_shape_name(s)) return s;
    throw std::invalid_argument("unknown object shape: " + name);
}

std::string prompt_for_kind(SceneKind kind) {
    switch (kind) {
        case SceneKind::gradient_drift: return "a drifting gradient backdrop";
        case SceneKind::stripes: return "soft diagonal stripes sliding slowly";
        case SceneKind::blobs: return "blurry color blobs floating over a plain backdrop";
        case SceneKind::checker_flow: return "a smooth checker pattern flowing sideways";
    }
    return "a plain textured background";
}

VideoTensor gen_background(const SceneSpec& spec) {
    require(spec.frames >= 1 && spec.height >= 2 && spec.width >= 2, "gen_background: bad spec");
    Rng rng(derive_seed(spec.seed, "background"));
    VideoTensor video(spec.frames, spec.height, spec.width, spec.channels);
    const double T = static_cast<double>(spec.frames);
    const double amp = spec.motion_amplitude;

    switch (spec.kind) {
        case SceneKind::gradient_drift: {
            std::vector<double> base(spec.channels), gx(spec.channels), gy(spec.channels),
                A(spec.channels), omega(spec.channels), phi(spec.channels);
            for (std::size_t c = 0; c < spec.channels; ++c) {
                base[c] = rng.uniform(0.40, 0.60);
                gx[c] = rng.uniform(-0.35, 0.35);
                gy[c] = rng.uniform(-0.35, 0.35);
                const double cycles = rng.uniform(0.5, 1.5);
                omega[c] = 2.0 * kPi * cycles / std::max(T, 2.0);
                A[c] = omega[c] > 0 ? 0.9 * amp / omega[c] : 0.0;
                phi[c] = rng.uniform(0.0, 2.0 * kPi);
            }
            for (std::size_t t = 0; t < spec.frames; ++t)
                for (std::size_t y = 0; y < spec.height; ++y)
                    for (std::size_t x = 0; x < spec.width; ++x)
                        for (std::size_t c = 0; c < spec.channels; ++c) {
                            const double u = static_cast<double>(x) / (spec.width - 1) - 0.5;
                            const double v = static_cast<double>(y) / (spec.height - 1) - 0.5;
                            video.at(t, y, x, c) = clamp01(
                                base[c] + gx[c] * u + gy[c] * v +
                                A[c] * std::sin(omega[c] * static_cast<double>(t) + phi[c]));
                        }
            break;
        }
        case SceneKind::stripes: {
            const double theta = rng.uniform(0.0, kPi);
            const double lambda = rng.uniform(48.0, 96.0);
            const double As = rng.uniform(0.10, 0.20);
            const double dphi = 0.9 * amp / As;
            std::vector<double> delta(spec.channels);
            for (std::size_t c = 0; c < spec.channels; ++c) delta[c] = rng.uniform(0.0, 0.4);
            const double kx = std::cos(theta), ky = std::sin(theta);
            for (std::size_t t = 0; t < spec.frames; ++t)
                for (std::size_t y = 0; y < spec.height; ++y)
                    for (std::size_t x = 0; x < spec.width; ++x)
                        for (std::size_t c = 0; c < spec.channels; ++c)
                            video.at(t, y, x, c) = clamp01(
                                0.5 + As * std::sin(2.0 * kPi *
                                                        (kx * static_cast<double>(x) +
                                                         ky * static_cast<double>(y)) /
                                                        lambda +
                                                    dphi * static_cast<double>(t) + delta[c]));
            break;
        }
        case SceneKind::blobs: {
            const std::size_t K = static_cast<std::size_t>(rng.uniform_int(2, 3));
            std::vector<double> base(spec.channels);
            for (std::size_t c = 0; c < spec.channels; ++c) base[c] = rng.uniform(0.35, 0.65);
            struct Blob {
                double cx, cy, sigma, R, om1, om2, ph1, ph2;
                std::vector<double> a;
            };
            std::vector<Blob> blobs(K);
            const double slope_bound = 0.04;  // max |grad| over summed blobs
            const double mu = 0.9 * amp / slope_bound;
            for (auto& blob : blobs) {
                blob.cx = rng.uniform(0.2, 0.8) * spec.width;
                blob.cy = rng.uniform(0.2, 0.8) * spec.height;
                blob.sigma = rng.uniform(12.0, 20.0);
                blob.R = rng.uniform(2.0, 6.0);
                blob.om1 = mu / blob.R;
                blob.om2 = mu / blob.R * rng.uniform(0.6, 1.0);
                blob.ph1 = rng.uniform(0.0, 2.0 * kPi);
                blob.ph2 = rng.uniform(0.0, 2.0 * kPi);
                blob.a.resize(spec.channels);
                for (double& a : blob.a) a = rng.uniform(-0.25, 0.25);
            }
            for (std::size_t t = 0; t < spec.frames; ++t)
                for (std::size_t y = 0; y < spec.height; ++y)
                    for (std::size_t x = 0; x < spec.width; ++x)
                        for (std::size_t c = 0; c < spec.channels; ++c) {
                            double v = base[c];
                            for (const auto& blob : blobs) {
                                const double bx =
                                    blob.cx + blob.R * std::sin(blob.om1 * t + blob.ph1);
                                const double by =
                                    blob.cy + blob.R * std::cos(blob.om2 * t + blob.ph2);
                                const double dx = static_cast<double>(x) - bx;
                                const double dy = static_cast<double>(y) - by;
                                v += blob.a[c] *
                                     std::exp(-0.5 * (dx * dx + dy * dy) /
                                              (blob.sigma * blob.sigma));
                            }
                            video.at(t, y, x, c) = clamp01(v);
                        }
            break;
        }
        case SceneKind::checker_flow: {
            const double lambda = 48.0;
            const double A = 0.12;
            const double sharp = 2.0;
            const double norm = std::tanh(sharp);
            const double slope_bound = A * 2.0 * kPi * sharp / (lambda * norm);
            const double mu = 0.9 * amp / slope_bound;
            const double dir = rng.uniform(0.0, 2.0 * kPi);
            const double vx = mu * std::cos(dir), vy = mu * std::sin(dir);
            std::vector<double> off(spec.channels);
            for (std::size_t c = 0; c < spec.channels; ++c) off[c] = rng.uniform(-0.05, 0.05);
            auto S = [&](double u) { return std::tanh(sharp * std::sin(2.0 * kPi * u)) / norm; };
            for (std::size_t t = 0; t < spec.frames; ++t)
                for (std::size_t y = 0; y < spec.height; ++y)
                    for (std::size_t x = 0; x < spec.width; ++x)
                        for (std::size_t c = 0; c < spec.channels; ++c)
                            video.at(t, y, x, c) = clamp01(
                                0.5 + off[c] +
                                A * S((static_cast<double>(x) + vx * t) / lambda) *
                                    S((static_cast<double>(y) + vy * t) / lambda));
            break;
        }
    }
    return video;
}

MaskVideo gen_object_mask(const ObjectSpec& spec, std::size_t frames, std::size_t height,
                          std::size_t width, MaskTrace* trace) {
    require(frames >= 1 && height >= 8 && width >= 8, "gen_object_mask: bad extents");
    require(spec.size_frac >= 0.0 && spec.size_frac <= 0.5, "gen_object_mask: size_frac > 0.5");

    MaskVideo mask(frames, height, width, 1);
    if (trace) {
        trace->cx.assign(frames, 0.0);
        trace->cy.assign(frames, 0.0);
    }
    if (spec.size_frac <= 0.0) return mask;  // no hole at all

    Rng rng(derive_seed(spec.seed, "object"));
    const double area = spec.size_frac * static_cast<double>(height * width);
    const double aspect = rng.uniform(0.7, 1.4);

    double ax = 0, ay = 0;       // ellipse semi-axes / rect half extents / star radius
    std::vector<double> eps, ph0, psi;
    switch (spec.shape) {
        case ObjectShape::ellipse:
            ax = std::sqrt(area * aspect / kPi);
            ay = ax / aspect;
            break;
        case ObjectShape::rectangle:
            ax = 0.5 * std::sqrt(area * aspect);
            ay = 0.25 * area / ax;
            break;
        case ObjectShape::polygon_blob: {
            eps = {rng.uniform(0.05, 0.12), rng.uniform(0.04, 0.10)};
            ph0 = {rng.uniform(0.0, 2 * kPi), rng.uniform(0.0, 2 * kPi)};
            psi = {spec.deform_amp * 2.0, spec.deform_amp * 3.0};
            double second = 0.0;
            for (double e : eps) second += 0.5 * e * e;
            ax = ay = std::sqrt(area / (kPi * (1.0 + second)));
            break;
        }
    }

    const double r_max = std::max(ax, ay) * (1.0 + spec.deform_amp) + 2.0;
    require(2.0 * r_max + 4.0 < static_cast<double>(std::min(height, width)),
            "gen_object_mask: object too large for frame extents");
    const double mx = r_max + 2.0;

    double cx = rng.uniform(0.4, 0.6) * width;
    double cy = rng.uniform(0.4, 0.6) * height;
    double velx = 0.0, vely = 0.0;

    for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) {
            const double angle = rng.uniform(0.0, 2.0 * kPi);
            const double mag = rng.uniform(0.0, spec.max_step);
            velx = 0.8 * velx + 0.2 * mag * std::cos(angle);
            vely = 0.8 * vely + 0.2 * mag * std::sin(angle);
            const double sp = std::sqrt(velx * velx + vely * vely);
            if (sp > spec.max_step) {
                velx *= spec.max_step / sp;
                vely *= spec.max_step / sp;
            }
            cx += velx;
            cy += vely;
            // reflect off the margin box so the shape never clips
            if (cx < mx) { cx = 2 * mx - cx; velx = -velx; }
            if (cx > width - 1 - mx) { cx = 2 * (width - 1 - mx) - cx; velx = -velx; }
            if (cy < mx) { cy = 2 * mx - cy; vely = -vely; }
            if (cy > height - 1 - mx) { cy = 2 * (height - 1 - mx) - cy; vely = -vely; }
        }
        if (trace) {
            trace->cx[t] = cx;
            trace->cy[t] = cy;
        }

        // area-preserving deformation
        const double d = 1.0 + spec.deform_amp *
                                   std::sin(2.0 * kPi * static_cast<double>(t) /
                                                std::max<double>(frames, 2.0) +
                                            1.3);
        const double axt = ax * d, ayt = ay / d;

        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                bool inside = false;
                switch (spec.shape) {
                    case ObjectShape::ellipse:
                        inside = (dx * dx) / (axt * axt) + (dy * dy) / (ayt * ayt) <= 1.0;
                        break;
                    case ObjectShape::rectangle:
                        inside = std::abs(dx) <= axt && std::abs(dy) <= ayt;
                        break;
                    case ObjectShape::polygon_blob: {
                        const double theta = std::atan2(dy, dx);
                        double mod = 1.0;
                        for (std::size_t k = 0; k < eps.size(); ++k)
                            mod += eps[k] * std::sin((static_cast<double>(k) + 2.0) * theta +
                                                     ph0[k] + psi[k] * static_cast<double>(t));
                        const double r = ax * mod;
                        inside = dx * dx + dy * dy <= r * r;
                        break;
                    }
                }
                if (inside) mask.at(t, y, x) = 0;
            }
    }
    return mask;
}

double hole_area_fraction(const MaskVideo& mask, std::size_t frame) {
    std::size_t holes = 0;
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x)
            if (mask.at(frame, y, x) == 0) ++holes;
    return static_cast<double>(holes) / static_cast<double>(mask.height * mask.width);
}

Dataset make_dataset(std::size_t count, std::size_t frames, std::size_t height,
                     std::size_t width, std::uint64_t seed) {
    Dataset ds;
    ds.examples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Example ex;
        ex.id = i;
        ex.scene.seed = derive_seed(seed, "scene", i);
        ex.scene.kind = static_cast<SceneKind>(i % 4);
        ex.scene.frames = frames;
        ex.scene.height = height;
        ex.scene.width = width;
        ex.object.seed = derive_seed(seed, "object", i);
        ex.object.shape = static_cast<ObjectShape>(i % 3);
        Rng rng(derive_seed(seed, "example", i));
        ex.object.size_frac = rng.uniform(0.08, 0.20);
        ex.prompt = prompt_for_kind(ex.scene.kind);
        ex.video = gen_background(ex.scene);
        ex.mask = gen_object_mask(ex.object, frames, height, width);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["count"] = ds.examples.size();
    auto& items = manifest["examples"] = nlohmann::json::array();
    char name[32];
    for (const Example& ex : ds.examples) {
        std::snprintf(name, sizeof(name), "video_%04zu.vft", ex.id);
        const std::string video_file = name;
        std::snprintf(name, sizeof(name), "mask_%04zu.vfm", ex.id);
        const std::string mask_file = name;
        io::write_video_file(dir + "/" + video_file, ex.video);
        io::write_mask_file(dir + "/" + mask_file, ex.mask);
        items.push_back({{"id", ex.id},
                         {"frames", ex.video.frames},
                         {"height", ex.video.height},
                         {"width", ex.video.width},
                         {"channels", ex.video.channels},
                         {"kind", scene_kind_name(ex.scene.kind)},
                         {"shape", object_shape_name(ex.object.shape)},
                         {"prompt", ex.prompt},
                         {"scene_seed", ex.scene.seed},
                         {"object_seed", ex.object.seed},
                         {"size_frac", ex.object.size_frac},
                         {"motion_amplitude", ex.scene.motion_amplitude},
                         {"video", video_file},
                         {"mask", mask_file}});
    }
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest: " + dir);
    f << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("dataset format error: missing manifest in " + dir);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("dataset format error: bad manifest: ") + e.what());
    }
    if (!manifest.contains("examples") || !manifest["examples"].is_array())
        throw std::runtime_error("dataset format error: manifest lacks examples array");

    Dataset ds;
    for (const auto& item : manifest["examples"]) {
        Example ex;
        ex.id = item.at("id").get<std::size_t>();
        ex.scene.seed = item.at("scene_seed").get<std::uint64_t>();
        ex.scene.kind = parse_scene_kind(item.at("kind").get<std::string>());
        ex.scene.frames = item.at("frames").get<std::size_t>();
        ex.scene.height = item.at("height").get<std::size_t>();
        ex.scene.width = item.at("width").get<std::size_t>();
        ex.scene.channels = item.at("channels").get<std::size_t>();
        ex.scene.motion_amplitude = item.at("motion_amplitude").get<double>();
        ex.object.seed = item.at("object_seed").get<std::uint64_t>();
        ex.object.shape = parse_object_shape(item.at("shape").get<std::string>());
        ex.object.size_frac = item.at("size_frac").get<double>();
        ex.prompt = item.at("prompt").get<std::string>();
        ex.video = io::read_video_file(dir + "/" + item.at("video").get<std::string>());
        ex.mask = io::read_mask_file(dir + "/" + item.at("mask").get<std::string>());
        if (ex.video.frames != ex.scene.frames || ex.video.height != ex.scene.height ||
            ex.video.width != ex.scene.width)
            throw std::runtime_error("dataset format error: manifest/tensor extent mismatch");
        if (ex.mask.frames != ex.video.frames || ex.mask.height != ex.video.height ||
            ex.mask.width != ex.video.width)
            throw std::runtime_error("dataset format error: video/mask extent mismatch");
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != manifest.at("count").get<std::size_t>())
        throw std::runtime_error("dataset format error: count mismatch");
    return ds;
}

}  // namespace vidfill::synth
