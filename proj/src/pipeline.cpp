#include "vidfill/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include "vidfill/mask_ops.hpp"

namespace vidfill::pipe {

namespace {

struct SceneEntry {
    std::string base;
    std::vector<std::string> objects;
    std::map<std::string, std::string> excluding;
};

const std::map<std::string, SceneEntry>& scene_table() {
    static const std::map<std::string, SceneEntry> table = {
        {"generic",
         {"a plain textured background",
          {"shape"},
          {{"shape", "a plain textured background"}}}},
        {"beach",
         {"a sandy beach with waves and people by the water",
          {"person", "umbrella", "dog"},
          {{"person", "a sandy beach with waves"},
           {"umbrella", "a sandy beach with people by the water"},
           {"dog", "a sandy beach with people strolling along the shore"}}}},
        {"meadow",
         {"a green meadow under a bright sky with a horse near a fence",
          {"horse", "fence"},
          {{"horse", "a green meadow under a bright sky with a wooden fence"},
           {"fence", "a green meadow under a bright sky with a grazing animal"}}}},
        {"street",
         {"a quiet street with a parked car and a road sign",
          {"car", "sign"},
          {{"car", "a quiet street with a road sign"},
           {"sign", "a quiet street with a parked car"}}}},
    };
    return table;
}

nlohmann::json frame_to_json(const CaptionFrame& f) {
    return {{"index", f.index},
            {"height", f.height},
            {"width", f.width},
            {"channels", f.channels},
            {"data", f.data}};
}

CaptionFrame frame_from_json(const nlohmann::json& j) {
    CaptionFrame f;
    f.index = j.at("index").get<std::size_t>();
    f.height = j.at("height").get<std::size_t>();
    f.width = j.at("width").get<std::size_t>();
    f.channels = j.at("channels").get<std::size_t>();
    f.data = j.at("data").get<std::vector<double>>();
    if (f.data.size() != f.height * f.width * f.channels)
        throw std::runtime_error("captioner frame payload size mismatch");
    return f;
}

}  // namespace

std::string to_wire(const CaptionRequest& req) {
    nlohmann::json j;
    j["role"] = req.role;
    j["frames"] = nlohmann::json::array();
    for (const auto& f : req.frames) j["frames"].push_back(frame_to_json(f));
    if (req.object) j["object"] = *req.object;
    return j.dump();
}

CaptionRequest request_from_wire(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CaptionRequest req;
    req.role = j.at("role").get<std::string>();
    for (const auto& f : j.at("frames")) req.frames.push_back(frame_from_json(f));
    if (j.contains("object")) req.object = j.at("object").get<std::string>();
    return req;
}

std::string to_wire(const CaptionResponse& resp) {
    return nlohmann::json{{"text", resp.text}, {"object_names", resp.object_names}}.dump();
}

CaptionResponse response_from_wire(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CaptionResponse resp;
    resp.text = j.at("text").get<std::string>();
    resp.object_names = j.at("object_names").get<std::vector<std::string>>();
    return resp;
}

MockCaptioner::MockCaptioner(std::string scene) : scene_(std::move(scene)) {
    if (!scene_table().count(scene_))
        throw std::invalid_argument("unknown mock captioner scene: " + scene_);
}

std::vector<std::string> MockCaptioner::scene_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : scene_table()) names.push_back(k);
    return names;
}

CaptionResponse MockCaptioner::handle(const CaptionRequest& req) {
    const SceneEntry& scene = scene_table().at(scene_);
    CaptionResponse resp;
    if (req.role == "detect") {
        resp.text = scene.base;
        resp.object_names = scene.objects;
    } else if (req.role == "describe_excluding") {
        if (!req.object) throw std::runtime_error("describe_excluding request lacks object");
        const auto it = scene.excluding.find(*req.object);
        resp.text = it != scene.excluding.end() ? it->second : scene.base;
        resp.object_names = scene.objects;
    } else {
        throw std::runtime_error("unknown captioner role: " + req.role);
    }
    return resp;
}

TcpCaptioner::TcpCaptioner(std::string address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("captioner address must be host:port, got " + address);
    host_ = address.substr(0, colon);
    port_ = std::stoi(address.substr(colon + 1));
}

CaptionResponse TcpCaptioner::handle(const CaptionRequest& req) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(port_);
    if (getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr)
        throw std::runtime_error("captioner: cannot resolve " + host_);

    int fd = -1;
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw std::runtime_error("captioner: cannot connect to " + host_);

    const std::string line = to_wire(req) + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
        const ssize_t n = ::send(fd, line.data() + sent, line.size() - sent, 0);
        if (n <= 0) {
            ::close(fd);
            throw std::runtime_error("captioner: send failed");
        }
        sent += static_cast<std::size_t>(n);
    }

    std::string reply;
    char buf[4096];
    while (reply.find('\n') == std::string::npos) {
        const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
        if (n <= 0) break;
        reply.append(buf, static_cast<std::size_t>(n));
    }
    ::close(fd);
    const auto nl = reply.find('\n');
    if (nl == std::string::npos) throw std::runtime_error("captioner: truncated response");
    return response_from_wire(reply.substr(0, nl));
}

std::unique_ptr<CaptionerBackend> default_captioner() {
    if (const char* addr = std::getenv("VIDFILL_CAPTIONER"); addr && *addr)
        return std::make_unique<TcpCaptioner>(addr);
    const char* scene = std::getenv("VIDFILL_CAPTIONER_SCENE");
    return std::make_unique<MockCaptioner>(scene && *scene ? scene : "generic");
}

namespace {

std::vector<CaptionFrame> sample_frames(const VideoTensor& video, std::size_t count) {
    std::vector<std::size_t> picks;
    if (video.frames <= count) {
        for (std::size_t i = 0; i < video.frames; ++i) picks.push_back(i);
    } else {
        for (std::size_t i = 0; i < count; ++i)
            picks.push_back(i * (video.frames - 1) / (count - 1));
        picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
    }
    std::vector<CaptionFrame> frames;
    frames.reserve(picks.size());
    for (std::size_t idx : picks) {
        CaptionFrame f;
        f.index = idx;
        f.height = video.height;
        f.width = video.width;
        f.channels = video.channels;
        f.data.resize(f.height * f.width * f.channels);
        std::copy_n(video.data.begin() + static_cast<std::ptrdiff_t>(video.index(idx, 0, 0, 0)),
                    f.data.size(), f.data.begin());
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace

std::vector<std::string> detect_objects(const VideoTensor& video, CaptionerBackend& backend,
                                        std::size_t sample_count, std::size_t retries) {
    require(video.frames >= 1 && video.size() > 0, "detect_objects: empty video");
    CaptionRequest req;
    req.role = "detect";
    req.frames = sample_frames(video, sample_count);

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
        try {
            CaptionResponse resp = backend.handle(req);
            if (resp.object_names.empty()) throw std::runtime_error("empty object list");
            return resp.object_names;
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    throw std::runtime_error("captioner backend failed after " + std::to_string(retries + 1) +
                             " attempts: " + last_error);
}

std::string generate_prompt(const VideoTensor& video, const std::string& object_name,
                            CaptionerBackend& backend, std::ostream* warn) {
    const std::vector<std::string> names = detect_objects(video, backend);
    if (std::find(names.begin(), names.end(), object_name) == names.end() && warn)
        *warn << "warning: object '" << object_name << "' not among detected objects\n";

    CaptionRequest req;
    req.role = "describe_excluding";
    req.frames = sample_frames(video, 8);
    req.object = object_name;

    std::string last_error;
    for (std::size_t attempt = 0; attempt < 3; ++attempt) {
        try {
            return backend.handle(req).text;
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    throw std::runtime_error("captioner backend failed after 3 attempts: " + last_error);
}

cps::WindowVelocityModel make_velocity_model(const ckpt::Checkpoint& ck,
                                             const dit::PromptEmbedding& prompt,
                                             double guidance) {
    const dit::PromptEmbedding uncond =
        dit::PromptEmbedding::zeros(ck.model.n_txt, ck.model.d_txt);
    return [&ck, prompt, uncond, guidance](const LatentGrid& z, const LatentGrid& cmv,
                                           const LatentMask& cm, double t) {
        dit::DenoiserInput input;
        input.noisy = z;
        input.cond_video = cmv;
        input.cond_mask = cm;
        input.timestep = t;
        if (ck.student) {
            input.prompt = prompt;
            input.guidance = guidance;
            return dit::forward(ck.params, ck.model, input);
        }
        input.prompt = prompt;
        const LatentGrid v_c = dit::forward(ck.params, ck.model, input);
        if (guidance == 1.0) return v_c;
        input.prompt = uncond;
        const LatentGrid v_u = dit::forward(ck.params, ck.model, input);
        return flow::cfg_combine(v_u, v_c, guidance);
    };
}

namespace {

template <class F>
auto stage(const char* name, F&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("inpaint[") + name + "]: " + e.what());
    }
}

}  // namespace

VideoTensor inpaint(const InpaintRequest& request, const ckpt::Checkpoint& ck,
                    InpaintDiagnostics* diag) {
    require(request.video.frames == request.mask.frames &&
                request.video.height == request.mask.height &&
                request.video.width == request.mask.width,
            "inpaint: video/mask extent mismatch");
    require(request.steps >= 1, "inpaint: steps must be >= 1");

    const codec::CodecConfig& cc = ck.codec;
    const std::size_t window = request.window == 0 ? ck.model.max_f : request.window;
    require(window >= 1 && window <= ck.model.max_f,
            "inpaint: window exceeds the model's trained length");

    auto [padded, pad_info] = stage("pad", [&] { return codec::pad_to_grid(request.video, cc); });
    const MaskVideo padded_mask =
        stage("pad", [&] { return maskops::pad_to_grid(request.mask, cc); });

    const LatentGrid c_mv = stage("encode", [&] {
        return codec::encode(maskops::apply_mask(padded, padded_mask), cc);
    });
    const LatentMask c_m = stage("mask", [&] { return maskops::to_latent_mask(padded_mask, cc); });

    const dit::PromptEmbedding prompt = stage("prompt", [&] {
        return dit::embed_prompt(request.prompt, ck.model.d_txt, ck.model.n_txt);
    });

    const cps::WindowVelocityModel model = make_velocity_model(ck, prompt, request.guidance);
    const std::size_t l = c_mv.t;

    LatentGrid z0 = stage("denoise", [&] {
        Rng rng(derive_seed(request.seed, "inpaint-noise"));
        if (l <= window) {
            if (diag) {
                diag->used_cps = false;
                diag->latent_frames = l;
                diag->padded_latent_frames = l;
                diag->window = window;
            }
            return cps::single_pass_denoise(model, c_mv, c_m, request.steps, rng);
        }
        // pad latent frames (repeat last) until 2l'-2 is a multiple of the
        // window, then crop after denoising
        LatentGrid cmv_p = c_mv;
        LatentMask cm_p = c_m;
        while ((2 * cmv_p.t - 2) % window != 0) {
            const std::size_t row = cmv_p.h * cmv_p.w * cmv_p.c;
            cmv_p.data.insert(cmv_p.data.end(), cmv_p.data.end() - static_cast<std::ptrdiff_t>(row),
                              cmv_p.data.end());
            ++cmv_p.t;
            const std::size_t mrow = cm_p.h * cm_p.w;
            cm_p.data.insert(cm_p.data.end(), cm_p.data.end() - static_cast<std::ptrdiff_t>(mrow),
                             cm_p.data.end());
            ++cm_p.t;
        }
        if (diag) {
            diag->used_cps = true;
            diag->latent_frames = l;
            diag->padded_latent_frames = cmv_p.t;
            diag->window = window;
        }
        LatentGrid full = cps::cps_denoise(model, cmv_p, cm_p, request.steps, window,
                                           request.alpha, rng, diag ? &diag->trace : nullptr);
        LatentGrid out(l, full.h, full.w, full.c);
        std::copy_n(full.data.begin(), out.data.size(), out.data.begin());
        return out;
    });

    VideoTensor decoded = stage("decode", [&] {
        VideoTensor v = codec::decode(z0, cc, request.video.channels);
        for (double& x : v.data) x = std::clamp(x, 0.0, 1.0);
        return codec::crop_to(v, pad_info);
    });

    if (!request.composite) return decoded;
    return stage("composite", [&] {
        VideoTensor out = decoded;
        for (std::size_t t = 0; t < out.frames; ++t)
            for (std::size_t y = 0; y < out.height; ++y)
                for (std::size_t x = 0; x < out.width; ++x)
                    if (request.mask.at(t, y, x))
                        for (std::size_t c = 0; c < out.channels; ++c)
                            out.at(t, y, x, c) = request.video.at(t, y, x, c);
        return out;
    });
}

}  // namespace vidfill::pipe
