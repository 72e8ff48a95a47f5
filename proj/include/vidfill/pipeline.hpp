#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vidfill/checkpoint.hpp"
#include "vidfill/cps.hpp"
#include "vidfill/flow.hpp"
#include "vidfill/tensor.hpp"

namespace vidfill::pipe {

// ---------------------------------------------------------------------------
// Captioner protocol. One JSON object per line in each direction; field-level
// documentation in docs/formats.md.
// ---------------------------------------------------------------------------

struct CaptionFrame {
    std::size_t index = 0;
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<double> data;  // (y, x, c) row-major
};

struct CaptionRequest {
    std::string role;  // "detect" | "describe_excluding"
    std::vector<CaptionFrame> frames;
    std::optional<std::string> object;
};

struct CaptionResponse {
    std::string text;
    std::vector<std::string> object_names;
};

std::string to_wire(const CaptionRequest& req);
CaptionRequest request_from_wire(const std::string& line);
std::string to_wire(const CaptionResponse& resp);
CaptionResponse response_from_wire(const std::string& line);

class CaptionerBackend {
public:
    virtual ~CaptionerBackend() = default;
    virtual CaptionResponse handle(const CaptionRequest& req) = 0;
};

// Deterministic canned backend. Scenes: "generic", "beach", "meadow",
// "street". Exclusion texts never mention the excluded object.
class MockCaptioner : public CaptionerBackend {
public:
    explicit MockCaptioner(std::string scene = "generic");
    CaptionResponse handle(const CaptionRequest& req) override;
    static std::vector<std::string> scene_names();

private:
    std::string scene_;
};

// Line-delimited JSON over TCP; address "host:port". One connection per
// request.
class TcpCaptioner : public CaptionerBackend {
public:
    explicit TcpCaptioner(std::string address);
    CaptionResponse handle(const CaptionRequest& req) override;

private:
    std::string host_;
    int port_ = 0;
};

// VIDFILL_CAPTIONER=host:port selects the TCP backend; unset falls back to the
// in-process mock (scene from VIDFILL_CAPTIONER_SCENE, default "generic").
std::unique_ptr<CaptionerBackend> default_captioner();

// Object names from a "detect" call over uniformly sampled frames.
std::vector<std::string> detect_objects(const VideoTensor& video, CaptionerBackend& backend,
                                        std::size_t sample_frames = 8, std::size_t retries = 2);

// Scene description excluding `object_name`, returned verbatim. Warns on
// `warn` when the object was not detected.
std::string generate_prompt(const VideoTensor& video, const std::string& object_name,
                            CaptionerBackend& backend, std::ostream* warn = nullptr);

// ---------------------------------------------------------------------------
// End-to-end inference.
// ---------------------------------------------------------------------------

struct InpaintRequest {
    VideoTensor video;
    MaskVideo mask;
    std::string prompt;
    bool composite = true;
    std::size_t steps = 40;
    double guidance = 3.0;
    std::uint64_t seed = 0;
    std::size_t window = 0;  // 0 = model max_f
    std::size_t alpha = 7;
};

struct InpaintDiagnostics {
    bool used_cps = false;
    std::size_t latent_frames = 0;
    std::size_t padded_latent_frames = 0;
    std::size_t window = 0;
    cps::CpsTrace trace;
};

// Velocity model bound to one conditioning set: CFG teacher pair or
// guidance-conditioned student, depending on the checkpoint.
cps::WindowVelocityModel make_velocity_model(const ckpt::Checkpoint& ck,
                                             const dit::PromptEmbedding& prompt,
                                             double guidance);

VideoTensor inpaint(const InpaintRequest& request, const ckpt::Checkpoint& ck,
                    InpaintDiagnostics* diag = nullptr);

}  // namespace vidfill::pipe
