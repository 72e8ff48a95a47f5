#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidfill/params.hpp"
#include "vidfill/tensor.hpp"

namespace vidfill::dit {

struct DenoiserConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t depth = 2;
    std::size_t p_t = 1, p_h = 4, p_w = 4;  // token patch extents on the latent grid
    std::size_t d_txt = 32;
    std::size_t n_txt = 8;
    std::size_t max_f = 3;  // maximum latent frames per window
    std::size_t c_lat = 8;
    std::size_t freq_dim = 32;  // sinusoidal feature width for timestep/guidance
    std::size_t mlp_ratio = 4;

    std::size_t in_patch_dim() const { return (2 * c_lat + 1) * p_t * p_h * p_w; }
    std::size_t out_patch_dim() const { return c_lat * p_t * p_h * p_w; }
    void validate() const;
};

struct PromptEmbedding {
    std::size_t n_tokens = 0;
    std::size_t dim = 0;
    std::vector<double> data;  // (n_tokens, dim) row-major

    static PromptEmbedding zeros(std::size_t n, std::size_t d) {
        PromptEmbedding p;
        p.n_tokens = n;
        p.dim = d;
        p.data.assign(n * d, 0.0);
        return p;
    }
};

// Conditioning bundle for one forward call.
struct DenoiserInput {
    LatentGrid noisy;       // z_t
    LatentGrid cond_video;  // masked-video latent
    LatentMask cond_mask;   // keep-polarity latent mask
    double timestep = 0.0;  // in [0,1]
    PromptEmbedding prompt;
    std::optional<double> guidance;  // distilled student only
};

// Whitespace tokenization, each token hashed to a seeded vector, padded or
// truncated to n_txt tokens. Empty text falls back to "background scene".
PromptEmbedding embed_prompt(const std::string& text, std::size_t d_txt, std::size_t n_txt);

// Training initialization: seeded scaled-normal weights with the output
// projection, per-block modulation, and guidance pathway zeroed so the fresh
// model predicts zero velocity.
NamedTensors init_params(const DenoiserConfig& cfg, std::uint64_t seed);

// Fully random parameters (no zero-init paths); used by tests that need every
// pathway active.
NamedTensors random_params(const DenoiserConfig& cfg, std::uint64_t seed, double scale = 0.25);

std::size_t param_count(const NamedTensors& params);

// Token sequence for the channel-concatenated (noisy | cond_video | mask)
// grid: (t/p_t)*(h/p_h)*(w/p_w) rows of in_patch_dim values.
std::vector<double> patchify(const LatentGrid& noisy, const LatentGrid& cond_video,
                             const LatentMask& cond_mask, const DenoiserConfig& cfg,
                             std::size_t& n_tokens_out);

LatentGrid unpatchify(const std::vector<double>& tokens, std::size_t t, std::size_t h,
                      std::size_t w, const DenoiserConfig& cfg);

// Factorized sinusoidal position encodings over (t, h, w); (n_tokens, d_model).
std::vector<double> position_encodings(std::size_t gt, std::size_t gh, std::size_t gw,
                                       std::size_t d_model);

// One self-attention sublayer (QKV, softmax, output projection) over a raw
// (n, d_model) token matrix using parameters under `prefix` (e.g. "block0.attn").
std::vector<double> self_attention(const std::vector<double>& tokens, std::size_t n,
                                   const NamedTensors& params, const std::string& prefix,
                                   const DenoiserConfig& cfg);

// Predicted rectified-flow velocity, same extents as input.noisy.
LatentGrid forward(const NamedTensors& params, const DenoiserConfig& cfg,
                   const DenoiserInput& input);

struct TrainSample {
    DenoiserInput input;
    LatentGrid target;  // velocity target
    HoleMap hole;       // dilated hole map (stage-2 weighting)
};

// stage 1: mean squared error over all latent elements; stage 2: squared
// error weighted elementwise by (1 + hole) then averaged.
double focal_loss(const LatentGrid& pred, const LatentGrid& target, const HoleMap& hole,
                  int stage);

// Batch-mean loss (per focal_loss) and exact parameter gradients.
std::pair<double, NamedTensors> loss_and_gradients(const NamedTensors& params,
                                                   const DenoiserConfig& cfg,
                                                   std::span<const TrainSample> batch, int stage);

}  // namespace vidfill::dit
