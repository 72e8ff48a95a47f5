#pragma once

#include <string>

#include "vidfill/codec.hpp"
#include "vidfill/denoiser.hpp"
#include "vidfill/params.hpp"

namespace vidfill::ckpt {

// Versioned binary container: model + codec configuration as a JSON header,
// followed by named parameter tensors as little-endian float32 payloads.
// Exact layout in docs/formats.md.
struct Checkpoint {
    dit::DenoiserConfig model;
    codec::CodecConfig codec;
    bool student = false;
    NamedTensors params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vidfill::ckpt
