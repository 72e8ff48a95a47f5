#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidfill/tensor.hpp"

namespace vidfill::io {

// Raw tensor container formats (documented in docs/formats.md):
//   video  "VFVT": u32 magic, u32 version, u32 T,H,W,C, then C planes of
//                  T*H*W little-endian float32 values.
//   mask   "VFMK": u32 magic, u32 version, u32 T,H,W, then packed bits in
//                  (t,y,x) row-major order, LSB first, zero-padded last byte.

void write_video_file(const std::string& path, const VideoTensor& video);
VideoTensor read_video_file(const std::string& path);

void write_mask_file(const std::string& path, const MaskVideo& mask);
MaskVideo read_mask_file(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vidfill::io
