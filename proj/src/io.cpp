#include "vidfill/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "tensor file formats assume a little-endian host");

namespace vidfill::io {

namespace {

constexpr std::uint32_t kVideoMagic = 0x54565646;  // "FVVT" bytes, reads as VFVT le
constexpr std::uint32_t kMaskMagic = 0x4B4D4656;   // "VFMK"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& off,
                      const std::string& path) {
    if (off + 4 > b.size()) throw std::runtime_error("truncated tensor file: " + path);
    std::uint32_t v = 0;
    std::memcpy(&v, b.data() + off, 4);
    off += 4;
    return v;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const std::streamsize n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!f) throw std::runtime_error("read failed: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_video_file(const std::string& path, const VideoTensor& video) {
    std::vector<std::uint8_t> out;
    out.reserve(24 + video.size() * 4);
    put_u32(out, kVideoMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(video.frames));
    put_u32(out, static_cast<std::uint32_t>(video.height));
    put_u32(out, static_cast<std::uint32_t>(video.width));
    put_u32(out, static_cast<std::uint32_t>(video.channels));
    // planar: one full (t,y,x) plane per channel
    for (std::size_t c = 0; c < video.channels; ++c)
        for (std::size_t t = 0; t < video.frames; ++t)
            for (std::size_t y = 0; y < video.height; ++y)
                for (std::size_t x = 0; x < video.width; ++x) {
                    const float v = static_cast<float>(video.at(t, y, x, c));
                    std::uint32_t bits = 0;
                    std::memcpy(&bits, &v, 4);
                    put_u32(out, bits);
                }
    write_file_bytes(path, out);
}

VideoTensor read_video_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t off = 0;
    if (get_u32(bytes, off, path) != kVideoMagic)
        throw std::runtime_error("not a video tensor file: " + path);
    if (get_u32(bytes, off, path) != kVersion)
        throw std::runtime_error("unsupported video tensor version: " + path);
    const std::uint32_t T = get_u32(bytes, off, path);
    const std::uint32_t H = get_u32(bytes, off, path);
    const std::uint32_t W = get_u32(bytes, off, path);
    const std::uint32_t C = get_u32(bytes, off, path);
    VideoTensor video(T, H, W, C);
    const std::size_t expect = static_cast<std::size_t>(T) * H * W * C * 4;
    if (bytes.size() - off != expect)
        throw std::runtime_error("video tensor payload length mismatch: " + path);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    float v = 0.0f;
                    std::memcpy(&v, bytes.data() + off, 4);
                    off += 4;
                    video.at(t, y, x, c) = static_cast<double>(v);
                }
    return video;
}

void write_mask_file(const std::string& path, const MaskVideo& mask) {
    std::vector<std::uint8_t> out;
    put_u32(out, kMaskMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(mask.frames));
    put_u32(out, static_cast<std::uint32_t>(mask.height));
    put_u32(out, static_cast<std::uint32_t>(mask.width));
    const std::size_t n = mask.size();
    std::vector<std::uint8_t> packed((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (mask.data[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    out.insert(out.end(), packed.begin(), packed.end());
    write_file_bytes(path, out);
}

MaskVideo read_mask_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t off = 0;
    if (get_u32(bytes, off, path) != kMaskMagic)
        throw std::runtime_error("not a mask file: " + path);
    if (get_u32(bytes, off, path) != kVersion)
        throw std::runtime_error("unsupported mask file version: " + path);
    const std::uint32_t T = get_u32(bytes, off, path);
    const std::uint32_t H = get_u32(bytes, off, path);
    const std::uint32_t W = get_u32(bytes, off, path);
    MaskVideo mask(T, H, W, 0);
    const std::size_t n = mask.size();
    if (bytes.size() - off != (n + 7) / 8)
        throw std::runtime_error("mask payload length mismatch: " + path);
    for (std::size_t i = 0; i < n; ++i)
        mask.data[i] = (bytes[off + i / 8] >> (i % 8)) & 1u;
    return mask;
}

}  // namespace vidfill::io
