#include "vidfill/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "vidfill/io.hpp"

namespace vidfill::ckpt {

namespace {

constexpr std::uint32_t kMagic = 0x4B434656;  // "VFCK"
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& b, std::size_t& off) {
    if (off + sizeof(T) > b.size()) throw std::runtime_error("truncated checkpoint");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
    off += sizeof(T);
    return static_cast<T>(v);
}

nlohmann::json config_json(const Checkpoint& ck) {
    return {{"schema", "dit-v1"},
            {"model",
             {{"d_model", ck.model.d_model},
              {"n_heads", ck.model.n_heads},
              {"depth", ck.model.depth},
              {"p_t", ck.model.p_t},
              {"p_h", ck.model.p_h},
              {"p_w", ck.model.p_w},
              {"d_txt", ck.model.d_txt},
              {"n_txt", ck.model.n_txt},
              {"max_f", ck.model.max_f},
              {"c_lat", ck.model.c_lat},
              {"freq_dim", ck.model.freq_dim},
              {"mlp_ratio", ck.model.mlp_ratio}}},
            {"codec",
             {{"s_t", ck.codec.s_t},
              {"s_h", ck.codec.s_h},
              {"s_w", ck.codec.s_w},
              {"c_lat", ck.codec.c_lat},
              {"projection_seed", ck.codec.projection_seed}}},
            {"student", ck.student}};
}

void parse_config(const nlohmann::json& j, Checkpoint& ck) {
    const auto& m = j.at("model");
    ck.model.d_model = m.at("d_model").get<std::size_t>();
    ck.model.n_heads = m.at("n_heads").get<std::size_t>();
    ck.model.depth = m.at("depth").get<std::size_t>();
    ck.model.p_t = m.at("p_t").get<std::size_t>();
    ck.model.p_h = m.at("p_h").get<std::size_t>();
    ck.model.p_w = m.at("p_w").get<std::size_t>();
    ck.model.d_txt = m.at("d_txt").get<std::size_t>();
    ck.model.n_txt = m.at("n_txt").get<std::size_t>();
    ck.model.max_f = m.at("max_f").get<std::size_t>();
    ck.model.c_lat = m.at("c_lat").get<std::size_t>();
    ck.model.freq_dim = m.at("freq_dim").get<std::size_t>();
    ck.model.mlp_ratio = m.at("mlp_ratio").get<std::size_t>();
    const auto& c = j.at("codec");
    ck.codec.s_t = c.at("s_t").get<std::size_t>();
    ck.codec.s_h = c.at("s_h").get<std::size_t>();
    ck.codec.s_w = c.at("s_w").get<std::size_t>();
    ck.codec.c_lat = c.at("c_lat").get<std::size_t>();
    ck.codec.projection_seed = c.at("projection_seed").get<std::uint64_t>();
    ck.student = j.at("student").get<bool>();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::vector<std::uint8_t> out;
    put_le<std::uint32_t>(out, kMagic);
    put_le<std::uint32_t>(out, kVersion);
    const std::string header = config_json(ck).dump();
    put_le<std::uint64_t>(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    put_le<std::uint64_t>(out, ck.params.count());
    for (std::size_t i = 0; i < ck.params.count(); ++i) {
        const std::string& name = ck.params.name(i);
        const Tensor& t = ck.params.tensor(i);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
        for (std::size_t d : t.shape) put_le<std::uint64_t>(out, d);
        for (double v : t.v) {
            const float f = static_cast<float>(v);
            std::uint32_t bits = 0;
            std::memcpy(&bits, &f, 4);
            put_le<std::uint32_t>(out, bits);
        }
    }
    io::write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const auto bytes = io::read_file_bytes(path);
    std::size_t off = 0;
    if (get_le<std::uint32_t>(bytes, off) != kMagic)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (get_le<std::uint32_t>(bytes, off) != kVersion)
        throw std::runtime_error("unsupported checkpoint version: " + path);
    const std::uint64_t hlen = get_le<std::uint64_t>(bytes, off);
    if (off + hlen > bytes.size()) throw std::runtime_error("truncated checkpoint: " + path);
    Checkpoint ck;
    try {
        parse_config(nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                           bytes.begin() + static_cast<std::ptrdiff_t>(off + hlen)),
                     ck);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad checkpoint header: " + std::string(e.what()));
    }
    off += hlen;
    const std::uint64_t n_params = get_le<std::uint64_t>(bytes, off);
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::uint16_t nlen = get_le<std::uint16_t>(bytes, off);
        if (off + nlen > bytes.size()) throw std::runtime_error("truncated checkpoint: " + path);
        std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                         bytes.begin() + static_cast<std::ptrdiff_t>(off + nlen));
        off += nlen;
        const std::uint8_t rank = get_le<std::uint8_t>(bytes, off);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(bytes, off));
        Tensor& t = ck.params.add(name, shape);
        for (double& v : t.v) {
            const std::uint32_t bits = get_le<std::uint32_t>(bytes, off);
            float f = 0.0f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
    }
    if (off != bytes.size()) throw std::runtime_error("trailing bytes in checkpoint: " + path);
    return ck;
}

}  // namespace vidfill::ckpt
