#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidfill/tensor.hpp"

namespace vidfill::synth {

enum class SceneKind { gradient_drift, stripes, blobs, checker_flow };
enum class ObjectShape { ellipse, rectangle, polygon_blob };

const char* scene_kind_name(SceneKind k);
const char* object_shape_name(ObjectShape s);
SceneKind parse_scene_kind(const std::string& name);
ObjectShape parse_object_shape(const std::string& name);

struct SceneSpec {
    std::uint64_t seed = 0;
    SceneKind kind = SceneKind::gradient_drift;
    std::size_t frames = 17;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t channels = 3;
    double motion_amplitude = 0.02;  // bound on adjacent-frame mean abs difference
};

struct ObjectSpec {
    std::uint64_t seed = 0;
    ObjectShape shape = ObjectShape::ellipse;
    double size_frac = 0.12;   // target hole area as a fraction of frame area
    double max_step = 2.0;     // max centre shift per frame, pixels
    double deform_amp = 0.08;  // per-frame shape deformation amplitude

    double min_frac() const { return 0.55 * size_frac; }
    double max_frac() const { return 1.45 * size_frac; }
};

// Per-frame trajectory exposed for tests.
struct MaskTrace {
    std::vector<double> cx, cy;
};

// Temporally coherent procedural texture; pure function of the spec.
VideoTensor gen_background(const SceneSpec& spec);

// Keep-map with a single moving, connected hole whose area stays within
// [min_frac, max_frac] of the frame.
MaskVideo gen_object_mask(const ObjectSpec& spec, std::size_t frames, std::size_t height,
                          std::size_t width, MaskTrace* trace = nullptr);

std::string prompt_for_kind(SceneKind kind);

struct Example {
    std::size_t id = 0;
    SceneSpec scene;
    ObjectSpec object;
    std::string prompt;
    VideoTensor video;
    MaskVideo mask;
};

struct Dataset {
    std::vector<Example> examples;
};

Dataset make_dataset(std::size_t count, std::size_t frames, std::size_t height,
                     std::size_t width, std::uint64_t seed);

// Directory layout: manifest.json plus video_%04d.vft / mask_%04d.vfm files.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

double hole_area_fraction(const MaskVideo& mask, std::size_t frame);

}  // namespace vidfill::synth
