#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "attnconv/augment.hpp"

namespace attnconv {

// Rendering parameters; fractions are relative to the image width/height.
struct SynthConfig {
    int height = 128;
    int width = 128;
    double rail_width_min = 0.14;
    double rail_width_max = 0.20;
    int rows_min = 1;  // fastening rows; each row holds a clip and a bolt per side
    int rows_max = 2;
    double clip_prob = 0.85;  // per side per row
    double bolt_prob = 0.85;  // per side per non-truncated row
    double clip_width = 0.16;
    double clip_height = 0.12;
    double bolt_size = 0.10;
    double truncation_prob = 0.3;  // per row: push the row past the top/bottom edge
    double illumination_max = 0.15;
    double noise_level = 0.03;
    uint64_t seed = 7;

    void validate() const;
    double expected_clips() const;
    double expected_bolts() const;
};

// Rendered scene plus a per-pixel owner map (component index, −1 for background).
struct RenderedScene {
    SceneAnnotation scene;
    std::vector<int> owner;
};

RenderedScene render_scene(const SynthConfig& cfg, std::mt19937_64& rng);
SceneAnnotation generate_scene(const SynthConfig& cfg, std::mt19937_64& rng);

// Rail band from one donor; clips and bolts cropped from other donors and
// pasted beside the rail without overlap. Donor components are painted over
// with background taken from pool scenes that are empty at that spot.
SceneAnnotation recombine(std::span<const SceneAnnotation> pool, std::mt19937_64& rng);

struct SplitCounts {
    int train = 200;
    int val = 50;
    int test = 50;
    int recombined = 0;  // extra test split built by recombine() over the test scenes
};

// RNG stream for scene `index` of split `split`, independent of generation order.
std::mt19937_64 scene_rng(uint64_t seed, int split, int index);

// Writes images/<split>_NNNNN.ppm and <split>.json under `out_dir`.
void build_dataset(const SynthConfig& cfg, const SplitCounts& counts, const std::filesystem::path& out_dir);

}  // namespace attnconv
