#pragma once

#include <filesystem>
#include <istream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attnconv/backbone.hpp"
#include "attnconv/heads.hpp"
#include "attnconv/image.hpp"

namespace attnconv {

struct SceneAnnotation {
    Image image;
    std::vector<Component> components;
    std::string source_id;
};

SceneAnnotation mirror_flip(const SceneAnnotation& s);
SceneAnnotation rescale(const SceneAnnotation& s, int height, int width);
SceneAnnotation adjust_exposure(const SceneAnnotation& s, double factor);
SceneAnnotation adjust_saturation(const SceneAnnotation& s, double factor);

// 2×2 mosaic of four scenes (TL, TR, BL, BR in input order), each resampled to
// half the mean size; box (cx, cy, w, h) ↦ (cx/2 + qx, cy/2 + qy, w/2, h/2).
SceneAnnotation stitcher(std::span<const SceneAnnotation> scenes);

// Clip whose box touches an image border within `eps`.
bool is_truncated(const Box& b, double eps = 1e-6);

struct CopyPasteOptions {
    int n_copies = 2;
    int max_tries = 30;
    int max_components = 50;  // never grow a scene past the prediction-set size
};

// Every bolt and truncated clip is cropped unscaled and pasted up to n_copies
// times at uniformly drawn pixel positions whose box has zero intersection
// area with every current component. Gives up quietly when space runs out.
SceneAnnotation copy_paste(const SceneAnnotation& s, std::mt19937_64& rng, const CopyPasteOptions& opts = {});

// Pixel rectangle covering a normalized box (outward rounding, clamped).
struct PixelRect {
    int x0, y0, w, h;
};
PixelRect box_to_pixels(const Box& b, int width, int height);
Box pixels_to_box(const PixelRect& r, int width, int height);

struct PolicyEntry {
    std::string name;
    double probability = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// One transform per line: `name probability [lo hi]`, commas or spaces as
// separators, '#' starts a comment. Known names: mirror_flip, exposure,
// saturation, stitcher, copy_paste (lo = copies), rescale (lo = H, hi = W).
struct AugmentPolicy {
    std::vector<PolicyEntry> entries;
    int max_components = 50;

    static AugmentPolicy defaults();
    static AugmentPolicy parse(std::istream& is);
    static AugmentPolicy load(const std::filesystem::path& path);
    const PolicyEntry* find(const std::string& name) const;
    void write(std::ostream& os) const;
};

// Photometric/geometric transforms apply per source scene first, then the
// stitcher (partners drawn from `pool`), then copy-paste, then rescale.
SceneAnnotation augment_pipeline(const SceneAnnotation& s, std::mt19937_64& rng, const AugmentPolicy& policy,
                                 std::span<const SceneAnnotation> pool = {});

}  // namespace attnconv
