#include "attnconv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace attnconv {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

SceneAnnotation mirror_flip(const SceneAnnotation& s) {
    SceneAnnotation out = s;
    const Image& src = s.image;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x) out.image.at(c, y, x) = src.at(c, y, src.width - 1 - x);
    for (auto& comp : out.components) comp.box.cx = 1.0 - comp.box.cx;
    return out;
}

SceneAnnotation rescale(const SceneAnnotation& s, int height, int width) {
    if (height <= 0 || width <= 0) throw ConfigError("rescale target must be positive");
    SceneAnnotation out = s;
    out.image = resize_bilinear(s.image, height, width);
    return out;
}

SceneAnnotation adjust_exposure(const SceneAnnotation& s, double factor) {
    if (!(factor > 0.0)) throw ConfigError("exposure factor must be positive");
    SceneAnnotation out = s;
    for (auto& v : out.image.pixels) v = clamp01(v * factor);
    return out;
}

SceneAnnotation adjust_saturation(const SceneAnnotation& s, double factor) {
    if (!(factor >= 0.0)) throw ConfigError("saturation factor must be nonnegative");
    SceneAnnotation out = s;
    if (factor == 1.0) return out;
    Image& img = out.image;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double luma = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(luma + factor * (img.at(c, y, x) - luma));
        }
    return out;
}

SceneAnnotation stitcher(std::span<const SceneAnnotation> scenes) {
    if (scenes.size() != 4)
        throw ConfigError("stitcher needs exactly 4 scenes, got " + std::to_string(scenes.size()));
    double mh = 0.0, mw = 0.0;
    for (const auto& s : scenes) {
        mh += s.image.height;
        mw += s.image.width;
    }
    mh /= 4.0;
    mw /= 4.0;
    const int th = std::max(1, static_cast<int>(std::lround(mh / 2.0)));
    const int tw = std::max(1, static_cast<int>(std::lround(mw / 2.0)));

    SceneAnnotation out;
    out.image = Image(2 * th, 2 * tw);
    out.source_id = "stitch(";
    for (size_t q = 0; q < 4; ++q) {
        const int qy = static_cast<int>(q / 2), qx = static_cast<int>(q % 2);
        paste(out.image, resize_bilinear(scenes[q].image, th, tw), qx * tw, qy * th);
        for (const auto& comp : scenes[q].components) {
            const Box& b = comp.box;
            out.components.push_back(
                Component{comp.category, Box{b.cx / 2 + 0.5 * qx, b.cy / 2 + 0.5 * qy, b.w / 2, b.h / 2}});
        }
        out.source_id += (q ? "," : "") + scenes[q].source_id;
    }
    out.source_id += ")";
    return out;
}

bool is_truncated(const Box& b, double eps) {
    return b.x0() <= eps || b.x1() >= 1.0 - eps || b.y0() <= eps || b.y1() >= 1.0 - eps;
}

PixelRect box_to_pixels(const Box& b, int width, int height) {
    constexpr double tol = 1e-9;
    int x0 = static_cast<int>(std::floor(b.x0() * width + tol));
    int y0 = static_cast<int>(std::floor(b.y0() * height + tol));
    int x1 = static_cast<int>(std::ceil(b.x1() * width - tol));
    int y1 = static_cast<int>(std::ceil(b.y1() * height - tol));
    x0 = std::clamp(x0, 0, width - 1);
    y0 = std::clamp(y0, 0, height - 1);
    x1 = std::clamp(x1, x0 + 1, width);
    y1 = std::clamp(y1, y0 + 1, height);
    return PixelRect{x0, y0, x1 - x0, y1 - y0};
}

Box pixels_to_box(const PixelRect& r, int width, int height) {
    return Box{(r.x0 + r.w / 2.0) / width, (r.y0 + r.h / 2.0) / height, static_cast<double>(r.w) / width,
               static_cast<double>(r.h) / height};
}

SceneAnnotation copy_paste(const SceneAnnotation& s, std::mt19937_64& rng, const CopyPasteOptions& opts) {
    SceneAnnotation out = s;
    const int width = s.image.width, height = s.image.height;
    const size_t originals = s.components.size();
    for (size_t i = 0; i < originals; ++i) {
        const Component src = s.components[i];
        const bool pick = src.category == kBolt || (src.category == kClip && is_truncated(src.box));
        if (!pick) continue;
        const PixelRect pr = box_to_pixels(src.box, width, height);
        if (pr.w >= width || pr.h >= height) continue;
        const Image patch = crop(s.image, pr.x0, pr.y0, pr.w, pr.h);
        std::uniform_int_distribution<int> ux(0, width - pr.w);
        std::uniform_int_distribution<int> uy(0, height - pr.h);
        for (int copy = 0; copy < opts.n_copies; ++copy) {
            if (static_cast<int>(out.components.size()) >= opts.max_components) return out;
            for (int attempt = 0; attempt < opts.max_tries; ++attempt) {
                const PixelRect cand{ux(rng), uy(rng), pr.w, pr.h};
                const Box cb = pixels_to_box(cand, width, height);
                const bool clear = std::none_of(out.components.begin(), out.components.end(), [&](const Component& c) {
                    return intersection_area(c.box, cb) > 0.0;
                });
                if (!clear) continue;
                paste(out.image, patch, cand.x0, cand.y0);
                out.components.push_back(Component{src.category, cb});
                break;
            }
        }
    }
    return out;
}

// --- policy ----------------------------------------------------------------

AugmentPolicy AugmentPolicy::defaults() {
    AugmentPolicy p;
    p.entries = {
        {"mirror_flip", 0.5, 0.0, 0.0},
        {"exposure", 0.5, 0.7, 1.3},
        {"saturation", 0.5, 0.6, 1.4},
        {"stitcher", 0.2, 0.0, 0.0},
        {"copy_paste", 0.5, 2.0, 2.0},
    };
    return p;
}

AugmentPolicy AugmentPolicy::parse(std::istream& is) {
    AugmentPolicy p;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        PolicyEntry e;
        if (!(ls >> e.name)) continue;
        if (e.name == "max_components") {
            if (!(ls >> p.max_components) || p.max_components < 1)
                throw ConfigError("policy line " + std::to_string(lineno) + ": bad max_components");
            continue;
        }
        static const std::vector<std::string> known{"mirror_flip", "exposure",   "saturation",
                                                    "stitcher",    "copy_paste", "rescale"};
        if (std::find(known.begin(), known.end(), e.name) == known.end())
            throw ConfigError("policy line " + std::to_string(lineno) + ": unknown transform '" + e.name + "'");
        if (!(ls >> e.probability) || e.probability < 0.0 || e.probability > 1.0)
            throw ConfigError("policy line " + std::to_string(lineno) + ": probability must lie in [0, 1]");
        if (ls >> e.lo) {
            if (!(ls >> e.hi)) e.hi = e.lo;
        }
        if (e.hi < e.lo) throw ConfigError("policy line " + std::to_string(lineno) + ": empty parameter range");
        p.entries.push_back(e);
    }
    return p;
}

AugmentPolicy AugmentPolicy::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open policy file " + path.string());
    return parse(is);
}

const PolicyEntry* AugmentPolicy::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

void AugmentPolicy::write(std::ostream& os) const {
    os << "# name probability lo hi\n";
    os << "max_components " << max_components << "\n";
    for (const auto& e : entries) os << e.name << " " << e.probability << " " << e.lo << " " << e.hi << "\n";
}

namespace {

bool fires(const AugmentPolicy& policy, const char* name, std::mt19937_64& rng, const PolicyEntry** entry) {
    const PolicyEntry* e = policy.find(name);
    *entry = e;
    if (!e || e->probability <= 0.0) return false;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < e->probability;
}

double draw_param(const PolicyEntry& e, std::mt19937_64& rng) {
    if (e.hi <= e.lo) return e.lo;
    return std::uniform_real_distribution<double>(e.lo, e.hi)(rng);
}

SceneAnnotation photometric(const SceneAnnotation& s, std::mt19937_64& rng, const AugmentPolicy& policy) {
    SceneAnnotation out = s;
    const PolicyEntry* e = nullptr;
    if (fires(policy, "mirror_flip", rng, &e)) out = mirror_flip(out);
    if (fires(policy, "exposure", rng, &e)) out = adjust_exposure(out, draw_param(*e, rng));
    if (fires(policy, "saturation", rng, &e)) out = adjust_saturation(out, draw_param(*e, rng));
    return out;
}

}  // namespace

SceneAnnotation augment_pipeline(const SceneAnnotation& s, std::mt19937_64& rng, const AugmentPolicy& policy,
                                 std::span<const SceneAnnotation> pool) {
    const PolicyEntry* st = policy.find("stitcher");
    if (st && st->probability > 0.0 && pool.size() < 4)
        throw ConfigError("stitcher needs a pool of at least 4 scenes, got " + std::to_string(pool.size()));

    SceneAnnotation out = photometric(s, rng, policy);
    const PolicyEntry* e = nullptr;
    if (fires(policy, "stitcher", rng, &e)) {
        std::vector<SceneAnnotation> four{out};
        std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
        for (int i = 0; i < 3; ++i) four.push_back(photometric(pool[pick(rng)], rng, policy));
        size_t total = 0;
        for (const auto& f : four) total += f.components.size();
        if (total <= static_cast<size_t>(policy.max_components)) out = stitcher(four);
    }
    if (fires(policy, "copy_paste", rng, &e)) {
        CopyPasteOptions opts;
        opts.n_copies = std::max(0, static_cast<int>(std::lround(draw_param(*e, rng))));
        opts.max_components = policy.max_components;
        out = copy_paste(out, rng, opts);
    }
    if (fires(policy, "rescale", rng, &e)) {
        out = rescale(out, static_cast<int>(std::lround(e->lo)), static_cast<int>(std::lround(e->hi)));
    }
    return out;
}

}  // namespace attnconv
