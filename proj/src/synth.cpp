#include "attnconv/synth.hpp"

#include <algorithm>
#include <cmath>

#include "attnconv/dataset.hpp"

namespace attnconv {

namespace {

constexpr int kGapPx = 2;     // between rail, clip and bolt
constexpr int kMarginPx = 2;  // outer margin beside a bolt

int px(double frac, int size) { return std::max(1, static_cast<int>(std::lround(frac * size))); }

struct Layout {
    int rail_w_min, rail_w_max;
    int clip_w, clip_h, bolt;
    int side_need;  // pixels needed beside the rail on each side
};

Layout layout_of(const SynthConfig& cfg) {
    Layout l{};
    l.rail_w_min = px(cfg.rail_width_min, cfg.width);
    l.rail_w_max = px(cfg.rail_width_max, cfg.width);
    l.clip_w = px(cfg.clip_width, cfg.width);
    l.clip_h = px(cfg.clip_height, cfg.height);
    l.bolt = px(cfg.bolt_size, std::min(cfg.width, cfg.height));
    l.side_need = kGapPx + l.clip_w + kGapPx + l.bolt + kMarginPx;
    return l;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(std::mt19937_64& rng, double p) { return p > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// Low-frequency value noise: bilinear upsample of a coarse random grid.
std::vector<double> smooth_noise(int h, int w, int grid, std::mt19937_64& rng) {
    std::vector<double> g(static_cast<size_t>((grid + 1) * (grid + 1)));
    for (auto& v : g) v = uniform(rng, -1.0, 1.0);
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) / h * grid;
        const int y0 = static_cast<int>(fy);
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / w * grid;
            const int x0 = static_cast<int>(fx);
            const double tx = fx - x0;
            const auto at = [&](int gy, int gx) { return g[static_cast<size_t>(gy * (grid + 1) + gx)]; };
            out[static_cast<size_t>(y) * w + x] = (at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx) * (1 - ty) +
                                                  (at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx) * ty;
        }
    }
    return out;
}

struct Painter {
    Image& img;
    std::vector<int>& owner;

    void set(int x, int y, int who, double r, double g, double b) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        img.at(0, y, x) = r;
        img.at(1, y, x) = g;
        img.at(2, y, x) = b;
        owner[static_cast<size_t>(y) * img.width + x] = who;
    }
};

// Full-height band with darker flanks and a bright running surface.
void draw_rail(Painter& p, int x0, int w, int who, double tint) {
    for (int y = 0; y < p.img.height; ++y)
        for (int x = x0; x < x0 + w; ++x) {
            const int edge = std::min(x - x0, x0 + w - 1 - x);
            double v = edge < 2 ? 0.55 : (edge < w / 4 ? 0.78 : 0.92);
            v += tint;
            p.set(x, y, who, v, v, v * 0.97);
        }
}

// C-shaped elastic clip: elliptical ring opening away from the rail.
// (gx, gy) is the top-left of the full glyph, which may lie off-image.
void draw_clip(Painter& p, int gx, int gy, int gw, int gh, bool opens_left, int who, int clip_y0, int clip_y1) {
    const double cx = gx + gw / 2.0, cy = gy + gh / 2.0;
    for (int y = std::max(gy, clip_y0); y < std::min(gy + gh, clip_y1); ++y)
        for (int x = gx; x < gx + gw; ++x) {
            const double dx = (x + 0.5 - cx) / (gw / 2.0);
            const double dy = (y + 0.5 - cy) / (gh / 2.0);
            const double r = std::sqrt(dx * dx + dy * dy);
            if (r > 1.0) continue;
            const bool open = (opens_left ? dx < -0.2 : dx > 0.2) && std::abs(dy) < 0.35;
            if (r >= 0.45 && !open) p.set(x, y, who, 0.10, 0.12, 0.18);
            else if (r < 0.45) p.set(x, y, who, 0.30, 0.32, 0.38);
        }
}

// Bolt head: warm disc with a dark hexagonal-ish core.
void draw_bolt(Painter& p, int gx, int gy, int size, int who) {
    const double c = size / 2.0;
    for (int y = gy; y < gy + size; ++y)
        for (int x = gx; x < gx + size; ++x) {
            const double dx = (x - gx + 0.5 - c) / c, dy = (y - gy + 0.5 - c) / c;
            const double r = std::sqrt(dx * dx + dy * dy);
            if (r > 1.0) continue;
            if (std::max(std::abs(dx), std::abs(dy)) < 0.42) p.set(x, y, who, 0.30, 0.24, 0.10);
            else p.set(x, y, who, 0.85, 0.70, 0.25);
        }
}

Box rect_box(int x0, int y0, int w, int h, int width, int height) {
    return pixels_to_box(PixelRect{x0, y0, w, h}, width, height);
}

}  // namespace

void SynthConfig::validate() const {
    if (height < 16 || width < 16) throw ConfigError("synth image must be at least 16x16");
    const auto in01 = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in01(rail_width_min) || !in01(rail_width_max) || rail_width_min > rail_width_max)
        throw ConfigError("rail width range must satisfy 0 < min <= max <= 1");
    if (!in01(clip_width) || !in01(clip_height) || !in01(bolt_size)) throw ConfigError("glyph sizes must lie in (0, 1]");
    if (rows_min < 0 || rows_max > 2 || rows_min > rows_max) throw ConfigError("rows range must lie within [0, 2]");
    for (double p : {clip_prob, bolt_prob, truncation_prob})
        if (p < 0.0 || p > 1.0) throw ConfigError("probabilities must lie in [0, 1]");
    if (illumination_max < 0.0 || noise_level < 0.0) throw ConfigError("illumination and noise must be nonnegative");
    const Layout l = layout_of(*this);
    if (l.rail_w_max + 2 * l.side_need > width)
        throw ConfigError("rail, clips and bolts do not fit in the image width");
    // Two rows share the height: each half must hold a full clip plus margin.
    if (2 * (l.clip_h + 2 * kMarginPx) > height || l.bolt > l.clip_h + 2 * kMarginPx + height / 4)
        throw ConfigError("fastening rows do not fit in the image height");
}

double SynthConfig::expected_clips() const { return 0.5 * (rows_min + rows_max) * 2.0 * clip_prob; }

double SynthConfig::expected_bolts() const {
    return 0.5 * (rows_min + rows_max) * 2.0 * bolt_prob * (1.0 - truncation_prob);
}

RenderedScene render_scene(const SynthConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const Layout l = layout_of(cfg);
    const int H = cfg.height, W = cfg.width;
    RenderedScene out;
    out.scene.image = Image(H, W);
    out.owner.assign(static_cast<size_t>(H) * W, -1);
    Image& img = out.scene.image;

    // Ballast background.
    const double base = uniform(rng, 0.33, 0.47);
    const double warm = uniform(rng, -0.03, 0.03);
    const auto blotch = smooth_noise(H, W, 8, rng);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double v = base + 0.07 * blotch[static_cast<size_t>(y) * W + x];
            img.at(0, y, x) = v + warm;
            img.at(1, y, x) = v;
            img.at(2, y, x) = v - warm;
        }

    Painter paint{img, out.owner};
    auto& comps = out.scene.components;

    const int rail_w = uniform_int(rng, l.rail_w_min, l.rail_w_max);
    const int rail_x0 = uniform_int(rng, l.side_need, W - l.side_need - rail_w);
    comps.push_back(Component{kRail, rect_box(rail_x0, 0, rail_w, H, W, H)});
    draw_rail(paint, rail_x0, rail_w, 0, uniform(rng, -0.06, 0.04));

    const int n_rows = uniform_int(rng, cfg.rows_min, cfg.rows_max);
    std::vector<int> slots;  // 0 = upper half, 1 = lower half
    if (n_rows == 2) slots = {0, 1};
    else if (n_rows == 1) slots = {uniform_int(rng, 0, 1)};

    const int half = H / 2;
    for (int slot : slots) {
        const bool truncated = coin(rng, cfg.truncation_prob);
        int glyph_y0;            // top of the full clip glyph (may be off-image)
        int vis_y0, vis_y1;      // visible clip rows
        if (truncated) {
            const int visible = uniform_int(rng, std::max(2, (l.clip_h * 2) / 5), std::max(2, (l.clip_h * 4) / 5));
            if (slot == 0) {
                glyph_y0 = visible - l.clip_h;
                vis_y0 = 0;
                vis_y1 = visible;
            } else {
                glyph_y0 = H - visible;
                vis_y0 = H - visible;
                vis_y1 = H;
            }
        } else {
            const int row_h = std::max(l.clip_h, l.bolt);
            const int lo = slot == 0 ? kMarginPx : half + kMarginPx;
            const int hi = slot == 0 ? half - kMarginPx - row_h : H - kMarginPx - row_h;
            const int row_y0 = uniform_int(rng, lo, std::max(lo, hi));
            glyph_y0 = row_y0 + (row_h - l.clip_h) / 2;
            vis_y0 = glyph_y0;
            vis_y1 = glyph_y0 + l.clip_h;
        }
        const int row_center2 = 2 * glyph_y0 + l.clip_h;  // twice the clip center row
        for (int side = 0; side < 2; ++side) {
            const bool left = side == 0;
            if (coin(rng, cfg.clip_prob)) {
                const int gx = left ? rail_x0 - kGapPx - l.clip_w : rail_x0 + rail_w + kGapPx;
                const int who = static_cast<int>(comps.size());
                comps.push_back(Component{kClip, rect_box(gx, vis_y0, l.clip_w, vis_y1 - vis_y0, W, H)});
                draw_clip(paint, gx, glyph_y0, l.clip_w, l.clip_h, left, who, vis_y0, vis_y1);
            }
            if (!truncated && coin(rng, cfg.bolt_prob)) {
                const int bx = left ? rail_x0 - 2 * kGapPx - l.clip_w - l.bolt
                                    : rail_x0 + rail_w + 2 * kGapPx + l.clip_w;
                const int by = std::clamp((row_center2 - l.bolt) / 2, 0, H - l.bolt);
                const int who = static_cast<int>(comps.size());
                comps.push_back(Component{kBolt, rect_box(bx, by, l.bolt, l.bolt, W, H)});
                draw_bolt(paint, bx, by, l.bolt, who);
            }
        }
    }

    // Smooth illumination gradient and sensor noise over the whole frame.
    const double amp = uniform(rng, 0.0, cfg.illumination_max);
    const double theta = uniform(rng, 0.0, 2.0 * M_PI);
    std::normal_distribution<double> noise(0.0, cfg.noise_level);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double g = 1.0 + amp * 2.0 * (std::cos(theta) * (x / double(W) - 0.5) + std::sin(theta) * (y / double(H) - 0.5));
            for (int c = 0; c < 3; ++c) {
                const double n = cfg.noise_level > 0.0 ? noise(rng) : 0.0;
                img.at(c, y, x) = std::clamp(img.at(c, y, x) * g + n, 0.0, 1.0);
            }
        }
    return out;
}

SceneAnnotation generate_scene(const SynthConfig& cfg, std::mt19937_64& rng) { return render_scene(cfg, rng).scene; }

SceneAnnotation recombine(std::span<const SceneAnnotation> pool, std::mt19937_64& rng) {
    if (pool.size() < 2) throw ConfigError("recombine needs a pool of at least 2 scenes");
    const size_t donor = std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng);
    const SceneAnnotation& base = pool[donor];
    const int W = base.image.width, H = base.image.height;

    SceneAnnotation out;
    out.image = base.image;
    out.source_id = "recombine(" + base.source_id + ")";
    const Component* rail = nullptr;
    for (const auto& c : base.components) {
        if (c.category == kRail) {
            if (!rail) rail = &c;
            out.components.push_back(c);
        }
    }
    if (!rail) throw ConfigError("recombine: donor scene '" + base.source_id + "' has no rail");

    // Paint over the donor's own clips and bolts.
    for (const auto& c : base.components) {
        if (c.category == kRail) continue;
        const PixelRect r = box_to_pixels(c.box, W, H);
        const Box rb = pixels_to_box(r, W, H);
        bool filled = false;
        for (int attempt = 0; attempt < 30 && !filled; ++attempt) {
            const auto& other = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
            if (other.image.width != W || other.image.height != H) continue;
            const bool empty = std::none_of(other.components.begin(), other.components.end(),
                                            [&](const Component& oc) { return intersection_area(oc.box, rb) > 0.0; });
            if (!empty) continue;
            paste(out.image, crop(other.image, r.x0, r.y0, r.w, r.h), r.x0, r.y0);
            filled = true;
        }
        if (!filled) {
            // Mean of the left image column as a flat stand-in.
            for (int ch = 0; ch < 3; ++ch) {
                double m = 0.0;
                for (int y = 0; y < H; ++y) m += base.image.at(ch, y, 0);
                m /= H;
                for (int y = r.y0; y < r.y0 + r.h; ++y)
                    for (int x = r.x0; x < r.x0 + r.w; ++x) out.image.at(ch, y, x) = m;
            }
        }
    }

    // Collect candidate patches from the other donors.
    struct Patch {
        int category;
        Image pixels;
    };
    std::vector<Patch> patches;
    for (size_t i = 0; i < pool.size(); ++i) {
        if (i == donor && pool.size() > 1) continue;
        for (const auto& c : pool[i].components) {
            if (c.category == kRail) continue;
            const PixelRect r = box_to_pixels(c.box, pool[i].image.width, pool[i].image.height);
            if (r.w >= W / 2 || r.h >= H / 2) continue;
            patches.push_back(Patch{c.category, crop(pool[i].image, r.x0, r.y0, r.w, r.h)});
        }
    }
    if (patches.empty()) return out;

    // As many pastes as a randomly chosen donor carries, capped at 8 (9 with the rail).
    const auto& ref = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
    int wanted = 0;
    for (const auto& c : ref.components) wanted += c.category != kRail;
    wanted = std::min(wanted, 8);

    const PixelRect rr = box_to_pixels(rail->box, W, H);
    for (int k = 0; k < wanted; ++k) {
        const Patch& p = patches[std::uniform_int_distribution<size_t>(0, patches.size() - 1)(rng)];
        for (int attempt = 0; attempt < 30; ++attempt) {
            const bool left = coin(rng, 0.5);
            // Clips hug the rail; bolts sit one clip-width further out.
            const int offset = p.category == kClip ? uniform_int(rng, 1, 4) : uniform_int(rng, 4, std::max(4, W / 6));
            const int x0 = left ? rr.x0 - offset - p.pixels.width : rr.x0 + rr.w + offset;
            if (x0 < 0 || x0 + p.pixels.width > W) continue;
            const int y0 = uniform_int(rng, 0, H - p.pixels.height);
            const PixelRect cand{x0, y0, p.pixels.width, p.pixels.height};
            const Box cb = pixels_to_box(cand, W, H);
            const bool clear = std::none_of(out.components.begin(), out.components.end(),
                                            [&](const Component& c) { return intersection_area(c.box, cb) > 0.0; });
            if (!clear) continue;
            paste(out.image, p.pixels, x0, y0);
            out.components.push_back(Component{p.category, cb});
            break;
        }
    }
    return out;
}

std::mt19937_64 scene_rng(uint64_t seed, int split, int index) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(split),
                      static_cast<uint32_t>(index)};
    return std::mt19937_64(seq);
}

void build_dataset(const SynthConfig& cfg, const SplitCounts& counts, const std::filesystem::path& out_dir) {
    cfg.validate();
    if (counts.train <= 0 || counts.val <= 0 || counts.test <= 0)
        throw ConfigError("split counts must be positive");
    const std::pair<const char*, int> splits[] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
    std::vector<SceneAnnotation> test_scenes;
    for (int s = 0; s < 3; ++s) {
        std::vector<SceneAnnotation> scenes;
        scenes.reserve(static_cast<size_t>(splits[s].second));
        for (int i = 0; i < splits[s].second; ++i) {
            auto rng = scene_rng(cfg.seed, s, i);
            scenes.push_back(generate_scene(cfg, rng));
        }
        const auto m = save_scenes(scenes, out_dir, splits[s].first);
        m.save(out_dir / (std::string(splits[s].first) + ".json"));
        if (s == 2) test_scenes = std::move(scenes);
    }
    if (counts.recombined > 0) {
        std::vector<SceneAnnotation> mixed;
        for (int i = 0; i < counts.recombined; ++i) {
            auto rng = scene_rng(cfg.seed, 3, i);
            mixed.push_back(recombine(test_scenes, rng));
        }
        save_scenes(mixed, out_dir, "recombined").save(out_dir / "recombined.json");
    }
}

}  // namespace attnconv
