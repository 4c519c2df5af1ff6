#include <doctest.h>

#include <random>
#include <sstream>

#include "attnconv/augment.hpp"
#include "attnconv/synth.hpp"

using namespace attnconv;

namespace {

Box random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> c(0.0, 1.0), w(0.01, 0.5);
    Box b{c(rng), c(rng), w(rng), w(rng)};
    b.w = std::min(b.w, 2 * std::min(b.cx, 1 - b.cx));
    b.h = std::min(b.h, 2 * std::min(b.cy, 1 - b.cy));
    return b;
}

SceneAnnotation gray_scene(int h, int w, double v = 0.5) {
    SceneAnnotation s;
    s.image = Image(h, w, v);
    s.source_id = "gray";
    return s;
}

bool in_unit(const Box& b) {
    const double e = 1e-12;
    return b.x0() >= -e && b.x1() <= 1 + e && b.y0() >= -e && b.y1() <= 1 + e && b.w > 0 && b.h > 0;
}

void check_valid(const SceneAnnotation& s) {
    for (double p : s.image.pixels) CHECK((p >= 0.0 && p <= 1.0));
    for (const auto& c : s.components) CHECK(in_unit(c.box));
}

}  // namespace

TEST_CASE("mirror flip") {
    std::mt19937_64 rng(1);
    SynthConfig cfg;
    for (int t = 0; t < 20; ++t) {
        const SceneAnnotation s = generate_scene(cfg, rng);
        const SceneAnnotation f = mirror_flip(s);
        for (size_t i = 0; i < s.components.size(); ++i) {
            CHECK(f.components[i].box.cx == 1.0 - s.components[i].box.cx);
            CHECK(f.components[i].box.w == s.components[i].box.w);
        }
        CHECK(f.image.at(0, 3, 0) == s.image.at(0, 3, s.image.width - 1));
        const SceneAnnotation ff = mirror_flip(f);
        CHECK(ff.image == s.image);
        for (size_t i = 0; i < s.components.size(); ++i)
            CHECK(std::abs(ff.components[i].box.cx - s.components[i].box.cx) < 1e-15);
        check_valid(f);
    }
    SceneAnnotation c = gray_scene(4, 4);
    c.components.push_back({kBolt, Box{0.5, 0.3, 0.2, 0.2}});
    c.components.push_back({kClip, Box{0.2, 0.3, 0.2, 0.2}});
    const auto f = mirror_flip(c);
    CHECK(f.components[0].box.cx == 0.5);
    CHECK(f.components[1].box.cx == 0.8);
}

TEST_CASE("rescale keeps boxes bit-identical") {
    std::mt19937_64 rng(2);
    const SceneAnnotation s = generate_scene(SynthConfig{}, rng);
    const SceneAnnotation r = rescale(s, 640, 640);
    CHECK(r.image.height == 640);
    CHECK(r.image.width == 640);
    REQUIRE(r.components.size() == s.components.size());
    for (size_t i = 0; i < s.components.size(); ++i) CHECK(r.components[i].box == s.components[i].box);
    CHECK(rescale(s, s.image.height, s.image.width).image == s.image);
    check_valid(rescale(s, 50, 77));
}

TEST_CASE("exposure and saturation") {
    SceneAnnotation s = gray_scene(3, 3, 0.6);
    CHECK(adjust_exposure(s, 1.0).image == s.image);
    for (double v : adjust_exposure(s, 2.0).image.pixels) CHECK(v == 1.0);
    CHECK_THROWS(adjust_exposure(s, 0.0));

    std::mt19937_64 rng(3);
    const SceneAnnotation g = generate_scene(SynthConfig{}, rng);
    CHECK(adjust_saturation(g, 1.0).image == g.image);
    const auto gray = adjust_saturation(g, 0.0).image;
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) {
            CHECK(gray.at(0, y, x) == gray.at(1, y, x));
            CHECK(gray.at(1, y, x) == gray.at(2, y, x));
            const double luma = 0.299 * g.image.at(0, y, x) + 0.587 * g.image.at(1, y, x) + 0.114 * g.image.at(2, y, x);
            CHECK(std::abs(gray.at(0, y, x) - luma) < 1e-12);
        }
    check_valid(adjust_saturation(g, 3.0));
    check_valid(adjust_exposure(g, 1.7));
}

TEST_CASE("stitcher box map matches the quadrant formula") {
    std::mt19937_64 rng(4);
    int boxes = 0;
    while (boxes < 1000) {
        std::vector<SceneAnnotation> four;
        for (int q = 0; q < 4; ++q) {
            SceneAnnotation s = gray_scene(16 + 2 * q, 20);
            for (int k = 0; k < 5; ++k) s.components.push_back({static_cast<int>(rng() % 3), random_box(rng)});
            four.push_back(s);
        }
        const SceneAnnotation m = stitcher(four);
        CHECK(m.image.height == 2 * 10);  // mean height 19 → halves 9.5 → rounded 10
        CHECK(m.image.width == 20);
        size_t k = 0;
        for (int q = 0; q < 4; ++q) {
            const double qx = q % 2 == 1 ? 0.5 : 0.0, qy = q >= 2 ? 0.5 : 0.0;
            for (const auto& c : four[static_cast<size_t>(q)].components) {
                const Box& got = m.components[k++].box;
                CHECK(got.cx == c.box.cx / 2 + qx);
                CHECK(got.cy == c.box.cy / 2 + qy);
                CHECK(got.w == c.box.w / 2);
                CHECK(got.h == c.box.h / 2);
                ++boxes;
            }
        }
        check_valid(m);
    }
    std::vector<SceneAnnotation> tl(4, gray_scene(8, 8));
    tl[0].components.push_back({kBolt, Box{0.5, 0.5, 0.2, 0.2}});
    const auto st = stitcher(tl);
    CHECK(st.components[0].box == Box{0.25, 0.25, 0.1, 0.1});
    for (double v : st.image.pixels) CHECK(v == 0.5);
    CHECK(st.image.height == 8);
    CHECK_THROWS_AS(stitcher(std::vector<SceneAnnotation>(3, gray_scene(8, 8))), ConfigError);
}

TEST_CASE("stitcher conserves per-category counts") {
    std::mt19937_64 rng(5);
    std::vector<SceneAnnotation> four;
    std::array<int, 3> counts{};
    for (int q = 0; q < 4; ++q) {
        four.push_back(generate_scene(SynthConfig{}, rng));
        for (const auto& c : four.back().components) ++counts[static_cast<size_t>(c.category)];
    }
    std::array<int, 3> got{};
    for (const auto& c : stitcher(four).components) ++got[static_cast<size_t>(c.category)];
    CHECK(got == counts);
}

TEST_CASE("truncation predicate") {
    CHECK(is_truncated(Box{0.05, 0.5, 0.1, 0.1}));
    CHECK(is_truncated(Box{0.5, 0.95, 0.1, 0.1}));
    CHECK_FALSE(is_truncated(Box{0.5, 0.5, 0.1, 0.1}));
}

TEST_CASE("pixel rect round trip") {
    for (int x0 = 0; x0 < 30; x0 += 7)
        for (int w = 1; w < 20; w += 5) {
            const PixelRect r{x0, 3, w, 4};
            const PixelRect back = box_to_pixels(pixels_to_box(r, 64, 48), 64, 48);
            CHECK(back.x0 == r.x0);
            CHECK(back.w == r.w);
            CHECK(back.y0 == r.y0);
            CHECK(back.h == r.h);
        }
}

TEST_CASE("copy paste examples") {
    std::mt19937_64 rng(6);
    SceneAnnotation plain = gray_scene(64, 64);
    plain.components.push_back({kRail, Box{0.5, 0.5, 0.2, 1.0}});
    plain.components.push_back({kClip, Box{0.3, 0.5, 0.1, 0.1}});
    const auto same = copy_paste(plain, rng);
    CHECK(same.components.size() == 2);
    CHECK(same.image == plain.image);

    SceneAnnotation one = gray_scene(128, 128, 0.2);
    const PixelRect pr{10, 10, 8, 8};
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) one.image.at(c, 10 + y, 10 + x) = 0.9;
    one.components.push_back({kBolt, pixels_to_box(pr, 128, 128)});
    const auto three = copy_paste(one, rng);
    REQUIRE(three.components.size() == 3);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = i + 1; j < 3; ++j)
            CHECK(intersection_area(three.components[i].box, three.components[j].box) == 0.0);
    // The stored box re-derived from the pixels: the pasted patch is exactly there.
    for (size_t i = 1; i < 3; ++i) {
        const PixelRect r = box_to_pixels(three.components[i].box, 128, 128);
        CHECK(r.w == 8);
        CHECK(r.h == 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(three.image.at(1, r.y0 + y, r.x0 + x) == 0.9);
    }

    // A scene whose free space cannot host the patch.
    SceneAnnotation full = gray_scene(32, 32);
    full.components.push_back({kBolt, Box{0.25, 0.5, 0.5, 1.0}});
    full.components.push_back({kRail, Box{0.75, 0.5, 0.5, 1.0}});
    CHECK(copy_paste(full, rng).components.size() == 2);
}

TEST_CASE("copy paste never overlaps over seeded scenes") {
    SynthConfig cfg;
    cfg.truncation_prob = 0.5;
    int pasted = 0;
    for (int t = 0; t < 500; ++t) {
        std::mt19937_64 rng(1000 + t);
        const SceneAnnotation s = generate_scene(cfg, rng);
        const SceneAnnotation o = copy_paste(s, rng);
        for (size_t i = s.components.size(); i < o.components.size(); ++i) {
            ++pasted;
            CHECK(in_unit(o.components[i].box));
            for (size_t j = 0; j < o.components.size(); ++j)
                if (j != i) CHECK(intersection_area(o.components[i].box, o.components[j].box) == 0.0);
        }
    }
    CHECK(pasted > 500);
}

TEST_CASE("policy parsing") {
    std::istringstream is("# comment\nmirror_flip 0.5\nexposure, 0.3, 0.8, 1.2\nmax_components 40\n");
    const auto p = AugmentPolicy::parse(is);
    REQUIRE(p.entries.size() == 2);
    CHECK(p.max_components == 40);
    CHECK(p.find("exposure")->hi == 1.2);
    CHECK(p.find("stitcher") == nullptr);
    std::ostringstream os;
    p.write(os);
    std::istringstream back(os.str());
    const auto q = AugmentPolicy::parse(back);
    CHECK(q.entries.size() == 2);
    CHECK(q.find("exposure")->lo == 0.8);

    std::istringstream bad1("blur 0.5\n"), bad2("mirror_flip 1.5\n"), bad3("exposure 0.5 2 1\n");
    CHECK_THROWS_AS(AugmentPolicy::parse(bad1), ConfigError);
    CHECK_THROWS_AS(AugmentPolicy::parse(bad2), ConfigError);
    CHECK_THROWS_AS(AugmentPolicy::parse(bad3), ConfigError);
}

TEST_CASE("augment pipeline") {
    std::mt19937_64 rng(7);
    std::vector<SceneAnnotation> pool;
    for (int i = 0; i < 20; ++i) pool.push_back(generate_scene(SynthConfig{}, rng));

    AugmentPolicy zero = AugmentPolicy::defaults();
    for (auto& e : zero.entries) e.probability = 0.0;
    const auto id = augment_pipeline(pool[0], rng, zero, pool);
    CHECK(id.image == pool[0].image);
    CHECK(id.components.size() == pool[0].components.size());

    std::mt19937_64 a(11), b(11);
    const auto pa = augment_pipeline(pool[1], a, AugmentPolicy::defaults(), pool);
    const auto pb = augment_pipeline(pool[1], b, AugmentPolicy::defaults(), pool);
    CHECK(pa.image == pb.image);
    CHECK(pa.components.size() == pb.components.size());

    CHECK_THROWS_AS(augment_pipeline(pool[0], rng, AugmentPolicy::defaults(), std::span(pool).first(3)), ConfigError);
}

TEST_CASE("default policy roughly doubles component count") {
    std::vector<SceneAnnotation> pool;
    for (int i = 0; i < 200; ++i) {
        auto r = scene_rng(7, 0, i);
        pool.push_back(generate_scene(SynthConfig{}, r));
    }
    size_t before = 0, after = 0;
    std::mt19937_64 rng(8);
    for (const auto& s : pool) {
        before += s.components.size();
        const auto out = augment_pipeline(s, rng, AugmentPolicy::defaults(), pool);
        check_valid(out);
        after += out.components.size();
    }
    const double ratio = static_cast<double>(after) / static_cast<double>(before);
    MESSAGE("component ratio " << ratio);
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.5);
}
