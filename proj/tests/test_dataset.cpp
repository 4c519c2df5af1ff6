#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "attnconv/dataset.hpp"
#include "attnconv/synth.hpp"

using namespace attnconv;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("attnconv_test_dataset_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

const char* kValid = R"({
 "labels": ["rail", "clip", "bolt"],
 "images": [{"id": "a", "file": "images/a.ppm", "width": 4, "height": 4}],
 "annotations": [{"image_id": "a", "category": "bolt", "cx": 0.5, "cy": 0.5, "w": 0.25, "h": 0.25}]
})";

void expect_parse_error(const std::string& text, const std::string& fragment) {
    try {
        DatasetManifest::parse(text, "m.json");
        FAIL("expected ParseError for: " << text);
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK_MESSAGE(msg.find(fragment) != std::string::npos, msg);
    }
}

}  // namespace

TEST_CASE("manifest parse and serialize round trip") {
    const auto m = DatasetManifest::parse(kValid);
    REQUIRE(m.images.size() == 1);
    CHECK(m.annotations[0].category == "bolt");
    CHECK(m.annotations[0].box == Box{0.5, 0.5, 0.25, 0.25});
    CHECK(DatasetManifest::parse(m.serialize()) == m);
    CHECK(DatasetManifest::parse(m.serialize()).serialize() == m.serialize());
}

TEST_CASE("random boxes survive a serialize round trip bit for bit") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.01, 0.49);
    DatasetManifest m;
    m.images.push_back({"x", "x.ppm", 8, 8});
    for (int i = 0; i < 200; ++i) {
        const double w = u(rng), h = u(rng);
        m.annotations.push_back({"x", "clip", Box{0.5 + u(rng) - 0.25, 0.5, w, h}});
    }
    CHECK(DatasetManifest::parse(m.serialize()) == m);
}

TEST_CASE("malformed manifests name the offending location") {
    expect_parse_error("{\n \"images\": [\n", "m.json:");
    expect_parse_error("[]", "top level");
    expect_parse_error(R"({"annotations": []})", "images");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": 4}], "annotations": []})",
                       "images[0]: missing field 'height'");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": "4", "height": 4}], "annotations": []})",
                       "images[0].width: wrong type");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": 4, "height": 4},
                                      {"id": "a", "file": "g", "width": 4, "height": 4}], "annotations": []})",
                       "duplicate image id");
    expect_parse_error(R"({"images": [], "annotations": [{"image_id": "z", "category": "bolt",
                       "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}]})",
                       "annotations[0].image_id");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": 4, "height": 4}], "annotations": [
                       {"image_id": "a", "category": "sleeper", "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}]})",
                       "'sleeper' is not in the label set");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": 4, "height": 4}], "annotations": [
                       {"image_id": "a", "category": "bolt", "cx": 1.05, "cy": 0.5, "w": 0.2, "h": 0.1}]})",
                       "box outside");
    expect_parse_error(R"({"images": [{"id": "a", "file": "f", "width": 4, "height": 4}], "annotations": [
                       {"image_id": "a", "category": "bolt", "cx": 0.5, "cy": 0.5, "w": 0.0, "h": 0.1}]})",
                       "positive width");
}

TEST_CASE("save and load scenes") {
    const auto dir = temp_dir("scenes");
    std::vector<SceneAnnotation> scenes;
    for (int i = 0; i < 5; ++i) {
        auto rng = scene_rng(2, 0, i);
        scenes.push_back(generate_scene(SynthConfig{}, rng));
    }
    const auto m = save_scenes(scenes, dir, "unit");
    m.save(dir / "unit.json");
    const auto loaded = load_scenes(DatasetManifest::load(dir / "unit.json"), dir);
    REQUIRE(loaded.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(loaded[i].source_id == m.images[i].id);
        REQUIRE(loaded[i].components.size() == scenes[i].components.size());
        for (size_t k = 0; k < scenes[i].components.size(); ++k) {
            CHECK(loaded[i].components[k].category == scenes[i].components[k].category);
            CHECK(loaded[i].components[k].box == scenes[i].components[k].box);
        }
        for (size_t p = 0; p < scenes[i].image.pixels.size(); ++p)
            CHECK(std::abs(loaded[i].image.pixels[p] - scenes[i].image.pixels[p]) <= 0.5 / 255 + 1e-12);
    }
    for (const auto& e : std::filesystem::directory_iterator(dir / "images"))
        CHECK(e.path().extension() == ".ppm");

    auto bad = m;
    bad.images[0].width = 3;
    CHECK_THROWS_AS(load_scenes(bad, dir), ParseError);
    bad = m;
    bad.images[0].file = "images/nope.ppm";
    CHECK_THROWS_AS(load_scenes(bad, dir), IoError);
    CHECK_THROWS_AS(DatasetManifest::load(dir / "missing.json"), IoError);
}

TEST_CASE("atomic writes and hashing") {
    const auto dir = temp_dir("atomic");
    write_file_atomic(dir / "sub" / "f.txt", "hello");
    CHECK(std::filesystem::exists(dir / "sub" / "f.txt"));
    CHECK_FALSE(std::filesystem::exists(dir / "sub" / "f.txt.tmp"));
    write_file_atomic(dir / "g.txt", "hello");
    CHECK(file_hash(dir / "sub" / "f.txt") == file_hash(dir / "g.txt"));
    write_file_atomic(dir / "g.txt", "hellp");
    CHECK(file_hash(dir / "sub" / "f.txt") != file_hash(dir / "g.txt"));
    // FNV-1a of the empty input is the offset basis.
    write_file_atomic(dir / "e.txt", "");
    CHECK(file_hash(dir / "e.txt") == "cbf29ce484222325");
}
