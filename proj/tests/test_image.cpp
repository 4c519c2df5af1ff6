#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "attnconv/image.hpp"

using namespace attnconv;

namespace {

Image random_image(int h, int w, std::mt19937_64& rng) {
    Image img(h, w);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& p : img.pixels) p = u(rng);
    return img;
}

std::filesystem::path temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "attnconv_test_image";
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("resize to own size is an exact copy") {
    std::mt19937_64 rng(1);
    const Image img = random_image(9, 13, rng);
    CHECK(resize_bilinear(img, 9, 13) == img);
}

TEST_CASE("resize of a constant image stays constant") {
    Image img(10, 6, 0.37);
    const Image r = resize_bilinear(img, 17, 4);
    CHECK(r.height == 17);
    CHECK(r.width == 4);
    for (double v : r.pixels) CHECK(std::abs(v - 0.37) < 1e-15);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 3), DimensionError);
}

TEST_CASE("downsampling by two averages 2x2 blocks") {
    // Half-pixel centers put each output sample midway between four inputs.
    std::mt19937_64 rng(2);
    const Image img = random_image(8, 8, rng);
    const Image r = resize_bilinear(img, 4, 4);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const double avg = (img.at(c, 2 * y, 2 * x) + img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y, 2 * x + 1) +
                                    img.at(c, 2 * y + 1, 2 * x + 1)) / 4;
                CHECK(std::abs(r.at(c, y, x) - avg) < 1e-12);
            }
}

TEST_CASE("crop and paste") {
    std::mt19937_64 rng(3);
    const Image img = random_image(10, 12, rng);
    const Image patch = crop(img, 3, 2, 4, 5);
    CHECK(patch.width == 4);
    CHECK(patch.height == 5);
    CHECK(patch.at(1, 0, 0) == img.at(1, 2, 3));
    CHECK(patch.at(2, 4, 3) == img.at(2, 6, 6));
    Image dst(10, 12, 0.0);
    paste(dst, patch, 3, 2);
    CHECK(crop(dst, 3, 2, 4, 5) == patch);
    CHECK(dst.at(0, 0, 0) == 0.0);
    CHECK_THROWS_AS(crop(img, 10, 0, 4, 4), DimensionError);
    CHECK_THROWS_AS(paste(dst, patch, -1, 0), DimensionError);
}

TEST_CASE("ppm round trip is exact on quantized images") {
    std::mt19937_64 rng(4);
    Image img(7, 5);
    for (auto& p : img.pixels) p = static_cast<double>(rng() % 256) / 255.0;
    const auto path = temp_dir() / "rt.ppm";
    write_ppm(path, img);
    const Image back = read_ppm(path);
    CHECK(back == img);
    CHECK(quantize(-0.5) == 0);
    CHECK(quantize(2.0) == 255);
    CHECK(quantize(0.5) == 128);
}

TEST_CASE("ppm reader accepts P3 and rejects junk") {
    const auto dir = temp_dir();
    {
        std::ofstream os(dir / "a.ppm");
        os << "P3\n# comment\n2 1\n255\n255 0 0  0 0 255\n";
    }
    const Image img = read_ppm(dir / "a.ppm");
    CHECK(img.width == 2);
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(2, 0, 1) == 1.0);
    CHECK(img.at(1, 0, 0) == 0.0);
    {
        std::ofstream os(dir / "b.ppm");
        os << "P5\n2 2\n255\n";
    }
    CHECK_THROWS_AS(read_ppm(dir / "b.ppm"), IoError);
    {
        std::ofstream os(dir / "c.ppm", std::ios::binary);
        os << "P6\n4 4\n255\n" << std::string(10, 'x');
    }
    CHECK_THROWS_AS(read_ppm(dir / "c.ppm"), IoError);
    CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), IoError);
}
