#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnconv/tensor.hpp"

namespace attnconv {

class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Planar RGB image with values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // [3×H×W]

    Image() = default;
    Image(int h, int w, double fill = 0.0) : height(h), width(w), pixels(static_cast<size_t>(3) * h * w, fill) {}

    double& at(int c, int y, int x) { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }

    bool operator==(const Image&) const = default;

    Tensor to_tensor() const { return Tensor({3, height, width}, pixels); }
};

// Bilinear resampling with half-pixel centers; same-size input is copied exactly.
Image resize_bilinear(const Image& src, int height, int width);

// Pixel rectangle [x0, x0+w) × [y0, y0+h) copied out of / into an image.
Image crop(const Image& src, int x0, int y0, int w, int h);
void paste(Image& dst, const Image& patch, int x0, int y0);

// Binary P6 with maxval 255; reading also accepts P3.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
uint8_t quantize(double v);

}  // namespace attnconv
