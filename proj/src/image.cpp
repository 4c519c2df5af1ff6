#include "attnconv/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace attnconv {

Image resize_bilinear(const Image& src, int height, int width) {
    if (height <= 0 || width <= 0) throw DimensionError("resize target must be positive");
    if (height == src.height && width == src.width) return src;
    Image out(height, width);
    const double sy = static_cast<double>(src.height) / height;
    const double sx = static_cast<double>(src.width) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double tx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(c, y0, x0) * (1 - tx) + src.at(c, y0, x1) * tx;
                const double bot = src.at(c, y1, x0) * (1 - tx) + src.at(c, y1, x1) * tx;
                out.at(c, y, x) = top * (1 - ty) + bot * ty;
            }
        }
    }
    return out;
}

Image crop(const Image& src, int x0, int y0, int w, int h) {
    if (w <= 0 || h <= 0 || x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height)
        throw DimensionError("crop rectangle outside image");
    Image out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, y0 + y, x0 + x);
    return out;
}

void paste(Image& dst, const Image& patch, int x0, int y0) {
    if (x0 < 0 || y0 < 0 || x0 + patch.width > dst.width || y0 + patch.height > dst.height)
        throw DimensionError("paste rectangle outside image");
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < patch.height; ++y)
            for (int x = 0; x < patch.width; ++x) dst.at(c, y0 + y, x0 + x) = patch.at(c, y, x);
}

uint8_t quantize(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<char> buf(static_cast<size_t>(img.width) * img.height * 3);
    size_t i = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) buf[i++] = static_cast<char>(quantize(img.at(c, y, x)));
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

namespace {

// Header token reader that skips '#' comments.
std::string next_token(std::istream& is) {
    std::string tok;
    while (is) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            break;
        }
    }
    is >> tok;
    return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const std::string magic = next_token(is);
    if (magic != "P6" && magic != "P3") throw IoError(path.string() + ": not a PPM file (magic '" + magic + "')");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(is));
        h = std::stoi(next_token(is));
        maxval = std::stoi(next_token(is));
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PPM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw IoError(path.string() + ": unsupported PPM header");
    Image img(h, w);
    if (magic == "P6") {
        is.get();  // single whitespace after maxval
        std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated pixel data");
        size_t i = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = buf[i++] / static_cast<double>(maxval);
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    int v = 0;
                    if (!(is >> v)) throw IoError(path.string() + ": truncated pixel data");
                    img.at(c, y, x) = v / static_cast<double>(maxval);
                }
    }
    return img;
}

}  // namespace attnconv
