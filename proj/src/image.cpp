#include "selfpath/image.hpp"

#include "selfpath/common.hpp"
#include "selfpath/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace selfpath {

Image crop(const Image& img, int y0, int x0, int ch, int cw) {
    Image out(ch, cw, img.c);
    for (int y = 0; y < ch; ++y) {
        const float* src = &img.px[(static_cast<size_t>(y0 + y) * img.w + x0) * img.c];
        float* dst = &out.px[static_cast<size_t>(y) * cw * img.c];
        std::copy(src, src + static_cast<size_t>(cw) * img.c, dst);
    }
    return out;
}

Image resize_bilinear(const Image& img, int oh, int ow) {
    if (oh == img.h && ow == img.w) return img;
    Image out(oh, ow, img.c);
    kernels::resize_bilinear_hwc(img.px.data(), img.h, img.w, img.c, out.px.data(), oh, ow);
    return out;
}

void clamp01(Image& img) {
    for (float& v : img.px) v = std::clamp(v, 0.f, 1.f);
}

static unsigned char to_byte(float v) {
    const float s = std::clamp(v, 0.f, 1.f) * 255.f;
    return static_cast<unsigned char>(std::lround(s));
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3)
        throw DataError("write_ppm: channel count must be 1 or 3, got " + std::to_string(img.c));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_ppm: cannot open " + path);
    f << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
        const float* src = &img.px[static_cast<size_t>(y) * img.w * img.c];
        for (size_t i = 0; i < row.size(); ++i) row[i] = to_byte(src[i]);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw DataError("write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    int channels = 0;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw DataError("read_ppm: unsupported magic '" + magic + "' in " + path);
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (w <= 0 || h <= 0 || maxval != 255)
        throw DataError("read_ppm: bad header in " + path);
    f.get();  // single whitespace after maxval
    Image img(h, w, channels);
    std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw DataError("read_ppm: truncated pixel data in " + path);
        float* dst = &img.px[static_cast<size_t>(y) * w * channels];
        for (size_t i = 0; i < row.size(); ++i) dst[i] = static_cast<float>(row[i]) / 255.f;
    }
    return img;
}

Image quantize8(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = static_cast<float>(to_byte(img.px[i])) / 255.f;
    return out;
}

}  // namespace selfpath
