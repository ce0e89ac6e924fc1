#pragma once

#include <string>
#include <vector>

namespace selfpath {

// Interleaved float image, row-major, values nominally in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, int c_, float fill = 0.f)
        : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    size_t size() const { return px.size(); }
};

// Crop [y0, y0+ch) x [x0, x0+cw); caller guarantees bounds.
Image crop(const Image& img, int y0, int x0, int ch, int cw);

// Bilinear resize (half-pixel-center convention, edges clamped).
Image resize_bilinear(const Image& img, int oh, int ow);

// Clamp all values into [0,1].
void clamp01(Image& img);

// Binary PPM (P6) / PGM (P5), 8 bits per channel. Lossless for 8-bit data;
// floats are quantized with round(v*255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// 8-bit quantization round trip used when persisting patches.
Image quantize8(const Image& img);

}  // namespace selfpath
