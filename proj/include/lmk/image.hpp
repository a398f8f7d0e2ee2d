#pragma once

#include <cstdint>
#include <vector>

namespace lmk {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

// Row-major H x W x C grid of reals in [0,1]. Coordinate convention used
// everywhere: (x, y) in pixel units, (0,0) at the center of the top-left
// pixel, x growing rightward (columns), y downward (rows).
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.f) : h(h), w(w), c(c), data(size_t(h) * w * c, fill) {}

    float& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

// Bilinear sample with border replication; (x, y) in pixel-center coords.
float sample_bilinear(const Image& img, double x, double y, int ch);

// Bilinear resize to (out_h, out_w); identity when sizes already match.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Center crop after resizing the short side; used by face-style loaders.
Image resize_center_crop(const Image& img, int resize_to, int crop_to);

Image to_grayscale(const Image& img);

// Per-channel mean and variance, for blur/statistics checks.
void channel_stats(const Image& img, int ch, double* mean, double* var);

}  // namespace lmk
