#include "lmk/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lmk {

float sample_bilinear(const Image& img, double x, double y, int ch) {
    const double xc = std::clamp(x, 0.0, double(img.w - 1));
    const double yc = std::clamp(y, 0.0, double(img.h - 1));
    const int x0 = std::min(int(std::floor(xc)), img.w - 1);
    const int y0 = std::min(int(std::floor(yc)), img.h - 1);
    const int x1 = std::min(x0 + 1, img.w - 1);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double fx = xc - x0;
    const double fy = yc - y0;
    const double v00 = img.at(y0, x0, ch);
    const double v01 = img.at(y0, x1, ch);
    const double v10 = img.at(y1, x0, ch);
    const double v11 = img.at(y1, x1, ch);
    return float((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: non-positive size");
    if (out_h == img.h && out_w == img.w) return img;
    Image out(out_h, out_w, img.c);
    const double sx = double(img.w) / out_w;
    const double sy = double(img.h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        // align pixel centers: out center (y+0.5) maps to in center sy*(y+0.5)
        const double iy = sy * (y + 0.5) - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double ix = sx * (x + 0.5) - 0.5;
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = sample_bilinear(img, ix, iy, ch);
        }
    }
    return out;
}

Image resize_center_crop(const Image& img, int resize_to, int crop_to) {
    if (img.h < resize_to || img.w < resize_to)
        throw std::invalid_argument("resize_center_crop: input smaller than resize target");
    Image resized = resize_bilinear(img, resize_to, resize_to);
    const int off = (resize_to - crop_to) / 2;
    Image out(crop_to, crop_to, img.c);
    for (int y = 0; y < crop_to; ++y)
        for (int x = 0; x < crop_to; ++x)
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = resized.at(y + off, x + off, ch);
    return out;
}

Image to_grayscale(const Image& img) {
    if (img.c == 1) return img;
    Image out(img.h, img.w, 1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            out.at(y, x, 0) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
    return out;
}

void channel_stats(const Image& img, int ch, double* mean, double* var) {
    double s = 0.0, s2 = 0.0;
    const size_t n = size_t(img.h) * img.w;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double v = img.at(y, x, ch);
            s += v;
            s2 += v * v;
        }
    *mean = s / double(n);
    *var = std::max(0.0, s2 / double(n) - (*mean) * (*mean));
}

}  // namespace lmk
