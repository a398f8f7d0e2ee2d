#include "lmk/photometric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lmk/rng.hpp"

namespace lmk {

namespace {

const int kJpegLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

double luma(const Image& img, int y, int x) {
    if (img.c == 1) return img.at(y, x, 0);
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

// rotation about the (1,1,1) gray axis, applied to RGB
void hue_rotate(Image& img, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double one_third = 1.0 / 3.0;
    const double sq = std::sqrt(1.0 / 3.0);
    double m[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double cross = (j == (i + 1) % 3) ? -sq : ((j == (i + 2) % 3) ? sq : 0.0);
            m[i][j] = c * (i == j ? 1.0 : 0.0) + (1 - c) * one_third + s * cross;
        }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            img.at(y, x, 0) = float(m[0][0] * r + m[0][1] * g + m[0][2] * b);
            img.at(y, x, 1) = float(m[1][0] * r + m[1][1] * g + m[1][2] * b);
            img.at(y, x, 2) = float(m[2][0] * r + m[2][1] * g + m[2][2] * b);
        }
}

}  // namespace

PhotometricDraw draw_photometric(const PhotometricParams& params, uint64_t seed) {
    Rng rng(seed);
    PhotometricDraw d;
    d.brightness_delta = rng.uniform(-params.brightness, params.brightness);
    d.contrast_delta = rng.uniform(-params.contrast, params.contrast);
    d.saturation_delta = rng.uniform(-params.saturation, params.saturation);
    d.hue_angle = rng.uniform(-params.hue, params.hue) * M_PI;
    return d;
}

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * double(i) * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;

    Image tmp(image.h, image.w, image.c);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int ch = 0; ch < image.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * image.at(y, std::clamp(x + i, 0, image.w - 1), ch);
                tmp.at(y, x, ch) = float(acc);
            }
    Image out(image.h, image.w, image.c);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int ch = 0; ch < image.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * tmp.at(std::clamp(y + i, 0, image.h - 1), x, ch);
                out.at(y, x, ch) = float(acc);
            }
    return out;
}

Image compression_noise(const Image& image, int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("compression_noise: quality must be in [1,100]");
    if (quality == 100) return image;

    const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    double qtab[64];
    for (int i = 0; i < 64; ++i)
        qtab[i] = std::clamp(std::floor((kJpegLuma[i] * scale + 50.0) / 100.0), 1.0, 255.0);

    // orthonormal DCT-II basis
    double dct[8][8];
    for (int k = 0; k < 8; ++k)
        for (int n = 0; n < 8; ++n)
            dct[k][n] = (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                        std::cos(M_PI * (2 * n + 1) * k / 16.0);

    Image out = image;
    const int bh = (image.h + 7) / 8, bw = (image.w + 7) / 8;
    for (int ch = 0; ch < image.c; ++ch)
        for (int by = 0; by < bh; ++by)
            for (int bx = 0; bx < bw; ++bx) {
                double block[8][8], coef[8][8];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const int sy = std::min(by * 8 + y, image.h - 1);
                        const int sx = std::min(bx * 8 + x, image.w - 1);
                        block[y][x] = image.at(sy, sx, ch) * 255.0 - 128.0;
                    }
                // coef = D * block * D^T, quantize, then invert
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double acc = 0.0;
                        for (int y = 0; y < 8; ++y)
                            for (int x = 0; x < 8; ++x) acc += dct[u][y] * block[y][x] * dct[v][x];
                        coef[u][v] = std::round(acc / qtab[u * 8 + v]) * qtab[u * 8 + v];
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const int sy = by * 8 + y, sx = bx * 8 + x;
                        if (sy >= image.h || sx >= image.w) continue;
                        double acc = 0.0;
                        for (int u = 0; u < 8; ++u)
                            for (int v = 0; v < 8; ++v) acc += dct[u][y] * coef[u][v] * dct[v][x];
                        out.at(sy, sx, ch) = float(std::clamp((acc + 128.0) / 255.0, 0.0, 1.0));
                    }
            }
    return out;
}

Image photometric_transform(const Image& image, const PhotometricParams& params, uint64_t seed) {
    if (params.noise_quality < 1 || params.noise_quality > 100)
        throw std::invalid_argument("photometric_transform: noise_quality must be in [1,100]");
    if (params.blur_sigma < 0.0)
        throw std::invalid_argument("photometric_transform: negative blur_sigma");
    if (params.is_identity()) return image;

    const PhotometricDraw d = draw_photometric(params, seed);
    Image img = image;

    if (d.brightness_delta != 0.0) {
        const float f = float(1.0 + d.brightness_delta);
        for (float& v : img.data) v *= f;
    }
    if (d.contrast_delta != 0.0) {
        double mean_gray = 0.0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) mean_gray += luma(img, y, x);
        mean_gray /= double(img.h) * img.w;
        const double f = 1.0 + d.contrast_delta;
        for (float& v : img.data) v = float(mean_gray + f * (v - mean_gray));
    }
    if (d.saturation_delta != 0.0 && img.c == 3) {
        const double f = 1.0 + d.saturation_delta;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const double l = luma(img, y, x);
                for (int ch = 0; ch < 3; ++ch)
                    img.at(y, x, ch) = float(l + f * (img.at(y, x, ch) - l));
            }
    }
    if (d.hue_angle != 0.0 && img.c == 3) hue_rotate(img, d.hue_angle);
    if (params.blur_sigma > 0.0) img = gaussian_blur(img, params.blur_sigma);
    if (params.noise_quality < 100) img = compression_noise(img, params.noise_quality);

    for (float& v : img.data) v = std::clamp(v, 0.f, 1.f);
    return img;
}

}  // namespace lmk
