#include "lmk/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lmk {

namespace {

void sample_grid_bilinear(const float* data, int h, int w, int c, double gx, double gy,
                          float* out) {
    const double xc = std::clamp(gx, 0.0, double(w - 1));
    const double yc = std::clamp(gy, 0.0, double(h - 1));
    const int x0 = std::min(int(std::floor(xc)), w - 1);
    const int y0 = std::min(int(std::floor(yc)), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = xc - x0;
    const double fy = yc - y0;
    const float* p00 = data + (size_t(y0) * w + x0) * c;
    const float* p01 = data + (size_t(y0) * w + x1) * c;
    const float* p10 = data + (size_t(y1) * w + x0) * c;
    const float* p11 = data + (size_t(y1) * w + x1) * c;
    const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
    const double w10 = fy * (1 - fx), w11 = fy * fx;
    for (int j = 0; j < c; ++j)
        out[j] = float(w00 * p00[j] + w01 * p01[j] + w10 * p10[j] + w11 * p11[j]);
}

void normalize_vec(std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) n += double(x) * x;
    n = std::sqrt(n);
    if (n > 1e-12)
        for (float& x : v) x = float(x / n);
}

}  // namespace

FeatureMap Hypercolumn::as_feature_map() const {
    FeatureMap fm(grid_h, grid_w, c);
    fm.data = data;
    return fm;
}

FeatureMap resize_feature_map(const FeatureMap& map, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_feature_map: non-positive size");
    if (out_h == map.h && out_w == map.w) return map;
    FeatureMap out(out_h, out_w, map.c);
    out.source_block = map.source_block;
    out.stride = map.stride;
    const double sx = double(map.w) / out_w;
    const double sy = double(map.h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double iy = sy * (y + 0.5) - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double ix = sx * (x + 0.5) - 0.5;
            sample_grid_bilinear(map.data.data(), map.h, map.w, map.c, ix, iy, out.loc(y, x));
        }
    }
    return out;
}

Hypercolumn build_hypercolumn(const std::vector<FeatureMap>& maps, int grid) {
    if (maps.empty()) throw std::invalid_argument("build_hypercolumn: empty map list");
    if (grid <= 0) throw std::invalid_argument("build_hypercolumn: non-positive grid");

    std::vector<int> order(maps.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return maps[a].source_block < maps[b].source_block;
    });

    Hypercolumn hc;
    hc.grid_h = hc.grid_w = grid;
    hc.channel_offsets.push_back(0);
    for (int i : order) {
        hc.blocks.push_back(maps[i].source_block);
        hc.channel_offsets.push_back(hc.channel_offsets.back() + maps[i].c);
    }
    hc.c = hc.channel_offsets.back();
    hc.data.resize(size_t(grid) * grid * hc.c);

    for (size_t bi = 0; bi < order.size(); ++bi) {
        const FeatureMap resized = resize_feature_map(maps[order[bi]], grid, grid);
        const int off = hc.channel_offsets[bi];
        for (int y = 0; y < grid; ++y)
            for (int x = 0; x < grid; ++x) {
                float* dst = hc.data.data() + (size_t(y) * grid + x) * hc.c + off;
                std::copy_n(resized.loc(y, x), resized.c, dst);
            }
    }
    return hc;
}

std::vector<float> sample_descriptor(const Hypercolumn& hc, Vec2 u, int image_h, int image_w,
                                     bool normalize) {
    if (u.x < 0.0 || u.x > image_w - 1.0 || u.y < 0.0 || u.y > image_h - 1.0)
        throw std::invalid_argument("sample_descriptor: point outside image bounds");
    const double gx = image_w > 1 ? u.x * double(hc.grid_w - 1) / double(image_w - 1) : 0.0;
    const double gy = image_h > 1 ? u.y * double(hc.grid_h - 1) / double(image_h - 1) : 0.0;
    std::vector<float> out(hc.c);
    sample_grid_bilinear(hc.data.data(), hc.grid_h, hc.grid_w, hc.c, gx, gy, out.data());
    if (normalize) normalize_vec(out);
    return out;
}

std::vector<float> sample_descriptor(const FeatureMap& fm, Vec2 u, int image_h, int image_w,
                                     bool normalize) {
    if (u.x < 0.0 || u.x > image_w - 1.0 || u.y < 0.0 || u.y > image_h - 1.0)
        throw std::invalid_argument("sample_descriptor: point outside image bounds");
    const double gx = image_w > 1 ? u.x * double(fm.w - 1) / double(image_w - 1) : 0.0;
    const double gy = image_h > 1 ? u.y * double(fm.h - 1) / double(image_h - 1) : 0.0;
    std::vector<float> out(fm.c);
    sample_grid_bilinear(fm.data.data(), fm.h, fm.w, fm.c, gx, gy, out.data());
    if (normalize) normalize_vec(out);
    return out;
}

}  // namespace lmk
