#pragma once

#include <vector>

#include "lmk/image.hpp"

namespace lmk {

// H' x W' x C activation grid tapped from one backbone block.
struct FeatureMap {
    int h = 0, w = 0, c = 0;
    int source_block = 0;  // 1-based block id, 0 when synthetic
    int stride = 1;        // cumulative spatial stride of the source block
    std::vector<float> data;  // row-major HWC

    FeatureMap() = default;
    FeatureMap(int h, int w, int c) : h(h), w(w), c(c), data(size_t(h) * w * c, 0.f) {}

    float& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }
    const float* loc(int y, int x) const { return data.data() + (size_t(y) * w + x) * c; }
    float* loc(int y, int x) { return data.data() + (size_t(y) * w + x) * c; }
    int cells() const { return h * w; }
};

// Per-pixel concatenation of block features interpolated to a common grid.
struct Hypercolumn {
    int grid_h = 0, grid_w = 0;
    int c = 0;
    std::vector<int> blocks;           // contributing source blocks, ascending
    std::vector<int> channel_offsets;  // prefix sums of block channels, size blocks+1
    std::vector<float> data;           // row-major HWC

    const float* loc(int y, int x) const { return data.data() + (size_t(y) * grid_w + x) * c; }
    int cells() const { return grid_h * grid_w; }

    FeatureMap as_feature_map() const;
};

FeatureMap resize_feature_map(const FeatureMap& map, int out_h, int out_w);

// Each map is bilinearly resized to grid x grid and concatenated along
// channels in ascending block order.
Hypercolumn build_hypercolumn(const std::vector<FeatureMap>& maps, int grid);

// Bilinear descriptor at image-pixel coordinate u; corners of the image map
// to corners of the grid. Throws when u is outside image bounds.
std::vector<float> sample_descriptor(const Hypercolumn& hc, Vec2 u, int image_h, int image_w,
                                     bool normalize = false);

// Same lookup against a bare feature map (used by matching and regression).
std::vector<float> sample_descriptor(const FeatureMap& fm, Vec2 u, int image_h, int image_w,
                                     bool normalize = false);

}  // namespace lmk
