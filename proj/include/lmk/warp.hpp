#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "lmk/image.hpp"

namespace lmk {

// Dense source->target coordinate map over the source pixel grid, with a
// validity mask marking source pixels whose image lands inside the target.
struct WarpField {
    int src_h = 0, src_w = 0;
    int tgt_h = 0, tgt_w = 0;
    std::vector<float> forward_map;  // src_h*src_w*2, interleaved (x, y) target coords
    std::vector<uint8_t> valid_mask;

    static WarpField identity(int h, int w);
    // Evaluates fn at every source pixel center; marks invalid where the
    // image falls outside [0, tgt_w-1] x [0, tgt_h-1].
    static WarpField from_function(int src_h, int src_w, int tgt_h, int tgt_w,
                                   const std::function<Vec2(Vec2)>& fn);

    Vec2 at(int y, int x) const {
        const size_t i = (size_t(y) * src_w + x) * 2;
        return {forward_map[i], forward_map[i + 1]};
    }
    bool valid_at(int y, int x) const { return valid_mask[size_t(y) * src_w + x] != 0; }
    double valid_fraction() const;
};

// Thin-plate spline u -> u + displacement interpolated from control points.
// Exposed so warps can be composed analytically before rasterization.
class TpsTransform {
public:
    // Control points on a grid_h x grid_w lattice spanning [0,w-1]x[0,h-1],
    // displaced i.i.d. normal with stddev sigma * max(h-1, w-1).
    static TpsTransform random(int grid_h, int grid_w, double sigma, int h, int w, uint64_t seed);
    // Exact interpolant of explicit control displacements.
    static TpsTransform fit(const std::vector<Vec2>& sources, const std::vector<Vec2>& targets);

    Vec2 operator()(Vec2 u) const;

private:
    std::vector<Vec2> controls_;
    std::vector<Vec2> kernel_weights_;  // one per control
    // affine part: [ax, bx, cx; ay, by, cy] applied as a*x + b*y + c
    double affine_[2][3] = {{1, 0, 0}, {0, 1, 0}};
};

// TPS interpolation of randomly displaced control points, rasterized on the
// source grid. sigma is the control-point displacement stddev as a fraction
// of the image side; sigma = 0 yields the identity field.
WarpField make_tps_warp(int grid_h, int grid_w, double sigma, int h, int w, uint64_t seed);

// Resamples the image through the inverse of the warp: output pixel v takes
// the bilinear sample of `image` at g^{-1}(v), with border replication.
Image apply_warp(const Image& image, const WarpField& warp);

// g(u) for each point via bilinear lookup into forward_map. Out-of-range
// inputs are clamped and flagged invalid, as are points whose mask is false.
std::pair<std::vector<Vec2>, std::vector<uint8_t>> map_coords(const WarpField& warp,
                                                              const std::vector<Vec2>& points);

// Composition g2 after g1 as a WarpField over g1's source grid.
WarpField compose(const WarpField& g1, const WarpField& g2);

// Dense numeric inverse: target-grid map v -> u with g(u) = v. Built by
// splatting forward samples and refining with Gauss-Newton steps.
std::vector<float> invert_warp(const WarpField& warp);

}  // namespace lmk
