#pragma once

#include <cstdint>

#include "lmk/image.hpp"
#include "lmk/photometric.hpp"
#include "lmk/warp.hpp"

namespace lmk {

// Enabled transforms and their strength ranges for view-pair generation.
struct TransformPolicy {
    double crop_scale_min = 0.75;  // side fraction; the >= 50% valid-mask rule caps how small
    double crop_scale_max = 1.0;
    bool tps_enabled = false;
    int tps_grid = 5;
    double tps_sigma = 0.05;
    double jitter_brightness = 0.0;
    double jitter_contrast = 0.0;
    double jitter_saturation = 0.0;
    double jitter_hue = 0.0;
    double blur_sigma_max = 0.0;
    int jpeg_quality_min = 100;

    bool geometric_identity() const {
        return crop_scale_min >= 1.0 && crop_scale_max >= 1.0 && !tps_enabled;
    }
};

struct ViewPair {
    Image view_a;
    Image view_b;
    WarpField warp_ab;  // correspondence from view_a to view_b
    PhotometricParams photometric_b;
    uint64_t seed = 0;
};

// view_a is the input unchanged; view_b realizes a random crop+resize
// (+ optional TPS) through warp_ab and is then photometrically jittered.
// Warps whose valid mask covers < 50% of pixels are redrawn; more than 100
// rejections raise GenerationFailure.
ViewPair sample_view_pair(const Image& image, const TransformPolicy& policy, uint64_t seed);

}  // namespace lmk
