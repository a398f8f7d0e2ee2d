#include "lmk/view_pair.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

ViewPair sample_view_pair(const Image& image, const TransformPolicy& policy, uint64_t seed) {
    if (image.h < 2 || image.w < 2) throw std::invalid_argument("sample_view_pair: image too small");
    if (policy.crop_scale_min <= 0.0 || policy.crop_scale_min > policy.crop_scale_max ||
        policy.crop_scale_max > 1.0)
        throw std::invalid_argument("sample_view_pair: bad crop scale range");

    Rng rng(seed);
    const int h = image.h, w = image.w;

    WarpField warp;
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
        const double s = rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
        const int cw = std::clamp(int(std::lround(s * w)), 2, w);
        const int ch = std::clamp(int(std::lround(s * h)), 2, h);
        const int ox = int(rng.uniform_index(uint64_t(w - cw + 1)));
        const int oy = int(rng.uniform_index(uint64_t(h - ch + 1)));
        const double sx = double(w - 1) / double(cw - 1);
        const double sy = double(h - 1) / double(ch - 1);

        if (policy.tps_enabled && policy.tps_sigma > 0.0) {
            const TpsTransform tps = TpsTransform::random(policy.tps_grid, policy.tps_grid,
                                                          policy.tps_sigma, h, w, rng.next_u64());
            warp = WarpField::from_function(h, w, h, w, [&](Vec2 u) {
                return tps({(u.x - ox) * sx, (u.y - oy) * sy});
            });
        } else {
            warp = WarpField::from_function(
                h, w, h, w, [&](Vec2 u) { return Vec2{(u.x - ox) * sx, (u.y - oy) * sy}; });
        }
        accepted = warp.valid_fraction() >= 0.5;
    }
    if (!accepted)
        throw GenerationFailure("sample_view_pair: no acceptable warp after 100 draws");

    ViewPair pair;
    pair.seed = seed;
    pair.view_a = image;
    pair.warp_ab = std::move(warp);
    pair.view_b = policy.geometric_identity() ? image : apply_warp(image, pair.warp_ab);

    PhotometricParams& p = pair.photometric_b;
    p.brightness = policy.jitter_brightness;
    p.contrast = policy.jitter_contrast;
    p.saturation = policy.jitter_saturation;
    p.hue = policy.jitter_hue;
    p.blur_sigma = policy.blur_sigma_max > 0.0 ? rng.uniform(0.0, policy.blur_sigma_max) : 0.0;
    p.noise_quality =
        policy.jpeg_quality_min < 100 ? rng.uniform_int(policy.jpeg_quality_min, 100) : 100;
    if (!p.is_identity()) pair.view_b = photometric_transform(pair.view_b, p, rng.next_u64());

    return pair;
}

}  // namespace lmk
