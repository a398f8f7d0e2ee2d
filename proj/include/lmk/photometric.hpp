#pragma once

#include <cstdint>

#include "lmk/image.hpp"

namespace lmk {

// Jitter strengths, not concrete factors: the applied deltas are drawn per
// seed inside [-strength, +strength]. All strengths zero and quality 100 is
// the identity transform.
struct PhotometricParams {
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.0;
    double hue = 0.0;        // fraction of a half-turn around the gray axis
    double blur_sigma = 0.0;
    int noise_quality = 100;  // block-DCT quantization level in [1, 100]

    bool is_identity() const {
        return brightness == 0.0 && contrast == 0.0 && saturation == 0.0 && hue == 0.0 &&
               blur_sigma == 0.0 && noise_quality == 100;
    }
};

// Concrete deltas drawn for one application; exposed so tests can predict
// the exact scalar effect of a given (params, seed).
struct PhotometricDraw {
    double brightness_delta = 0.0;
    double contrast_delta = 0.0;
    double saturation_delta = 0.0;
    double hue_angle = 0.0;  // radians
};

PhotometricDraw draw_photometric(const PhotometricParams& params, uint64_t seed);

// brightness -> contrast -> saturation -> hue -> blur -> compression noise,
// clipped to [0,1]. Deterministic per (params, seed).
Image photometric_transform(const Image& image, const PhotometricParams& params, uint64_t seed);

Image gaussian_blur(const Image& image, double sigma);

// Quantizes 8x8 block-DCT coefficients at the given quality (lower = noisier).
Image compression_noise(const Image& image, int quality);

}  // namespace lmk
