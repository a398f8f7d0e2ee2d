#pragma once

#include <cstdint>
#include <string>

#include "lmk/data_io.hpp"

namespace lmk {

// One rendered instance with its 5 landmarks (left eye, right eye, beak tip,
// body center, tail) and foreground mask.
struct BlobFace {
    Image image;
    Image mask;  // single channel, 1 = foreground
    LandmarkSet landmarks;
};

BlobFace render_blob_face(int h, int w, uint64_t seed);

// Renders n faces under out_dir (images/, masks/, annotations.csv,
// manifest.json) and returns the manifest. Deterministic per seed.
DatasetManifest generate_synthetic_dataset(int n, int h, int w, uint64_t seed,
                                           const std::string& out_dir);

}  // namespace lmk
