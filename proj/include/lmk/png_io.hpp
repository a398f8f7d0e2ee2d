#pragma once

#include <string>

#include "lmk/image.hpp"

namespace lmk {

// Minimal PNG codec (8-bit gray/RGB/RGBA, no interlace) over zlib.
// Values are quantized to 8 bits on write and mapped back to [0,1] on read.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace lmk
