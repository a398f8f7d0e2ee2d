#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmk/image.hpp"

namespace lmk {

struct LandmarkSet {
    std::vector<Vec2> points;     // pixel coordinates
    std::vector<uint8_t> visible;
    std::string image_id;

    int count() const { return int(points.size()); }
    int visible_count() const {
        int n = 0;
        for (uint8_t v : visible) n += v;
        return n;
    }
};

}  // namespace lmk
