#include <doctest.h>

#include <cstdio>

#include "lmk/png_io.hpp"
#include "lmk/rng.hpp"

using namespace lmk;

TEST_CASE("png round-trips rgb and grayscale at 8-bit precision") {
    Rng rng(3);
    for (int channels : {1, 3}) {
        Image img(13, 9, channels);
        for (float& v : img.data) v = float(rng.uniform_index(256)) / 255.f;
        const std::string path = "/tmp/lmk_test_" + std::to_string(channels) + ".png";
        write_png(path, img);
        Image back = read_png(path);
        REQUIRE(back.h == img.h);
        REQUIRE(back.w == img.w);
        REQUIRE(back.c == img.c);
        CHECK(back.data == img.data);
        std::remove(path.c_str());
    }
}
