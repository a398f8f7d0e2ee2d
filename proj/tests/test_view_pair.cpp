#include <doctest.h>

#include <cmath>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"
#include "lmk/view_pair.hpp"

using namespace lmk;

namespace {

Image random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (float& v : img.data) v = float(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("all-identity policy returns the input pair") {
    Image img = random_image(32, 32, 1);
    TransformPolicy policy;
    policy.crop_scale_min = policy.crop_scale_max = 1.0;
    ViewPair pair = sample_view_pair(img, policy, 5);
    CHECK(pair.view_b.data == img.data);
    CHECK(pair.view_a.data == img.data);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            CHECK(pair.warp_ab.at(y, x).x == double(x));
            CHECK(pair.warp_ab.at(y, x).y == double(y));
        }
    CHECK(pair.warp_ab.valid_fraction() == 1.0);
}

TEST_CASE("same seed reproduces the pair exactly") {
    Image img = random_image(48, 48, 2);
    TransformPolicy policy;
    policy.crop_scale_min = 0.8;
    policy.tps_enabled = true;
    policy.tps_sigma = 0.03;
    policy.jitter_brightness = 0.2;
    policy.blur_sigma_max = 1.0;
    policy.jpeg_quality_min = 70;
    ViewPair a = sample_view_pair(img, policy, 123);
    ViewPair b = sample_view_pair(img, policy, 123);
    CHECK(a.view_b.data == b.view_b.data);
    CHECK(a.warp_ab.forward_map == b.warp_ab.forward_map);
    CHECK(a.photometric_b.blur_sigma == b.photometric_b.blur_sigma);
    CHECK(a.photometric_b.noise_quality == b.photometric_b.noise_quality);
    ViewPair c = sample_view_pair(img, policy, 124);
    CHECK(a.view_b.data != c.view_b.data);
}

TEST_CASE("forward map round-trips through dense inverse lookup within 1px") {
    Image img = random_image(48, 48, 3);
    TransformPolicy policy;
    policy.crop_scale_min = 0.8;
    policy.tps_enabled = true;
    policy.tps_sigma = 0.04;
    ViewPair pair = sample_view_pair(img, policy, 31);
    const WarpField& warp = pair.warp_ab;

    Rng rng(7);
    int checked = 0;
    for (int i = 0; i < 50; ++i) {
        Vec2 u{rng.uniform(2.0, 45.0), rng.uniform(2.0, 45.0)};
        auto [mapped, ok] = map_coords(warp, {u});
        if (!ok[0]) continue;
        // nearest-neighbor inverse search over the dense forward map
        double best = 1e18;
        Vec2 best_u{};
        for (int y = 0; y < warp.src_h; ++y)
            for (int x = 0; x < warp.src_w; ++x) {
                const Vec2 v = warp.at(y, x);
                const double d =
                    (v.x - mapped[0].x) * (v.x - mapped[0].x) + (v.y - mapped[0].y) * (v.y - mapped[0].y);
                if (d < best) {
                    best = d;
                    best_u = {double(x), double(y)};
                }
            }
        const double err = std::hypot(best_u.x - u.x, best_u.y - u.y);
        CHECK(err < 1.0);
        ++checked;
    }
    CHECK(checked > 20);
}

TEST_CASE("hopelessly small crops exhaust the rejection budget") {
    Image img = random_image(32, 32, 4);
    TransformPolicy policy;
    policy.crop_scale_min = 0.2;
    policy.crop_scale_max = 0.3;  // valid fraction ~ scale^2 << 50%
    CHECK_THROWS_AS(sample_view_pair(img, policy, 9), GenerationFailure);
}

TEST_CASE("view pair invariant: valid mask covers at least half the pixels") {
    Image img = random_image(64, 64, 6);
    TransformPolicy policy;
    policy.crop_scale_min = 0.75;
    policy.tps_enabled = true;
    policy.tps_sigma = 0.05;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        ViewPair pair = sample_view_pair(img, policy, seed);
        CHECK(pair.warp_ab.valid_fraction() >= 0.5);
    }
}
