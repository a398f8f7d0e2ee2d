#include "lmk/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "lmk/png_io.hpp"
#include "lmk/rng.hpp"

namespace fs = std::filesystem;

namespace lmk {

namespace {

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    return {float(r + m), float(g + m), float(b + m)};
}

struct Tri {
    Vec2 a, b, c;
    // signed distance to the inside (positive inside), in pixels
    double inside(Vec2 p) const {
        auto edge = [&](Vec2 e0, Vec2 e1) {
            const double ex = e1.x - e0.x, ey = e1.y - e0.y;
            const double len = std::hypot(ex, ey);
            return ((p.x - e0.x) * ey - (p.y - e0.y) * ex) / std::max(len, 1e-9);
        };
        double d0 = edge(a, b), d1 = edge(b, c), d2 = edge(c, a);
        // orientation-independent: flip if wound the other way
        if (d0 + d1 + d2 < 0) {
            d0 = -d0;
            d1 = -d1;
            d2 = -d2;
        }
        return std::min({d0, d1, d2});
    }
};

float coverage(double signed_dist) { return float(std::clamp(0.5 + signed_dist, 0.0, 1.0)); }

void blend(Image& img, int y, int x, Rgb color, float alpha) {
    if (alpha <= 0.f) return;
    for (int ch = 0; ch < 3; ++ch) {
        const float src = ch == 0 ? color.r : (ch == 1 ? color.g : color.b);
        img.at(y, x, ch) = (1.f - alpha) * img.at(y, x, ch) + alpha * src;
    }
}

}  // namespace

BlobFace render_blob_face(int h, int w, uint64_t seed) {
    if (h < 32 || w < 32) throw std::invalid_argument("render_blob_face: image too small");
    Rng rng(seed);
    BlobFace face;
    face.image = Image(h, w, 3);
    face.mask = Image(h, w, 1, 0.f);

    // Textured background drawn from a small shared library so backgrounds
    // cannot fingerprint individual instances; only the blob itself can.
    const int gn = 4;
    Rng bg_rng(0xB06F00Dull + rng.uniform_index(8));
    std::vector<Rgb> lattice(gn * gn);
    for (Rgb& c : lattice)
        c = {float(bg_rng.uniform()), float(bg_rng.uniform()), float(bg_rng.uniform())};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = double(x) / (w - 1) * (gn - 1);
            const double gy = double(y) / (h - 1) * (gn - 1);
            const int x0 = std::min(int(gx), gn - 2), y0 = std::min(int(gy), gn - 2);
            const double fx = gx - x0, fy = gy - y0;
            for (int ch = 0; ch < 3; ++ch) {
                auto pick = [&](int yy, int xx) {
                    const Rgb& c = lattice[yy * gn + xx];
                    return ch == 0 ? c.r : (ch == 1 ? c.g : c.b);
                };
                const double v = (1 - fy) * ((1 - fx) * pick(y0, x0) + fx * pick(y0, x0 + 1)) +
                                 fy * ((1 - fx) * pick(y0 + 1, x0) + fx * pick(y0 + 1, x0 + 1));
                face.image.at(y, x, ch) = float(v);
            }
        }
    for (float& v : face.image.data)
        v = std::clamp(v + float(rng.uniform(-0.03, 0.03)), 0.f, 1.f);

    // body geometry
    const double side = std::min(h, w);
    const double rx = side * rng.uniform(0.16, 0.24);
    const double ry = side * rng.uniform(0.20, 0.28);
    const double theta = rng.uniform(-0.45, 0.45);
    const double ext = 1.35 * std::max(rx, ry) + 2.0;
    const double cx = rng.uniform(ext, w - 1 - ext);
    const double cy = rng.uniform(ext, h - 1 - ext);
    const double ct = std::cos(theta), st = std::sin(theta);
    auto to_world = [&](double bx, double by) {
        return Vec2{cx + ct * bx - st * by, cy + st * bx + ct * by};
    };
    auto to_body = [&](double px, double py) {
        const double dx = px - cx, dy = py - cy;
        return Vec2{ct * dx + st * dy, -st * dx + ct * dy};
    };

    // Appearance varies widely across instances (palette, body striping,
    // lighting) so raw template matching is unreliable and only the part
    // arrangement is stable.
    const Rgb body_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 0.7), rng.uniform(0.3, 0.85));
    const Rgb tail_color = {body_color.r * 0.75f, body_color.g * 0.75f, body_color.b * 0.75f};
    const Rgb beak_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.4, 1.0));
    const Rgb eye_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.6), rng.uniform(0.0, 0.5));
    const Rgb stripe_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.9));
    const double stripe_freq = rng.uniform(0.15, 0.7);   // radians per pixel
    const double stripe_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double stripe_angle = rng.uniform(0.0, M_PI);
    const double stripe_amp = rng.uniform(0.0, 0.45);
    const double light_angle = rng.uniform(0.0, 2.0 * M_PI);
    const double light_amp = rng.uniform(0.0, 0.22);

    const double ex_off = 0.45 * rx, ey_off = 0.35 * ry;
    const double re = std::max(2.0, 0.15 * rx + 0.6);
    const Vec2 eye_l = to_world(-ex_off, -ey_off);
    const Vec2 eye_r = to_world(+ex_off, -ey_off);
    const Tri beak{to_world(-0.30 * rx, 0.72 * ry), to_world(0.30 * rx, 0.72 * ry),
                   to_world(0.0, 1.30 * ry)};
    const Tri tail{to_world(-0.16 * rx, -0.75 * ry), to_world(0.16 * rx, -0.75 * ry),
                   to_world(0.0, -1.30 * ry)};
    const Vec2 beak_tip = to_world(0.0, 1.30 * ry);
    const Vec2 tail_tip = to_world(0.0, -1.30 * ry);

    // Distractor dots confusable with eyes, placed clear of the body so
    // annotations stay unambiguous.
    const int n_dots = 2 + int(rng.uniform_index(4));
    for (int d = 0; d < n_dots; ++d) {
        double px = 0, py = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
            px = rng.uniform(3.0, w - 4.0);
            py = rng.uniform(3.0, h - 4.0);
            const Vec2 b = to_body(px, py);
            placed = std::hypot(b.x / rx, b.y / ry) > 1.6;
        }
        if (!placed) continue;
        const double dr = rng.uniform(1.5, 4.0);
        const Rgb c = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.9), rng.uniform(0.0, 1.0));
        const int x0 = std::max(0, int(px - dr - 2)), x1 = std::min(w - 1, int(px + dr + 2));
        const int y0 = std::max(0, int(py - dr - 2)), y1 = std::min(h - 1, int(py + dr + 2));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                blend(face.image, y, x, c, coverage(dr - std::hypot(x - px, y - py)));
    }

    // body, appendages, eyes; mask = ellipse + beak + tail
    const double r_avg = 0.5 * (rx + ry);
    const double sa_c = std::cos(stripe_angle), sa_s = std::sin(stripe_angle);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Vec2 b = to_body(x, y);
            const double q = std::hypot(b.x / rx, b.y / ry);
            const float a_body = coverage((1.0 - q) * r_avg);
            const float a_beak = coverage(beak.inside({double(x), double(y)}));
            const float a_tail = coverage(tail.inside({double(x), double(y)}));
            blend(face.image, y, x, beak_color, a_beak);
            blend(face.image, y, x, tail_color, a_tail);
            blend(face.image, y, x, body_color, a_body);
            if (a_body > 0.f && stripe_amp > 0.0) {
                const double band =
                    0.5 + 0.5 * std::sin(stripe_freq * (sa_c * b.x + sa_s * b.y) + stripe_phase);
                blend(face.image, y, x, stripe_color, a_body * float(stripe_amp * band));
            }
            const float a_el = coverage(re - std::hypot(x - eye_l.x, y - eye_l.y));
            const float a_er = coverage(re - std::hypot(x - eye_r.x, y - eye_r.y));
            blend(face.image, y, x, eye_color, std::max(a_el, a_er));
            const float fg = std::max({a_body, a_beak, a_tail});
            face.mask.at(y, x, 0) = fg > 0.5f ? 1.f : 0.f;
            if (light_amp > 0.0) {
                const double nx = (2.0 * x - (w - 1)) / (w - 1);
                const double ny = (2.0 * y - (h - 1)) / (h - 1);
                const float gain = float(
                    1.0 + light_amp * (std::cos(light_angle) * nx + std::sin(light_angle) * ny));
                for (int ch = 0; ch < 3; ++ch)
                    face.image.at(y, x, ch) = std::clamp(face.image.at(y, x, ch) * gain, 0.f, 1.f);
            }
        }

    face.landmarks.points = {eye_l, eye_r, beak_tip, {cx, cy}, tail_tip};
    face.landmarks.visible.assign(5, 1);
    return face;
}

DatasetManifest generate_synthetic_dataset(int n, int h, int w, uint64_t seed,
                                           const std::string& out_dir) {
    if (n < 1) throw std::invalid_argument("generate_synthetic_dataset: n must be >= 1");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.annotations_path = "annotations.csv";
    manifest.masks_dir = "masks";

    std::vector<LandmarkSet> annotations;
    Rng base(seed);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d", i);
        BlobFace face = render_blob_face(h, w, base.fork(uint64_t(i)).next_u64());
        face.landmarks.image_id = name;
        const std::string rel = std::string("images/") + name + ".png";
        write_png((fs::path(out_dir) / rel).string(), face.image);
        write_png((fs::path(out_dir) / "masks" / (std::string(name) + ".png")).string(), face.mask);
        manifest.entries.push_back({name, rel});
        annotations.push_back(std::move(face.landmarks));
    }
    save_annotations(annotations, (fs::path(out_dir) / "annotations.csv").string());
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace lmk
