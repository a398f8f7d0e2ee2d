#include "lmk/warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lmk/rng.hpp"

namespace lmk {

namespace {

// Bilinear read of the forward map with border replication, in doubles.
Vec2 field_lookup(const WarpField& f, double x, double y) {
    const double xc = std::clamp(x, 0.0, double(f.src_w - 1));
    const double yc = std::clamp(y, 0.0, double(f.src_h - 1));
    const int x0 = std::min(int(std::floor(xc)), f.src_w - 1);
    const int y0 = std::min(int(std::floor(yc)), f.src_h - 1);
    const int x1 = std::min(x0 + 1, f.src_w - 1);
    const int y1 = std::min(y0 + 1, f.src_h - 1);
    const double fx = xc - x0;
    const double fy = yc - y0;
    auto v00 = f.at(y0, x0), v01 = f.at(y0, x1), v10 = f.at(y1, x0), v11 = f.at(y1, x1);
    return {(1 - fy) * ((1 - fx) * v00.x + fx * v01.x) + fy * ((1 - fx) * v10.x + fx * v11.x),
            (1 - fy) * ((1 - fx) * v00.y + fx * v01.y) + fy * ((1 - fx) * v10.y + fx * v11.y)};
}

// All bilinear-support cells with nonzero weight must be valid.
bool mask_lookup(const WarpField& f, double x, double y) {
    const double xc = std::clamp(x, 0.0, double(f.src_w - 1));
    const double yc = std::clamp(y, 0.0, double(f.src_h - 1));
    const int x0 = std::min(int(std::floor(xc)), f.src_w - 1);
    const int y0 = std::min(int(std::floor(yc)), f.src_h - 1);
    const int x1 = std::min(x0 + 1, f.src_w - 1);
    const int y1 = std::min(y0 + 1, f.src_h - 1);
    const double fx = xc - x0;
    const double fy = yc - y0;
    const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const bool m[4] = {f.valid_at(y0, x0), f.valid_at(y0, x1), f.valid_at(y1, x0), f.valid_at(y1, x1)};
    for (int i = 0; i < 4; ++i)
        if (w[i] > 1e-12 && !m[i]) return false;
    return true;
}

}  // namespace

WarpField WarpField::identity(int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("WarpField: non-positive size");
    WarpField f;
    f.src_h = f.tgt_h = h;
    f.src_w = f.tgt_w = w;
    f.forward_map.resize(size_t(h) * w * 2);
    f.valid_mask.assign(size_t(h) * w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.forward_map[(size_t(y) * w + x) * 2] = float(x);
            f.forward_map[(size_t(y) * w + x) * 2 + 1] = float(y);
        }
    return f;
}

WarpField WarpField::from_function(int src_h, int src_w, int tgt_h, int tgt_w,
                                   const std::function<Vec2(Vec2)>& fn) {
    if (src_h <= 0 || src_w <= 0 || tgt_h <= 0 || tgt_w <= 0)
        throw std::invalid_argument("WarpField: non-positive size");
    WarpField f;
    f.src_h = src_h;
    f.src_w = src_w;
    f.tgt_h = tgt_h;
    f.tgt_w = tgt_w;
    f.forward_map.resize(size_t(src_h) * src_w * 2);
    f.valid_mask.resize(size_t(src_h) * src_w);
    for (int y = 0; y < src_h; ++y)
        for (int x = 0; x < src_w; ++x) {
            const Vec2 v = fn({double(x), double(y)});
            const size_t i = size_t(y) * src_w + x;
            f.forward_map[i * 2] = float(v.x);
            f.forward_map[i * 2 + 1] = float(v.y);
            f.valid_mask[i] =
                (v.x >= 0.0 && v.x <= tgt_w - 1.0 && v.y >= 0.0 && v.y <= tgt_h - 1.0) ? 1 : 0;
        }
    return f;
}

double WarpField::valid_fraction() const {
    if (valid_mask.empty()) return 0.0;
    size_t n = 0;
    for (uint8_t m : valid_mask) n += m;
    return double(n) / double(valid_mask.size());
}

TpsTransform TpsTransform::fit(const std::vector<Vec2>& sources, const std::vector<Vec2>& targets) {
    if (sources.size() != targets.size() || sources.size() < 3)
        throw std::invalid_argument("TpsTransform: need >= 3 matched control points");
    const int n = int(sources.size());
    auto kernel = [](double r2) { return r2 > 1e-12 ? 0.5 * r2 * std::log(r2) : 0.0; };

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = sources[i].x - sources[j].x;
            const double dy = sources[i].y - sources[j].y;
            L(i, j) = kernel(dx * dx + dy * dy);
        }
        L(i, n) = L(n, i) = sources[i].x;
        L(i, n + 1) = L(n + 1, i) = sources[i].y;
        L(i, n + 2) = L(n + 2, i) = 1.0;
        rhs(i, 0) = targets[i].x;
        rhs(i, 1) = targets[i].y;
    }
    Eigen::MatrixXd sol = L.fullPivLu().solve(rhs);

    TpsTransform t;
    t.controls_ = sources;
    t.kernel_weights_.resize(n);
    for (int i = 0; i < n; ++i) t.kernel_weights_[i] = {sol(i, 0), sol(i, 1)};
    t.affine_[0][0] = sol(n, 0);
    t.affine_[0][1] = sol(n + 1, 0);
    t.affine_[0][2] = sol(n + 2, 0);
    t.affine_[1][0] = sol(n, 1);
    t.affine_[1][1] = sol(n + 1, 1);
    t.affine_[1][2] = sol(n + 2, 1);
    return t;
}

TpsTransform TpsTransform::random(int grid_h, int grid_w, double sigma, int h, int w, uint64_t seed) {
    if (grid_h < 2 || grid_w < 2) throw std::invalid_argument("TpsTransform: grid must be >= 2x2");
    if (h <= 0 || w <= 0) throw std::invalid_argument("TpsTransform: non-positive size");
    if (sigma < 0.0) throw std::invalid_argument("TpsTransform: negative sigma");
    Rng rng(seed);
    const double stddev = sigma * double(std::max(h, w));
    std::vector<Vec2> sources, targets;
    sources.reserve(size_t(grid_h) * grid_w);
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx) {
            Vec2 c{double(gx) * (w - 1) / (grid_w - 1), double(gy) * (h - 1) / (grid_h - 1)};
            sources.push_back(c);
            targets.push_back({c.x + rng.normal(0.0, stddev), c.y + rng.normal(0.0, stddev)});
        }
    return fit(sources, targets);
}

Vec2 TpsTransform::operator()(Vec2 u) const {
    double x = affine_[0][0] * u.x + affine_[0][1] * u.y + affine_[0][2];
    double y = affine_[1][0] * u.x + affine_[1][1] * u.y + affine_[1][2];
    for (size_t i = 0; i < controls_.size(); ++i) {
        const double dx = u.x - controls_[i].x;
        const double dy = u.y - controls_[i].y;
        const double r2 = dx * dx + dy * dy;
        if (r2 > 1e-12) {
            const double k = 0.5 * r2 * std::log(r2);
            x += kernel_weights_[i].x * k;
            y += kernel_weights_[i].y * k;
        }
    }
    return {x, y};
}

WarpField make_tps_warp(int grid_h, int grid_w, double sigma, int h, int w, uint64_t seed) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("make_tps_warp: non-positive size");
    if (grid_h < 2 || grid_w < 2) throw std::invalid_argument("make_tps_warp: grid must be >= 2x2");
    if (sigma < 0.0) throw std::invalid_argument("make_tps_warp: negative sigma");
    if (sigma == 0.0) return WarpField::identity(h, w);
    TpsTransform tps = TpsTransform::random(grid_h, grid_w, sigma, h, w, seed);
    return WarpField::from_function(h, w, h, w, [&](Vec2 u) { return tps(u); });
}

std::pair<std::vector<Vec2>, std::vector<uint8_t>> map_coords(const WarpField& warp,
                                                              const std::vector<Vec2>& points) {
    std::vector<Vec2> mapped(points.size());
    std::vector<uint8_t> flags(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec2 u = points[i];
        const bool in_range =
            u.x >= 0.0 && u.x <= warp.src_w - 1.0 && u.y >= 0.0 && u.y <= warp.src_h - 1.0;
        mapped[i] = field_lookup(warp, u.x, u.y);
        flags[i] = (in_range && mask_lookup(warp, u.x, u.y)) ? 1 : 0;
    }
    return {std::move(mapped), std::move(flags)};
}

WarpField compose(const WarpField& g1, const WarpField& g2) {
    WarpField f;
    f.src_h = g1.src_h;
    f.src_w = g1.src_w;
    f.tgt_h = g2.tgt_h;
    f.tgt_w = g2.tgt_w;
    f.forward_map.resize(size_t(f.src_h) * f.src_w * 2);
    f.valid_mask.resize(size_t(f.src_h) * f.src_w);
    for (int y = 0; y < f.src_h; ++y)
        for (int x = 0; x < f.src_w; ++x) {
            const size_t i = size_t(y) * f.src_w + x;
            const Vec2 mid = g1.at(y, x);
            const Vec2 out = field_lookup(g2, mid.x, mid.y);
            const bool mid_in =
                mid.x >= 0.0 && mid.x <= g2.src_w - 1.0 && mid.y >= 0.0 && mid.y <= g2.src_h - 1.0;
            f.forward_map[i * 2] = float(out.x);
            f.forward_map[i * 2 + 1] = float(out.y);
            f.valid_mask[i] = (g1.valid_at(y, x) && mid_in && mask_lookup(g2, mid.x, mid.y) &&
                               out.x >= 0.0 && out.x <= f.tgt_w - 1.0 && out.y >= 0.0 &&
                               out.y <= f.tgt_h - 1.0)
                                  ? 1
                                  : 0;
        }
    return f;
}

std::vector<float> invert_warp(const WarpField& warp) {
    const int th = warp.tgt_h, tw = warp.tgt_w;
    const size_t cells = size_t(th) * tw;
    std::vector<double> acc_x(cells, 0.0), acc_y(cells, 0.0), acc_w(cells, 0.0);

    // splat supersampled forward samples into target bins
    const int ss = 2;
    const double step = 1.0 / ss;
    for (double uy = 0.0; uy <= warp.src_h - 1 + 1e-9; uy += step)
        for (double ux = 0.0; ux <= warp.src_w - 1 + 1e-9; ux += step) {
            const Vec2 v = field_lookup(warp, ux, uy);
            if (v.x < -0.5 || v.x > tw - 0.5 || v.y < -0.5 || v.y > th - 0.5) continue;
            const int x0 = int(std::floor(v.x));
            const int y0 = int(std::floor(v.y));
            const double fx = v.x - x0;
            const double fy = v.y - y0;
            const int xs[2] = {x0, x0 + 1};
            const int ys[2] = {y0, y0 + 1};
            const double wx[2] = {1 - fx, fx};
            const double wy[2] = {1 - fy, fy};
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    if (ys[a] < 0 || ys[a] >= th || xs[b] < 0 || xs[b] >= tw) continue;
                    const double wgt = wy[a] * wx[b];
                    if (wgt <= 0.0) continue;
                    const size_t i = size_t(ys[a]) * tw + xs[b];
                    acc_x[i] += wgt * ux;
                    acc_y[i] += wgt * uy;
                    acc_w[i] += wgt;
                }
        }

    std::vector<double> bx(cells), by(cells);
    std::vector<uint8_t> known(cells, 0);
    for (size_t i = 0; i < cells; ++i)
        if (acc_w[i] > 1e-12) {
            bx[i] = acc_x[i] / acc_w[i];
            by[i] = acc_y[i] / acc_w[i];
            known[i] = 1;
        }

    // fill unreached cells from known neighbors
    for (int pass = 0; pass < th + tw; ++pass) {
        bool any_hole = false, any_fill = false;
        std::vector<uint8_t> next = known;
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x) {
                const size_t i = size_t(y) * tw + x;
                if (known[i]) continue;
                any_hole = true;
                double sx = 0, sy = 0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= th || nx < 0 || nx >= tw) continue;
                        const size_t j = size_t(ny) * tw + nx;
                        if (!known[j]) continue;
                        sx += bx[j];
                        sy += by[j];
                        ++n;
                    }
                if (n > 0) {
                    bx[i] = sx / n;
                    by[i] = sy / n;
                    next[i] = 1;
                    any_fill = true;
                }
            }
        known.swap(next);
        if (!any_hole || !any_fill) break;
    }

    // Gauss-Newton refinement of g(u) = v per target cell
    const double h = 0.5;
    for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) {
            const size_t i = size_t(y) * tw + x;
            double ux = std::clamp(bx[i], 0.0, double(warp.src_w - 1));
            double uy = std::clamp(by[i], 0.0, double(warp.src_h - 1));
            for (int it = 0; it < 3; ++it) {
                const Vec2 f0 = field_lookup(warp, ux, uy);
                const double rx = f0.x - x;
                const double ry = f0.y - y;
                if (std::abs(rx) < 1e-9 && std::abs(ry) < 1e-9) break;
                const Vec2 fxp = field_lookup(warp, ux + h, uy);
                const Vec2 fxm = field_lookup(warp, ux - h, uy);
                const Vec2 fyp = field_lookup(warp, ux, uy + h);
                const Vec2 fym = field_lookup(warp, ux, uy - h);
                // one-sided steps collapse at borders; normalize by actual span
                const double sxp = std::clamp(ux + h, 0.0, double(warp.src_w - 1));
                const double sxm = std::clamp(ux - h, 0.0, double(warp.src_w - 1));
                const double syp = std::clamp(uy + h, 0.0, double(warp.src_h - 1));
                const double sym = std::clamp(uy - h, 0.0, double(warp.src_h - 1));
                const double dxs = std::max(sxp - sxm, 1e-6);
                const double dys = std::max(syp - sym, 1e-6);
                const double j00 = (fxp.x - fxm.x) / dxs, j01 = (fyp.x - fym.x) / dys;
                const double j10 = (fxp.y - fxm.y) / dxs, j11 = (fyp.y - fym.y) / dys;
                const double det = j00 * j11 - j01 * j10;
                if (std::abs(det) < 1e-9) break;
                ux = std::clamp(ux - (j11 * rx - j01 * ry) / det, 0.0, double(warp.src_w - 1));
                uy = std::clamp(uy - (-j10 * rx + j00 * ry) / det, 0.0, double(warp.src_h - 1));
            }
            bx[i] = ux;
            by[i] = uy;
        }

    std::vector<float> back(cells * 2);
    for (size_t i = 0; i < cells; ++i) {
        back[i * 2] = float(bx[i]);
        back[i * 2 + 1] = float(by[i]);
    }
    return back;
}

Image apply_warp(const Image& image, const WarpField& warp) {
    if (image.h != warp.src_h || image.w != warp.src_w)
        throw std::invalid_argument("apply_warp: image size does not match warp source size");
    const std::vector<float> back = invert_warp(warp);
    Image out(warp.tgt_h, warp.tgt_w, image.c);
    for (int y = 0; y < warp.tgt_h; ++y)
        for (int x = 0; x < warp.tgt_w; ++x) {
            const size_t i = size_t(y) * warp.tgt_w + x;
            for (int ch = 0; ch < image.c; ++ch)
                out.at(y, x, ch) = sample_bilinear(image, back[i * 2], back[i * 2 + 1], ch);
        }
    return out;
}

}  // namespace lmk
