// Acceptance harness: one criterion per invocation, one PASS/FAIL line each.
// Criteria run against fixed, code-pinned tolerances; the desk-scale
// experiment caches its dataset and checkpoints so reruns are incremental.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lmk/analysis.hpp"
#include "lmk/checkpoint.hpp"
#include "lmk/equivariant.hpp"
#include "lmk/errors.hpp"
#include "lmk/invariant.hpp"
#include "lmk/pipeline.hpp"
#include "lmk/regressor.hpp"
#include "lmk/rng.hpp"
#include "lmk/synthetic.hpp"

#ifndef LMK_CLI_PATH
#define LMK_CLI_PATH "lmk"
#endif

namespace fs = std::filesystem;
using namespace lmk;

namespace {

struct Failure {
    std::string reason;
};

void require(bool ok, const std::string& reason) {
    if (!ok) throw Failure{reason};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------- criteria

void param_accounting() {
    const struct {
        long long c, k, expect_thousands;
    } rows[] = {{64, 50, 17},  {3840, 50, 961}, {3840, 10, 192},
                {256, 50, 65}, {256, 10, 13},   {64, 50, 17}};
    for (const auto& r : rows) {
        const long long count = regressor_param_count(r.c, r.k, 5);
        const long long rounded = (count + 500) / 1000;
        require(rounded == r.expect_thousands,
                "C=" + std::to_string(r.c) + " K=" + std::to_string(r.k) + " gives " +
                    std::to_string(count) + " params (" + std::to_string(rounded) +
                    "K), expected " + std::to_string(r.expect_thousands) + "K");
        // the closed form must match an enumerated parameter struct exactly
        const RegressorParams p = RegressorParams::random_init(5, int(r.k), int(r.c), 1.0, 1);
        require(p.parameter_count() == count, "enumerated parameter count mismatch");
    }
}

void dim_accounting() {
    const BackboneSpec spec = backbone_spec("large");
    Backbone net(spec, 1);
    Rng rng(2);
    Image img(96, 96, 3);
    for (float& v : img.data) v = float(rng.uniform());

    const auto maps = net.forward_blocks(img, {1, 2, 3, 4, 5});
    const int expect_c[5] = {64, 256, 512, 1024, 2048};
    const int expect_s[5] = {48, 24, 12, 6, 3};
    for (int b = 0; b < 5; ++b) {
        require(maps[b].c == expect_c[b], "block " + std::to_string(b + 1) + " channels " +
                                              std::to_string(maps[b].c));
        require(maps[b].h == expect_s[b] && maps[b].w == expect_s[b],
                "block " + std::to_string(b + 1) + " spatial size " + std::to_string(maps[b].h));
    }

    const std::vector<FeatureMap> b25(maps.begin() + 1, maps.end());
    require(build_hypercolumn(b25, 48).c == 3840, "hypercolumn 2-5 is not 3840 channels");
    require(build_hypercolumn(maps, 48).c == 3904, "hypercolumn 1-5 is not 3904 channels");
    const std::vector<FeatureMap> b45(maps.begin() + 3, maps.end());
    require(build_hypercolumn(b45, 48).c == 3072, "hypercolumn 4-5 is not 3072 channels");
    const std::vector<FeatureMap> b35(maps.begin() + 2, maps.end());
    require(build_hypercolumn(b35, 48).c == 3584, "hypercolumn 3-5 is not 3584 channels");
    require(spec.hypercolumn_channels({2, 3, 4, 5}) == 3840, "spec accounting 2-5");
    require(spec.hypercolumn_channels({1, 2, 3, 4, 5}) == 3904, "spec accounting 1-5");
}

FeatureMap random_feat(int h, int w, int c, uint64_t seed, double offset = 0.0) {
    Rng rng(seed);
    FeatureMap fm(h, w, c);
    for (float& v : fm.data) v = float(rng.normal() + offset);
    return fm;
}

void loss_oracles() {
    // Eq. 4: row-stochastic match distribution vs brute-force enumeration
    for (int trial = 0; trial < 4; ++trial) {
        const int s = 3 + trial % 2;
        const FeatureMap a = random_feat(s, s, 5, 100 + trial);
        const FeatureMap b = random_feat(s, s, 5, 200 + trial);
        const double tau = 0.5;
        const MatchDistribution d = match_distribution(a, b, tau);
        for (int u = 0; u < s * s; ++u) {
            double row_sum = 0.0;
            std::vector<double> expect(size_t(s) * s);
            double z = 0.0;
            for (int v = 0; v < s * s; ++v) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int j = 0; j < 5; ++j) {
                    const double av = a.data[size_t(u) * 5 + j];
                    const double bv = b.data[size_t(v) * 5 + j];
                    dot += av * bv;
                    na += av * av;
                    nb += bv * bv;
                }
                expect[size_t(v)] = std::exp(dot / std::sqrt(na * nb) / tau);
                z += expect[size_t(v)];
            }
            for (int v = 0; v < s * s; ++v) {
                require(std::abs(d.probs(u, v) - expect[size_t(v)] / z) < 1e-6,
                        "match distribution differs from enumeration oracle");
                row_sum += d.probs(u, v);
            }
            require(std::abs(row_sum - 1.0) < 1e-5, "match row does not sum to 1");
        }
    }

    // Eq. 1: shifted-difference oracle on a 4x4 grid
    {
        const FeatureMap a = random_feat(4, 4, 6, 300);
        const FeatureMap b = random_feat(4, 4, 6, 301);
        const WarpField shift = WarpField::from_function(
            4, 4, 4, 4, [](Vec2 u) { return Vec2{u.x + 1.0, u.y}; });
        double expect = 0.0;
        int n = 0;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 3; ++x) {
                double d2 = 0.0;
                for (int j = 0; j < 6; ++j) {
                    const double dd = a.at(y, x, j) - b.at(y, x + 1, j);
                    d2 += dd * dd;
                }
                expect += d2;
                ++n;
            }
        require(std::abs(loss_equi_mse(a, b, shift) - expect / n) < 1e-6,
                "equivariance mse differs from index-shift oracle");
    }

    // Eq. 2: brute-force argmax scan, lowest-index tie break
    {
        const FeatureMap a = random_feat(3, 3, 4, 302);
        const FeatureMap b = random_feat(3, 3, 4, 303);
        const WarpField id = WarpField::identity(3, 3);
        double expect = 0.0;
        for (int u = 0; u < 9; ++u) {
            int best = 0;
            double best_val = -1e300;
            for (int v = 0; v < 9; ++v) {
                double dot = 0.0;
                for (int j = 0; j < 4; ++j)
                    dot += double(a.data[size_t(u) * 4 + j]) * b.data[size_t(v) * 4 + j];
                if (dot > best_val) {
                    best_val = dot;
                    best = v;
                }
            }
            const double dx = (u % 3) - (best % 3), dy = (u / 3) - (best / 3);
            expect += (dx * dx + dy * dy) / 9.0;
        }
        require(std::abs(loss_diversity_argmax(a, b, id) - expect) < 1e-6,
                "argmax diversity differs from enumeration oracle");
    }

    // Eq. 3: explicit double loop over (u, v)
    {
        const FeatureMap a = random_feat(3, 3, 4, 304);
        const FeatureMap b = random_feat(3, 3, 4, 305);
        const WarpField id = WarpField::identity(3, 3);
        const double tau = 0.5;
        const MatchDistribution p = match_distribution(a, b, tau);
        double expect = 0.0;
        for (int u = 0; u < 9; ++u)
            for (int v = 0; v < 9; ++v)
                expect += std::hypot(double(u % 3 - v % 3), double(u / 3 - v / 3)) * p.probs(u, v);
        expect /= 81.0;
        require(std::abs(loss_equi_soft(a, b, id, tau) - expect) < 1e-6,
                "soft equivariance loss differs from enumeration oracle");
    }

    // Eq. 5: uniform-similarity case
    {
        Eigen::VectorXd q(4), k(4);
        q << 1, 0, 0, 0;
        k << 0.5, std::sqrt(0.75), 0, 0;
        for (int n : {1, 7, 63}) {
            Eigen::MatrixXd negs(n, 4);
            for (int i = 0; i < n; ++i) {
                negs.row(i) << 0.5, 0, std::sqrt(0.75), 0;
            }
            require(std::abs(info_nce_loss(q, k, negs, 0.31) - std::log(double(n + 1))) < 1e-6,
                    "uniform-similarity loss is not ln(N+1)");
        }
    }
}

void gradient_suite() {
    // InfoNCE w.r.t. q at D=8
    {
        Rng rng(7);
        const int d = 8, n = 12;
        Eigen::VectorXd q(d), k(d);
        Eigen::MatrixXd negs(n, d);
        for (int i = 0; i < d; ++i) q(i) = rng.normal();
        for (int i = 0; i < d; ++i) k(i) = rng.normal();
        for (int i = 0; i < negs.size(); ++i) negs.data()[i] = rng.normal();
        q /= q.norm();
        k /= k.norm();
        for (int i = 0; i < n; ++i) negs.row(i) /= negs.row(i).norm();
        Eigen::VectorXd grad;
        info_nce_loss(q, k, negs, 0.2, false, &grad);
        const double h = 1e-6;
        for (int j = 0; j < d; ++j) {
            Eigen::VectorXd qp = q, qm = q;
            qp(j) += h;
            qm(j) -= h;
            const double fd =
                (info_nce_loss(qp, k, negs, 0.2) - info_nce_loss(qm, k, negs, 0.2)) / (2 * h);
            require(std::abs(fd - grad(j)) / std::max({std::abs(fd), std::abs(grad(j)), 1e-10}) <
                        1e-4,
                    "InfoNCE gradient component " + std::to_string(j) + " off");
        }
    }

    // soft-argmax on 5x5
    {
        Rng rng(3);
        Eigen::MatrixXd hm(5, 5);
        for (int i = 0; i < hm.size(); ++i) hm.data()[i] = rng.normal();
        const Vec2 dcoord{0.7, -0.4};
        const Eigen::MatrixXd grad = soft_argmax_backward(hm, 1.3, dcoord);
        const double h = 1e-6;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                Eigen::MatrixXd hp = hm, hmm = hm;
                hp(i, j) += h;
                hmm(i, j) -= h;
                const Vec2 pp = soft_argmax(hp, 1.3);
                const Vec2 pm = soft_argmax(hmm, 1.3);
                const double fd =
                    ((pp.x - pm.x) * dcoord.x + (pp.y - pm.y) * dcoord.y) / (2 * h);
                require(std::abs(fd - grad(i, j)) /
                                std::max({std::abs(fd), std::abs(grad(i, j)), 1e-10}) <
                            1e-4,
                        "soft-argmax gradient off at " + std::to_string(i) + "," +
                            std::to_string(j));
            }
    }

    // Eq. 3 w.r.t. feat_a on a 3x3, C=4 instance
    {
        FeatureMap a = random_feat(3, 3, 4, 15, 0.3);
        const FeatureMap b = random_feat(3, 3, 4, 16, 0.3);
        const WarpField id = WarpField::identity(3, 3);
        const double tau = 0.5;
        FeatureMap ga;
        loss_equi_soft(a, b, id, tau, false, &ga, nullptr);
        for (size_t i = 0; i < a.data.size(); ++i) {
            const float orig = a.data[i];
            const double h = 1e-4;
            a.data[i] = float(double(orig) + h);
            const double hp = a.data[i];
            const double lp = loss_equi_soft(a, b, id, tau);
            a.data[i] = float(double(orig) - h);
            const double hm = a.data[i];
            const double lm = loss_equi_soft(a, b, id, tau);
            a.data[i] = orig;
            const double fd = (lp - lm) / (hp - hm);
            require(std::abs(fd - ga.data[i]) /
                            std::max({std::abs(fd), std::abs(double(ga.data[i])), 1e-8}) <
                        1e-4,
                    "soft equivariance gradient off at entry " + std::to_string(i));
        }
    }

    // composed regressor forward: vector-norm relative error < 1e-3
    {
        Rng rng(23);
        const int s = 4, c = 5, k = 2;
        FeatureMap desc(s, s, c);
        for (float& v : desc.data) v = float(rng.normal());
        RegressorParams p = RegressorParams::random_init(1, k, c, 1.0, 29);
        LandmarkSet gt;
        gt.points = {{10.0, 20.0}};
        gt.visible = {1};
        RegressorGrads grads;
        regressor_loss(desc, p, gt, 31, 31, &grads);
        const double h = 1e-5;
        double diff2 = 0.0, norm2 = 0.0;
        auto fd_group = [&](double* base, const double* analytic, int n) {
            for (int i = 0; i < n; ++i) {
                const double orig = base[i];
                base[i] = orig + h;
                const double lp = regressor_loss(desc, p, gt, 31, 31);
                base[i] = orig - h;
                const double lm = regressor_loss(desc, p, gt, 31, 31);
                base[i] = orig;
                const double fd = (lp - lm) / (2 * h);
                diff2 += (fd - analytic[i]) * (fd - analytic[i]);
                norm2 += fd * fd;
            }
        };
        fd_group(p.filters[0].data(), grads.filters[0].data(), int(p.filters[0].size()));
        fd_group(p.filter_bias[0].data(), grads.filter_bias[0].data(), k);
        fd_group(p.mixer[0].data(), grads.mixer[0].data(), int(p.mixer[0].size()));
        fd_group(p.mixer_bias[0].data(), grads.mixer_bias[0].data(), 2);
        require(std::sqrt(diff2) / std::sqrt(norm2) < 1e-3,
                "composed regressor gradient rel error " + fmt(std::sqrt(diff2 / norm2)));
    }
}

void mechanism_suite() {
    // contraction factor of the momentum update
    {
        EncoderState state(backbone_spec("small"), 8, 1);
        Rng rng(5);
        for (auto& p : state.key.params())
            for (float& v : *p.value) v += float(rng.normal(0.0, 0.05));
        auto distance = [&]() {
            double d2 = 0.0;
            auto kp = state.key.params();
            auto qp = state.query.params();
            for (size_t i = 0; i < kp.size(); ++i)
                for (size_t j = 0; j < kp[i].value->size(); ++j) {
                    const double d = double((*kp[i].value)[j]) - double((*qp[i].value)[j]);
                    d2 += d * d;
                }
            return std::sqrt(d2);
        };
        const double before = distance();
        state.momentum_m = 0.999;
        momentum_update(state);
        const double ratio = distance() / before;
        require(std::abs(ratio - 0.999) < 1e-6,
                "contraction factor " + fmt(ratio) + " != 0.999");
    }

    // queue vs explicit ring-buffer simulation over 1000 random pushes
    {
        EncoderState state(backbone_spec("small"), 32, 9);
        const int n = 32, d = state.embed_dim();
        std::vector<std::vector<float>> sim(n, std::vector<float>(size_t(d)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) sim[size_t(i)][size_t(j)] = state.queue(i, j);
        int head = 0;
        Rng rng(11);
        for (int push = 0; push < 1000; ++push) {
            const int b = int(rng.uniform_index(9));
            MatRM keys(b, d);
            for (int i = 0; i < keys.size(); ++i) keys.data()[i] = float(rng.normal());
            queue_enqueue(state, keys);
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < d; ++j) sim[size_t((head + i) % n)][size_t(j)] = keys(i, j);
            if (b > 0) head = (head + b) % n;
            require(state.queue_head == head, "queue head diverged from simulation");
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                require(state.queue(i, j) == sim[size_t(i)][size_t(j)],
                        "queue content diverged from ring-buffer simulation");
    }

    // cosine schedule endpoints
    require(cosine_lr(0, 1234, 0.375) == 0.375, "cosine schedule start is not base_lr");
    require(cosine_lr(1234, 1234, 0.375) == 0.0, "cosine schedule end is not zero");
    require(std::abs(cosine_lr(617, 1234, 0.375) - 0.1875) < 1e-12, "cosine midpoint off");

    // exact spatial-permutation equivariance of the projection
    {
        const FeatureMap fm = random_feat(4, 4, 6, 22);
        Hypercolumn hc;
        hc.grid_h = hc.grid_w = 4;
        hc.c = 6;
        hc.blocks = {2};
        hc.channel_offsets = {0, 6};
        hc.data = fm.data;
        const Projector proj = Projector::random_init(6, 3, 23);
        Rng rng(24);
        std::vector<int> perm(16);
        for (int i = 0; i < 16; ++i) perm[size_t(i)] = i;
        for (size_t i = 16; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
        Hypercolumn permuted = hc;
        for (int cell = 0; cell < 16; ++cell)
            for (int j = 0; j < 6; ++j)
                permuted.data[size_t(cell) * 6 + j] = hc.data[size_t(perm[size_t(cell)]) * 6 + j];
        const FeatureMap direct = project_features(hc, proj);
        const FeatureMap of_permuted = project_features(permuted, proj);
        for (int cell = 0; cell < 16; ++cell)
            for (int j = 0; j < 3; ++j)
                require(of_permuted.data[size_t(cell) * 3 + j] ==
                            direct.data[size_t(perm[size_t(cell)]) * 3 + j],
                        "projection does not commute exactly with the permutation");
    }
}

void matching_oracle() {
    // Coordinate-encoding descriptors carried through known TPS warps must
    // match back to the warped position within half a grid cell.
    const int side = 96, grid = 48;
    const double cell_px = double(side - 1) / double(grid - 1);
    const double tol = 0.5 * cell_px;

    auto encode = [&](Vec2 p) {
        // flat hemisphere encoding: cosine argmax picks the nearest coordinate
        // (a large radius keeps the radial/tangential distortion negligible)
        return std::array<float, 3>{float(p.x - side / 2.0), float(p.y - side / 2.0),
                                    float(32.0 * side)};
    };

    Rng rng(5);
    int checked = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const WarpField warp = make_tps_warp(5, 5, 0.05, side, side, 1000 + trial);

        // perfectly equivariant descriptors: a reference location carries the
        // warped coordinate of its pixel (dense, so bilinear queries agree
        // with map_coords), a target cell its own coordinate
        FeatureMap ref_desc(side, side, 3), tgt_desc(grid, grid, 3);
        for (int py = 0; py < side; ++py)
            for (int px = 0; px < side; ++px) {
                const auto er = encode(warp.at(py, px));
                std::copy(er.begin(), er.end(), ref_desc.loc(py, px));
            }
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx) {
                const auto et = encode({gx * cell_px, gy * cell_px});
                std::copy(et.begin(), et.end(), tgt_desc.loc(gy, gx));
            }

        LandmarkSet ref;
        for (int l = 0; l < 5; ++l) {
            ref.points.push_back({rng.uniform(8.0, 88.0), rng.uniform(8.0, 88.0)});
            ref.visible.push_back(1);
        }
        auto [mapped, ok] = map_coords(warp, ref.points);
        const LandmarkSet pred = match_landmarks(ref_desc, tgt_desc, ref, side, side);
        for (int l = 0; l < 5; ++l) {
            if (!ok[l]) continue;
            // zero error up to grid quantization: within half a cell per axis
            worst = std::max({worst, std::abs(pred.points[l].x - mapped[l].x),
                              std::abs(pred.points[l].y - mapped[l].y)});
            ++checked;
        }
    }
    require(checked >= 80, "too few valid matching-oracle landmarks");
    require(worst <= tol + 1e-9,
            "per-axis matching error " + fmt(worst) + " px exceeds half-cell tolerance " +
                fmt(tol));
}

void nmf_pca_suite() {
    // monotone error history
    {
        Rng rng(5);
        Eigen::MatrixXd x(40, 24);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
        const NmfFactors f = nmf_factorize(x, 5, 150, 7);
        for (size_t i = 1; i < f.recon_error_history.size(); ++i)
            require(f.recon_error_history[i] <= f.recon_error_history[i - 1] + 1e-10,
                    "NMF error increased at iteration " + std::to_string(i));
    }
    // rank-1 recovery
    {
        Rng rng(1);
        Eigen::VectorXd u(24), v(10);
        for (int i = 0; i < u.size(); ++i) u(i) = rng.uniform(0.1, 1.0);
        for (int i = 0; i < v.size(); ++i) v(i) = rng.uniform(0.1, 1.0);
        const Eigen::MatrixXd x = u * v.transpose();
        const NmfFactors f = nmf_factorize(x, 1, 200, 3);
        const double rel = f.recon_error_history.back() / x.norm();
        require(rel < 1e-3, "rank-1 relative reconstruction error " + fmt(rel));
    }
    // PCA orthonormality and Gram-oracle span agreement
    {
        Rng rng(23);
        Eigen::MatrixXd x(50, 8);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
        const int k = 3;
        const PcaBasis basis = pca_basis(x, k);
        const Eigen::MatrixXd gram = basis.components * basis.components.transpose();
        require((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-5,
                "PCA components are not orthonormal");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * x);
        Eigen::MatrixXd oracle(k, 8);
        for (int i = 0; i < k; ++i) oracle.row(i) = eig.eigenvectors().col(7 - i).transpose();
        Eigen::BDCSVD<Eigen::MatrixXd> svd(oracle * basis.components.transpose());
        for (int i = 0; i < k; ++i)
            require(std::abs(svd.singularValues()(i) - 1.0) < 1e-4,
                    "PCA span differs from the Gram-matrix oracle");
    }
}

void plumbing_suite() {
    const fs::path work = fs::temp_directory_path() / "lmk_accept_plumbing";
    fs::remove_all(work);
    fs::create_directories(work);

    // checkpoint round trip, bitwise
    {
        EncoderState state(backbone_spec("small"), 16, 9);
        Rng rng(3);
        for (auto& p : state.query.params())
            for (float& v : *p.value) v += float(rng.normal(0.0, 0.01));
        const std::string path = (work / "enc.ckpt").string();
        save_encoder_checkpoint(state, path);
        EncoderState back = load_encoder_checkpoint(path);
        auto pa = state.query.params();
        auto pb = back.query.params();
        for (size_t i = 0; i < pa.size(); ++i)
            require(*pa[i].value == *pb[i].value, "checkpoint round trip not bitwise");
        require(back.queue == state.queue, "queue round trip not bitwise");
    }

    // annotation CSV round trip
    {
        std::vector<LandmarkSet> annos(2);
        annos[0].image_id = "a";
        annos[0].points = {{1.5, 2.25}, {3, 4}};
        annos[0].visible = {1, 0};
        annos[1].image_id = "b";
        annos[1].points = {{5, 6}, {7.125, 8}};
        annos[1].visible = {1, 1};
        const std::string path = (work / "annos.csv").string();
        save_annotations(annos, path);
        const auto back = load_annotations(path);
        require(back.size() == 2 && back[0].visible[1] == 0 &&
                    back[0].points[1].x == 3.0 && back[1].points[1].x == 7.125,
                "annotation round trip mismatch");
    }

    // CLI smoke pipeline, exit 0 end to end
    {
        const std::string cli = LMK_CLI_PATH;
        const std::string base = (work / "cli").string();
        fs::create_directories(base);
        std::ofstream cfg(base + "/cfg.ini");
        cfg << "seed = 1\n[pretrain]\nepochs = 2\nbatch_size = 8\nqueue_size = 32\n"
               "backbone = small\n[transforms]\ncrop_scale_min = 0.8\n"
               "jitter_brightness = 0.2\n[projector]\nproj_dim = 8\nproj_epochs = 1\n"
               "proj_grid = 12\nproj_images = 6\n[eval]\nmetric = pck\nK = 4\n"
               "n_same = 4\nn_diff = 4\nregress_epochs = 4\nregress_grid = 12\n"
               "n_annotations = 8\n";
        cfg.close();
        auto run = [&](const std::string& cmd) {
            const std::string full = cli + " " + cmd + " >>" + base + "/log.txt 2>&1";
            const int rc = std::system(full.c_str());
            require(rc == 0, "CLI step failed (" + cmd + ")");
        };
        run("gen-data --n 24 --size 48 --seed 1 --out " + base + "/data");
        run("pretrain --data " + base + "/data/manifest.json --config " + base +
            "/cfg.ini --out " + base + "/pt");
        run("train-projector --data " + base + "/data/manifest.json --checkpoint " + base +
            "/pt/encoder.ckpt --config " + base + "/cfg.ini --out " + base + "/proj");
        run("eval-match --data " + base + "/data/manifest.json --checkpoint " + base +
            "/pt/encoder.ckpt --projector " + base + "/proj/projector.ckpt --config " + base +
            "/cfg.ini --out " + base + "/match");
        run("eval-regress --data " + base + "/data/manifest.json --checkpoint " + base +
            "/pt/encoder.ckpt --config " + base + "/cfg.ini --out " + base + "/reg");
        for (const char* out : {"/pt/metrics.csv", "/pt/encoder.ckpt", "/proj/projector.ckpt",
                                "/match/matching.csv", "/reg/regression.csv", "/reg/run.json"})
            require(fs::exists(base + out), std::string("missing CLI output ") + out);

        // usage errors exit with 2
        const int rc_usage = std::system(
            (cli + " eval-match --data " + base + "/data/manifest.json >/dev/null 2>&1").c_str());
        require(WEXITSTATUS(rc_usage) == 2, "missing required flag should exit 2");
        const int rc_unknown = std::system((cli + " no-such-cmd >/dev/null 2>&1").c_str());
        require(WEXITSTATUS(rc_unknown) == 2, "unknown subcommand should exit 2");
    }
    fs::remove_all(work);
}

// ------------------------------------------------------- desk-scale run

struct E2EConfig {
    // pinned desk-scale protocol
    int n_images = 2000;
    int image_side = 96;
    uint64_t data_seed = 424242;
    int epochs = 20;
    int batch_size = 32;
    int queue_size = 512;
    double base_lr = 0.03;
    double tau_nce = 0.07;
    int n_annotations = 100;
    int regress_grid = 24;
    int regress_K = 10;
    int regress_epochs = 60;
    int match_pairs = 100;
    int proj_dim = 64;
    int proj_grid = 32;
    int proj_images = 400;
    int proj_epochs = 10;
};

struct SeedOutcome {
    double pck_pre = 0.0, pck_rand = 0.0;
    double pck3 = 0.0, pck4 = 0.0, pck5 = 0.0;
    double diff_raw = 0.0, diff_proj = 0.0;
    bool a() const { return pck_pre - pck_rand >= 10.0; }
    bool b() const { return diff_proj <= 0.8 * diff_raw; }
    bool c() const { return std::max(pck3, pck4) > pck5; }
};

SeedOutcome run_e2e_seed(const Dataset& data, const DataSplit& split, const E2EConfig& cfg,
                         uint64_t seed, const fs::path& work) {
    const std::string ckpt_path = (work / ("encoder_seed" + std::to_string(seed) + ".ckpt")).string();
    EncoderState state;
    if (fs::exists(ckpt_path)) {
        std::fprintf(stderr, "[e2e] seed %llu: reusing %s\n",
                     (unsigned long long)seed, ckpt_path.c_str());
        state = load_encoder_checkpoint(ckpt_path);
    } else {
        std::vector<Image> train_images;
        for (const std::string& id : split.train_ids) train_images.push_back(data.image(id));
        PretrainConfig pcfg;
        pcfg.epochs = cfg.epochs;
        pcfg.batch_size = cfg.batch_size;
        pcfg.queue_size = cfg.queue_size;
        pcfg.base_lr = cfg.base_lr;
        pcfg.tau_nce = cfg.tau_nce;
        pcfg.seed = seed;
        pcfg.backbone = "small";
        pcfg.policy.crop_scale_min = 0.75;
        pcfg.policy.jitter_brightness = 0.4;
        pcfg.policy.jitter_contrast = 0.4;
        pcfg.policy.jitter_saturation = 0.4;
        pcfg.policy.jitter_hue = 0.1;
        if (const char* env = std::getenv("LMK_NUM_WORKERS")) pcfg.workers = std::atoi(env);
        state = pretrain(train_images, pcfg, nullptr, [&](const EpochMetrics& m) {
            std::fprintf(stderr, "[e2e] seed %llu epoch %d loss %.4f\n",
                         (unsigned long long)seed, m.epoch, m.loss_mean);
        });
        save_encoder_checkpoint(state, ckpt_path);
    }

    Backbone random_net(backbone_spec("small"), seed + 1000);

    auto regress_pck = [&](const Backbone& net, std::set<int> blocks) {
        DescriptorSource src;
        src.net = &net;
        src.blocks = std::move(blocks);
        src.grid = cfg.regress_grid;
        RegressorTrainConfig tcfg;
        tcfg.n_filters = cfg.regress_K;
        tcfg.epochs = cfg.regress_epochs;
        tcfg.lr = 1e-3;
        tcfg.weight_decay = 5e-4;
        tcfg.seed = seed;
        MetricConfig m;
        m.metric = Metric::Pck;
        return run_regression_eval(data, split, src, cfg.n_annotations, tcfg, m, cfg.regress_grid)
            .metric_value;
    };

    SeedOutcome out;
    out.pck_pre = regress_pck(state.query, {2, 3, 4, 5});
    out.pck_rand = regress_pck(random_net, {2, 3, 4, 5});
    out.pck3 = regress_pck(state.query, {3});
    out.pck4 = regress_pck(state.query, {4});
    out.pck5 = regress_pck(state.query, {5});

    DescriptorSource hyper;
    hyper.net = &state.query;
    hyper.grid = grid_for_side(cfg.image_side);
    const MatchingResult raw = run_matching(data, split.test_ids, hyper, cfg.match_pairs,
                                            cfg.match_pairs, 777, 5, 0.05);
    DescriptorSource proj_train_src = hyper;
    proj_train_src.grid = cfg.proj_grid;
    ProjectorTrainConfig pjcfg;
    pjcfg.epochs = cfg.proj_epochs;
    pjcfg.seed = seed;
    const int n_proj = std::min<int>(cfg.proj_images, int(split.train_ids.size()));
    const Projector proj = train_projector(
        [&](int i) { return proj_train_src.hypercolumn(data.image(split.train_ids[size_t(i)])); },
        n_proj, hyper.channels(), cfg.proj_dim, pjcfg);
    DescriptorSource projected = hyper;
    projected.projector = &proj;
    const MatchingResult pr = run_matching(data, split.test_ids, projected, cfg.match_pairs,
                                           cfg.match_pairs, 777, 5, 0.05);
    out.diff_raw = raw.diff_error;
    out.diff_proj = pr.diff_error;

    std::fprintf(stderr,
                 "[e2e] seed %llu: hyper %.1f rand %.1f | s3 %.1f s4 %.1f s5 %.1f | "
                 "diff raw %.2f proj %.2f -> a=%d b=%d c=%d\n",
                 (unsigned long long)seed, out.pck_pre, out.pck_rand, out.pck3, out.pck4,
                 out.pck5, out.diff_raw, out.diff_proj, out.a(), out.b(), out.c());
    return out;
}

void e2e_desk_scale() {
    const E2EConfig cfg;
    const char* env_work = std::getenv("LMK_ACCEPT_WORK");
    const fs::path work = env_work ? fs::path(env_work)
                                   : fs::temp_directory_path() / "lmk_accept_e2e";
    fs::create_directories(work);

    const fs::path data_dir = work / "dataset";
    if (!fs::exists(data_dir / "manifest.json")) {
        std::fprintf(stderr, "[e2e] generating %d blob faces...\n", cfg.n_images);
        generate_synthetic_dataset(cfg.n_images, cfg.image_side, cfg.image_side, cfg.data_seed,
                                   data_dir.string());
    }
    const Dataset data = open_dataset((data_dir / "manifest.json").string());
    const DataSplit split = split_dataset(data, 0.2);

    int a_pass = 0, b_pass = 0, c_pass = 0;
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        const SeedOutcome out = run_e2e_seed(data, split, cfg, seed, work);
        a_pass += out.a();
        b_pass += out.b();
        c_pass += out.c();
    }
    require(a_pass >= 2, "(a) pretrained-vs-random PCK gap >= 10 held on " +
                             std::to_string(a_pass) + "/3 seeds");
    require(b_pass >= 2, "(b) projector diff-identity error reduction >= 20% held on " +
                             std::to_string(b_pass) + "/3 seeds");
    require(c_pass >= 2, "(c) intermediate stage beats stage 5 on " + std::to_string(c_pass) +
                             "/3 seeds");
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<void()>> criteria = {
        {"param_accounting", param_accounting},
        {"dim_accounting", dim_accounting},
        {"loss_oracles", loss_oracles},
        {"gradient_suite", gradient_suite},
        {"mechanism_suite", mechanism_suite},
        {"matching_oracle", matching_oracle},
        {"nmf_pca_suite", nmf_pca_suite},
        {"plumbing_suite", plumbing_suite},
        {"e2e_desk_scale", e2e_desk_scale},
    };

    std::vector<std::string> names;
    if (argc > 1) {
        for (int i = 1; i < argc; ++i) names.emplace_back(argv[i]);
    } else {
        for (const auto& [name, fn] : criteria) names.push_back(name);
    }

    int failures = 0;
    for (const std::string& name : names) {
        auto it = criteria.find(name);
        if (it == criteria.end()) {
            std::printf("FAIL %s: unknown criterion\n", name.c_str());
            ++failures;
            continue;
        }
        try {
            it->second();
            std::printf("PASS %s\n", name.c_str());
        } catch (const Failure& f) {
            std::printf("FAIL %s: %s\n", name.c_str(), f.reason.c_str());
            ++failures;
        } catch (const std::exception& e) {
            std::printf("FAIL %s: unexpected error: %s\n", name.c_str(), e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
