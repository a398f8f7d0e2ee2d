#include "lmk/equivariant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lmk/nn.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

Eigen::MatrixXd rows_as_double(const FeatureMap& fm) {
    return ConstMatMap(fm.data.data(), fm.cells(), fm.c).cast<double>();
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd y = x;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double n = y.row(i).norm();
        if (n > 1e-12) y.row(i) /= n;
    }
    return y;
}

// warp-mapped coordinates of every feat_a cell, in feat_b grid units
void warped_cells(const FeatureMap& a, const WarpField& warp, std::vector<Vec2>* gu,
                  std::vector<uint8_t>* valid) {
    if (warp.src_h != a.h || warp.src_w != a.w)
        throw std::invalid_argument("equivariance loss: warp does not cover the feature grid");
    gu->resize(size_t(a.cells()));
    valid->resize(size_t(a.cells()));
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            const size_t i = size_t(y) * a.w + x;
            (*gu)[i] = warp.at(y, x);
            (*valid)[i] = warp.valid_at(y, x);
        }
}

void sample_map(const FeatureMap& fm, Vec2 p, double* out) {
    const double xc = std::clamp(p.x, 0.0, double(fm.w - 1));
    const double yc = std::clamp(p.y, 0.0, double(fm.h - 1));
    const int x0 = std::min(int(std::floor(xc)), fm.w - 1);
    const int y0 = std::min(int(std::floor(yc)), fm.h - 1);
    const int x1 = std::min(x0 + 1, fm.w - 1);
    const int y1 = std::min(y0 + 1, fm.h - 1);
    const double fx = xc - x0, fy = yc - y0;
    const float* p00 = fm.loc(y0, x0);
    const float* p01 = fm.loc(y0, x1);
    const float* p10 = fm.loc(y1, x0);
    const float* p11 = fm.loc(y1, x1);
    for (int j = 0; j < fm.c; ++j)
        out[j] = (1 - fy) * ((1 - fx) * p00[j] + fx * p01[j]) +
                 fy * ((1 - fx) * p10[j] + fx * p11[j]);
}

}  // namespace

MatchDistribution match_distribution(const FeatureMap& feat_a, const FeatureMap& feat_b,
                                     double tau) {
    if (feat_a.c != feat_b.c) throw std::invalid_argument("match_distribution: channel mismatch");
    if (tau <= 0.0) throw std::invalid_argument("match_distribution: tau must be positive");
    const Eigen::MatrixXd na = normalize_rows(rows_as_double(feat_a));
    const Eigen::MatrixXd nb = normalize_rows(rows_as_double(feat_b));
    Eigen::MatrixXd logits = na * nb.transpose() / tau;
    MatchDistribution dist;
    dist.grid_h = feat_b.h;
    dist.grid_w = feat_b.w;
    dist.probs.resize(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        dist.probs.row(i) = (e / e.sum()).matrix();
    }
    return dist;
}

double loss_equi_mse(const FeatureMap& feat_a, const FeatureMap& feat_b, const WarpField& warp) {
    if (feat_a.c != feat_b.c) throw std::invalid_argument("loss_equi_mse: channel mismatch");
    std::vector<Vec2> gu;
    std::vector<uint8_t> valid;
    warped_cells(feat_a, warp, &gu, &valid);

    std::vector<double> sampled(feat_a.c);
    double sum = 0.0;
    long n_valid = 0;
    for (int i = 0; i < feat_a.cells(); ++i) {
        if (!valid[i]) continue;
        sample_map(feat_b, gu[i], sampled.data());
        const float* au = feat_a.data.data() + size_t(i) * feat_a.c;
        double d2 = 0.0;
        for (int j = 0; j < feat_a.c; ++j) {
            const double d = double(au[j]) - sampled[j];
            d2 += d * d;
        }
        sum += d2;
        ++n_valid;
    }
    if (n_valid == 0) throw std::invalid_argument("loss_equi_mse: empty valid set");
    return sum / double(n_valid);
}

double loss_diversity_argmax(const FeatureMap& feat_a, const FeatureMap& feat_b,
                             const WarpField& warp) {
    if (feat_a.c != feat_b.c)
        throw std::invalid_argument("loss_diversity_argmax: channel mismatch");
    std::vector<Vec2> gu;
    std::vector<uint8_t> valid;
    warped_cells(feat_a, warp, &gu, &valid);

    const Eigen::MatrixXd a = rows_as_double(feat_a);
    const Eigen::MatrixXd b = rows_as_double(feat_b);
    const Eigen::MatrixXd sims = a * b.transpose();

    double sum = 0.0;
    long n_valid = 0;
    for (int i = 0; i < feat_a.cells(); ++i) {
        if (!valid[i]) continue;
        Eigen::Index best = 0;
        double best_val = sims(i, 0);
        for (Eigen::Index v = 1; v < sims.cols(); ++v)
            if (sims(i, v) > best_val) {  // strict: ties keep the lowest index
                best_val = sims(i, v);
                best = v;
            }
        const double vx = double(best % feat_b.w);
        const double vy = double(best / feat_b.w);
        const double dx = gu[i].x - vx, dy = gu[i].y - vy;
        sum += dx * dx + dy * dy;
        ++n_valid;
    }
    if (n_valid == 0) throw std::invalid_argument("loss_diversity_argmax: empty valid set");
    return sum / double(n_valid);
}

double loss_equi_soft(const FeatureMap& feat_a, const FeatureMap& feat_b, const WarpField& warp,
                      double tau, bool mean_over_u, FeatureMap* grad_a, FeatureMap* grad_b) {
    if (feat_a.c != feat_b.c) throw std::invalid_argument("loss_equi_soft: channel mismatch");
    if (tau <= 0.0) throw std::invalid_argument("loss_equi_soft: tau must be positive");
    std::vector<Vec2> gu;
    std::vector<uint8_t> valid;
    warped_cells(feat_a, warp, &gu, &valid);
    const long n_valid = std::accumulate(valid.begin(), valid.end(), 0L);
    if (n_valid == 0) throw std::invalid_argument("loss_equi_soft: empty valid set");

    const Eigen::MatrixXd a = rows_as_double(feat_a);
    const Eigen::MatrixXd b = rows_as_double(feat_b);
    const Eigen::MatrixXd na = normalize_rows(a);
    const Eigen::MatrixXd nb = normalize_rows(b);

    Eigen::MatrixXd p = na * nb.transpose() / tau;  // logits in place
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        Eigen::ArrayXd e = (p.row(i).array() - m).exp();
        p.row(i) = (e / e.sum()).matrix();
    }

    const double scale =
        mean_over_u ? 1.0 / double(n_valid) : 1.0 / (double(feat_a.cells()) * feat_b.cells());

    double loss = 0.0;
    Eigen::MatrixXd g;  // d(loss)/d(logits * tau) contribution matrix
    if (grad_a || grad_b) g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    Eigen::VectorXd dist(p.cols());
    for (int u = 0; u < feat_a.cells(); ++u) {
        if (!valid[u]) continue;
        for (int v = 0; v < feat_b.cells(); ++v) {
            const double vx = double(v % feat_b.w);
            const double vy = double(v / feat_b.w);
            dist(v) = std::hypot(gu[u].x - vx, gu[u].y - vy);
        }
        const double row_loss = p.row(u).dot(dist);
        loss += row_loss;
        if (grad_a || grad_b)
            g.row(u) = scale * p.row(u).cwiseProduct((dist.array() - row_loss).matrix().transpose());
    }
    loss *= scale;

    if (grad_a || grad_b) {
        const Eigen::MatrixXd dna = g * nb / tau;
        const Eigen::MatrixXd dnb = g.transpose() * na / tau;
        auto unnormalize = [](const Eigen::MatrixXd& raw, const Eigen::MatrixXd& normed,
                              const Eigen::MatrixXd& dn, FeatureMap* out, const FeatureMap& like) {
            if (!out) return;
            *out = FeatureMap(like.h, like.w, like.c);
            for (Eigen::Index i = 0; i < raw.rows(); ++i) {
                const double norm = std::max(raw.row(i).norm(), 1e-12);
                const double dot = normed.row(i).dot(dn.row(i));
                for (int j = 0; j < like.c; ++j)
                    out->data[size_t(i) * like.c + j] =
                        float((dn(i, j) - normed(i, j) * dot) / norm);
            }
        };
        unnormalize(a, na, dna, grad_a, feat_a);
        unnormalize(b, nb, dnb, grad_b, feat_b);
    }
    return loss;
}

Projector Projector::random_init(int input_dim, int output_dim, uint64_t seed) {
    if (output_dim >= input_dim)
        throw std::invalid_argument("Projector: output_dim must be smaller than input_dim");
    if (output_dim < 2) throw std::invalid_argument("Projector: output_dim must be >= 2");
    Projector p;
    p.input_dim = input_dim;
    p.output_dim = output_dim;
    p.w.resize(size_t(input_dim) * output_dim);
    Rng rng(seed);
    const double std = 1.0 / std::sqrt(double(input_dim));
    for (float& v : p.w) v = float(rng.normal(0.0, std));
    return p;
}

namespace {

FeatureMap project_rows(const float* data, int h, int w, int c, const Projector& proj) {
    if (c != proj.input_dim) throw std::invalid_argument("project_features: dimension mismatch");
    FeatureMap out(h, w, proj.output_dim);
    ConstMatMap x(data, size_t(h) * w, c);
    MatMap y(out.data.data(), size_t(h) * w, proj.output_dim);
    y.noalias() = x * proj.mat();
    return out;
}

}  // namespace

FeatureMap project_features(const Hypercolumn& hc, const Projector& proj) {
    return project_rows(hc.data.data(), hc.grid_h, hc.grid_w, hc.c, proj);
}

FeatureMap project_features(const FeatureMap& fm, const Projector& proj) {
    FeatureMap out = project_rows(fm.data.data(), fm.h, fm.w, fm.c, proj);
    out.source_block = fm.source_block;
    out.stride = fm.stride;
    return out;
}

Projector train_projector(const std::function<Hypercolumn(int)>& features, int n_images,
                          int input_dim, int output_dim, const ProjectorTrainConfig& config) {
    if (n_images < 1) throw std::invalid_argument("train_projector: empty feature source");
    Projector proj = Projector::random_init(input_dim, output_dim, config.seed);
    proj.tau = config.tau;

    std::vector<float> dw(proj.w.size(), 0.f);
    std::vector<ParamRef> params = {{"w", &proj.w, &dw}};
    Adam opt;
    opt.lr = config.lr;
    opt.weight_decay = config.weight_decay;

    Rng shuffle_rng(Rng(config.seed).fork(0x77ull).next_u64());
    std::vector<int> order(n_images);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        for (int idx : order) {
            const Hypercolumn hc = features(idx);
            if (hc.c != input_dim)
                throw std::invalid_argument("train_projector: feature dimension mismatch");
            const FeatureMap projected = project_features(hc, proj);

            const WarpField identity = WarpField::identity(hc.grid_h, hc.grid_w);
            FeatureMap ga, gb;
            loss_equi_soft(projected, projected, identity, config.tau, config.mean_over_u, &ga,
                           &gb);

            // chain rule through the shared projection: dL/dP = ga + gb
            ConstMatMap x(hc.data.data(), hc.cells(), hc.c);
            MatRM dp(hc.cells(), output_dim);
            for (int cell = 0; cell < hc.cells(); ++cell)
                for (int j = 0; j < output_dim; ++j)
                    dp(cell, j) = ga.data[size_t(cell) * output_dim + j] +
                                  gb.data[size_t(cell) * output_dim + j];
            MatMap dwm(dw.data(), input_dim, output_dim);
            dwm.noalias() = x.transpose() * dp;
            opt.step(params);
        }
    }
    return proj;
}

double mean_self_match_probability(const FeatureMap& feat, double tau) {
    const MatchDistribution dist = match_distribution(feat, feat, tau);
    return dist.probs.diagonal().mean();
}

}  // namespace lmk
