#include "lmk/regressor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

Vec2 soft_argmax(const Eigen::MatrixXd& heatmap, double beta) {
    if (beta <= 0.0) throw std::invalid_argument("soft_argmax: beta must be positive");
    if (!heatmap.allFinite()) throw NumericError("soft_argmax: non-finite heatmap");
    const double m = heatmap.maxCoeff();
    const Eigen::ArrayXXd p_un = ((heatmap.array() - m) * beta).exp();
    const double z = p_un.sum();
    Vec2 out{0.0, 0.0};
    for (Eigen::Index i = 0; i < heatmap.rows(); ++i)
        for (Eigen::Index j = 0; j < heatmap.cols(); ++j) {
            const double p = p_un(i, j) / z;
            out.x += p * double(j);
            out.y += p * double(i);
        }
    return out;
}

Eigen::MatrixXd soft_argmax_backward(const Eigen::MatrixXd& heatmap, double beta, Vec2 dcoord) {
    const double m = heatmap.maxCoeff();
    const Eigen::ArrayXXd p_un = ((heatmap.array() - m) * beta).exp();
    const double z = p_un.sum();
    const Eigen::ArrayXXd p = p_un / z;
    // expectation terms
    double ex = 0.0, ey = 0.0;
    for (Eigen::Index i = 0; i < heatmap.rows(); ++i)
        for (Eigen::Index j = 0; j < heatmap.cols(); ++j) {
            ex += p(i, j) * double(j);
            ey += p(i, j) * double(i);
        }
    Eigen::MatrixXd grad(heatmap.rows(), heatmap.cols());
    for (Eigen::Index i = 0; i < heatmap.rows(); ++i)
        for (Eigen::Index j = 0; j < heatmap.cols(); ++j)
            grad(i, j) = beta * p(i, j) * ((double(j) - ex) * dcoord.x + (double(i) - ey) * dcoord.y);
    return grad;
}

RegressorParams RegressorParams::random_init(int landmarks, int filters, int channels, double beta,
                                             uint64_t seed) {
    if (landmarks < 1 || filters < 1 || channels < 1)
        throw std::invalid_argument("RegressorParams: non-positive dimensions");
    RegressorParams p;
    p.n_landmarks = landmarks;
    p.n_filters = filters;
    p.channels = channels;
    p.softargmax_beta = beta;
    Rng rng(seed);
    const double fstd = 1.0 / std::sqrt(double(channels));
    const double mstd = 1.0 / std::sqrt(double(2 * filters));
    for (int l = 0; l < landmarks; ++l) {
        Eigen::MatrixXd f(filters, channels);
        for (int i = 0; i < f.size(); ++i) f.data()[i] = rng.normal(0.0, fstd);
        p.filters.push_back(std::move(f));
        p.filter_bias.push_back(Eigen::VectorXd::Zero(filters));
        Eigen::MatrixXd mix(2, 2 * filters);
        for (int i = 0; i < mix.size(); ++i) mix.data()[i] = rng.normal(0.0, mstd);
        p.mixer.push_back(std::move(mix));
        p.mixer_bias.push_back(Eigen::Vector2d::Zero());
    }
    return p;
}

long long RegressorParams::parameter_count() const {
    long long n = 0;
    for (int l = 0; l < n_landmarks; ++l)
        n += filters[l].size() + filter_bias[l].size() + mixer[l].size() + mixer_bias[l].size();
    return n;
}

long long regressor_param_count(long long channels, long long filters, long long landmarks) {
    if (channels < 1 || filters < 1 || landmarks < 1)
        throw std::invalid_argument("regressor_param_count: non-positive arguments");
    return landmarks * (filters * (channels + 5) + 2);
}

namespace {

struct LandmarkTrace {
    Eigen::MatrixXd heatmaps;  // cells x K
    std::vector<Vec2> cell_coords;  // per filter, soft-argmax output in cell units
    Eigen::VectorXd z;         // 2K normalized coordinates
    Eigen::Vector2d out;       // normalized prediction
};

Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> desc_rows(
    const FeatureMap& desc) {
    return {desc.data.data(), desc.cells(), desc.c};
}

LandmarkTrace forward_one(const FeatureMap& desc, const RegressorParams& p, int l) {
    LandmarkTrace t;
    t.heatmaps = desc_rows(desc).cast<double>() * p.filters[l].transpose();
    t.heatmaps.rowwise() += p.filter_bias[l].transpose();
    t.z.resize(2 * p.n_filters);
    for (int k = 0; k < p.n_filters; ++k) {
        const Eigen::MatrixXd hm =
            Eigen::Map<const Eigen::MatrixXd>(t.heatmaps.col(k).data(), desc.w, desc.h).transpose();
        const Vec2 c = soft_argmax(hm, p.softargmax_beta);
        t.cell_coords.push_back(c);
        t.z(2 * k) = desc.w > 1 ? 2.0 * c.x / (desc.w - 1) - 1.0 : 0.0;
        t.z(2 * k + 1) = desc.h > 1 ? 2.0 * c.y / (desc.h - 1) - 1.0 : 0.0;
    }
    t.out = p.mixer[l] * t.z + p.mixer_bias[l];
    return t;
}

}  // namespace

std::vector<Vec2> regressor_forward(const FeatureMap& desc, const RegressorParams& params,
                                    int image_h, int image_w) {
    if (desc.c != params.channels)
        throw std::invalid_argument("regressor_forward: descriptor channel mismatch");
    std::vector<Vec2> out;
    for (int l = 0; l < params.n_landmarks; ++l) {
        const LandmarkTrace t = forward_one(desc, params, l);
        out.push_back({(t.out(0) + 1.0) * 0.5 * (image_w - 1), (t.out(1) + 1.0) * 0.5 * (image_h - 1)});
    }
    return out;
}

namespace {

struct AdamD {
    double lr, wd;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<Eigen::MatrixXd> m, v;

    void step(std::vector<Eigen::MatrixXd*> params, const std::vector<Eigen::MatrixXd>& grads) {
        if (m.empty()) {
            for (auto* p : params) {
                m.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
                v.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        for (size_t i = 0; i < params.size(); ++i) {
            const Eigen::MatrixXd g = grads[i] + wd * (*params[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
            *params[i] -=
                (lr * (m[i] / bc1).array() / ((v[i] / bc2).array().sqrt() + eps)).matrix();
        }
    }
};

}  // namespace

double regressor_loss(const FeatureMap& desc, const RegressorParams& params,
                      const LandmarkSet& gt, int image_h, int image_w, RegressorGrads* grads) {
    if (desc.c != params.channels)
        throw std::invalid_argument("regressor_loss: descriptor channel mismatch");
    if (gt.count() != params.n_landmarks)
        throw std::invalid_argument("regressor_loss: landmark count mismatch");
    const int n_vis = gt.visible_count();
    if (n_vis == 0) throw std::invalid_argument("regressor_loss: no visible landmarks");

    if (grads) {
        grads->filters.assign(params.n_landmarks, Eigen::MatrixXd());
        grads->filter_bias.assign(params.n_landmarks, Eigen::VectorXd());
        grads->mixer.assign(params.n_landmarks, Eigen::MatrixXd());
        grads->mixer_bias.assign(params.n_landmarks, Eigen::Vector2d::Zero());
    }

    double loss = 0.0;
    for (int l = 0; l < params.n_landmarks; ++l) {
        if (grads) {
            grads->filters[l] = Eigen::MatrixXd::Zero(params.n_filters, params.channels);
            grads->filter_bias[l] = Eigen::VectorXd::Zero(params.n_filters);
            grads->mixer[l] = Eigen::MatrixXd::Zero(2, 2 * params.n_filters);
        }
        if (!gt.visible[l]) continue;
        const LandmarkTrace t = forward_one(desc, params, l);
        const double tx = image_w > 1 ? 2.0 * gt.points[l].x / (image_w - 1) - 1.0 : 0.0;
        const double ty = image_h > 1 ? 2.0 * gt.points[l].y / (image_h - 1) - 1.0 : 0.0;
        const double ex = t.out(0) - tx, ey = t.out(1) - ty;
        loss += (ex * ex + ey * ey) / n_vis;
        if (!grads) continue;

        const Eigen::Vector2d dout(2.0 * ex / n_vis, 2.0 * ey / n_vis);
        grads->mixer[l] = dout * t.z.transpose();
        grads->mixer_bias[l] = dout;
        const Eigen::VectorXd dz = params.mixer[l].transpose() * dout;

        Eigen::MatrixXd dheat(t.heatmaps.rows(), t.heatmaps.cols());
        for (int k = 0; k < params.n_filters; ++k) {
            const double dgx = desc.w > 1 ? dz(2 * k) * 2.0 / (desc.w - 1) : 0.0;
            const double dgy = desc.h > 1 ? dz(2 * k + 1) * 2.0 / (desc.h - 1) : 0.0;
            const Eigen::MatrixXd hm =
                Eigen::Map<const Eigen::MatrixXd>(t.heatmaps.col(k).data(), desc.w, desc.h)
                    .transpose();
            const Eigen::MatrixXd g = soft_argmax_backward(hm, params.softargmax_beta, {dgx, dgy});
            dheat.col(k) = Eigen::Map<const Eigen::VectorXd>(
                Eigen::MatrixXd(g.transpose()).data(), g.size());
        }
        grads->filters[l] = dheat.transpose() * desc_rows(desc).cast<double>();
        grads->filter_bias[l] = dheat.colwise().sum();
    }
    return loss;
}

RegressorParams train_regressor(const std::vector<FeatureMap>& descriptors_in,
                                const std::vector<LandmarkSet>& annotations, int image_h,
                                int image_w, const RegressorTrainConfig& config) {
    if (descriptors_in.empty() || annotations.empty())
        throw std::invalid_argument("train_regressor: empty annotation set");
    if (descriptors_in.size() != annotations.size())
        throw std::invalid_argument("train_regressor: descriptor/annotation count mismatch");
    const int L = annotations[0].count();
    const int C = descriptors_in[0].c;
    RegressorParams params = RegressorParams::random_init(L, config.n_filters, C,
                                                          config.softargmax_beta, config.seed);

    // optional per-channel scale equalization (folded back after training)
    std::vector<float> inv_scale(size_t(C), 1.f);
    std::vector<FeatureMap> scaled;
    const std::vector<FeatureMap>* descriptors = &descriptors_in;
    if (config.standardize) {
        std::vector<double> mean(size_t(C), 0.0), var(size_t(C), 0.0);
        long cells = 0;
        for (const FeatureMap& d : descriptors_in) {
            cells += d.cells();
            for (int cell = 0; cell < d.cells(); ++cell)
                for (int c = 0; c < C; ++c) mean[size_t(c)] += d.data[size_t(cell) * C + c];
        }
        for (int c = 0; c < C; ++c) mean[size_t(c)] /= double(cells);
        for (const FeatureMap& d : descriptors_in)
            for (int cell = 0; cell < d.cells(); ++cell)
                for (int c = 0; c < C; ++c) {
                    const double dd = d.data[size_t(cell) * C + c] - mean[size_t(c)];
                    var[size_t(c)] += dd * dd;
                }
        for (int c = 0; c < C; ++c)
            inv_scale[size_t(c)] = float(1.0 / std::max(1e-6, std::sqrt(var[size_t(c)] / cells)));
        scaled = descriptors_in;
        for (FeatureMap& d : scaled)
            for (int cell = 0; cell < d.cells(); ++cell)
                for (int c = 0; c < C; ++c) d.data[size_t(cell) * C + c] *= inv_scale[size_t(c)];
        descriptors = &scaled;
    }

    if (config.anchor_init) {
        Rng arng(Rng(config.seed).fork(0xA11C4042ull).next_u64());
        for (int l = 0; l < L; ++l) {
            for (int k = 0; k < config.n_filters; ++k) {
                // pick a training image where this landmark is visible
                int img = -1;
                for (int attempt = 0; attempt < 64; ++attempt) {
                    const int cand = int(arng.uniform_index(descriptors->size()));
                    if (annotations[size_t(cand)].visible[size_t(l)]) {
                        img = cand;
                        break;
                    }
                }
                if (img < 0) continue;  // landmark never visible: keep random filter
                const auto anchor = sample_descriptor((*descriptors)[size_t(img)],
                                                      annotations[size_t(img)].points[size_t(l)],
                                                      image_h, image_w, /*normalize=*/true);
                for (int c = 0; c < C; ++c) params.filters[l](k, c) = anchor[size_t(c)];
            }
            params.mixer[l].setZero();
            for (int k = 0; k < config.n_filters; ++k) {
                params.mixer[l](0, 2 * k) = 1.0 / config.n_filters;
                params.mixer[l](1, 2 * k + 1) = 1.0 / config.n_filters;
            }
        }
    }

    std::vector<AdamD> opts(L);
    for (auto& o : opts) {
        o.lr = config.lr;
        o.wd = config.weight_decay;
    }

    Rng shuffle_rng(Rng(config.seed).fork(0x33ull).next_u64());
    std::vector<size_t> order(descriptors->size());
    std::iota(order.begin(), order.end(), 0);

    RegressorGrads grads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        for (size_t idx : order) {
            const LandmarkSet& gt = annotations[idx];
            if (gt.count() != L) throw std::invalid_argument("train_regressor: inconsistent L");
            if (gt.visible_count() == 0) continue;
            regressor_loss((*descriptors)[idx], params, gt, image_h, image_w, &grads);
            for (int l = 0; l < L; ++l) {
                if (!gt.visible[l]) continue;
                Eigen::MatrixXd fb = params.filter_bias[l];
                Eigen::MatrixXd mb = params.mixer_bias[l];
                std::vector<Eigen::MatrixXd*> tensors = {&params.filters[l], &fb,
                                                         &params.mixer[l], &mb};
                std::vector<Eigen::MatrixXd> g = {grads.filters[l], grads.filter_bias[l],
                                                  grads.mixer[l], grads.mixer_bias[l]};
                opts[l].step(tensors, g);
                params.filter_bias[l] = fb;
                params.mixer_bias[l] = mb;
            }
        }
    }

    if (config.standardize) {
        // fold the training-time channel scaling into the filters
        for (int l = 0; l < L; ++l)
            for (int k = 0; k < config.n_filters; ++k)
                for (int c = 0; c < C; ++c) params.filters[l](k, c) *= inv_scale[size_t(c)];
    }
    return params;
}

}  // namespace lmk
