#include "lmk/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lmk/rng.hpp"

namespace lmk {

namespace {
constexpr double kMuEps = 1e-12;
}

NmfFactors nmf_factorize(const Eigen::MatrixXd& x, int k, int iters, uint64_t seed) {
    if (k < 1) throw std::invalid_argument("nmf_factorize: k must be >= 1");
    if (iters < 1) throw std::invalid_argument("nmf_factorize: iters must be >= 1");
    if ((x.array() < 0.0).any())
        throw std::invalid_argument("nmf_factorize: input has negative entries");

    const Eigen::Index m = x.rows(), c = x.cols();
    Rng rng(seed);
    const double scale = std::sqrt(std::max(x.mean(), kMuEps) / double(k));
    NmfFactors f;
    f.w.resize(m, k);
    f.h.resize(k, c);
    for (Eigen::Index i = 0; i < f.w.size(); ++i) f.w.data()[i] = scale * (0.1 + rng.uniform());
    for (Eigen::Index i = 0; i < f.h.size(); ++i) f.h.data()[i] = scale * (0.1 + rng.uniform());

    for (int it = 0; it < iters; ++it) {
        // H <- H .* (W^T X) ./ (W^T W H)
        const Eigen::MatrixXd wtx = f.w.transpose() * x;
        const Eigen::MatrixXd wtwh = (f.w.transpose() * f.w) * f.h;
        f.h = f.h.cwiseProduct(wtx).cwiseQuotient(wtwh.array().max(kMuEps).matrix());
        // W <- W .* (X H^T) ./ (W H H^T)
        const Eigen::MatrixXd xht = x * f.h.transpose();
        const Eigen::MatrixXd whht = f.w * (f.h * f.h.transpose());
        f.w = f.w.cwiseProduct(xht).cwiseQuotient(whht.array().max(kMuEps).matrix());

        f.recon_error_history.push_back((x - f.w * f.h).norm());
    }
    return f;
}

std::vector<FeatureMap> part_heatmaps(const Hypercolumn& hc, const Eigen::MatrixXd& basis) {
    if (int(basis.cols()) != hc.c)
        throw std::invalid_argument("part_heatmaps: basis dimension mismatch");
    const int k = int(basis.rows());
    const Eigen::Index m = hc.cells();

    // rectified features, as in factorization
    Eigen::MatrixXd x = ConstMatMap(hc.data.data(), m, hc.c).cast<double>().cwiseMax(0.0);

    const Eigen::MatrixXd xht = x * basis.transpose();
    const Eigen::MatrixXd hht = basis * basis.transpose();
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(m, k, 1.0);
    for (int it = 0; it < 2000; ++it) {
        const Eigen::MatrixXd whht = w * hht;
        Eigen::MatrixXd next = w.cwiseProduct(xht.cwiseMax(0.0))
                                   .cwiseQuotient(whht.array().max(kMuEps).matrix());
        const double delta = (next - w).norm() / std::max(w.norm(), kMuEps);
        w = std::move(next);
        if (delta < 1e-9) break;
    }

    std::vector<FeatureMap> heatmaps;
    for (int j = 0; j < k; ++j) {
        FeatureMap fm(hc.grid_h, hc.grid_w, 1);
        const double lo = w.col(j).minCoeff();
        const double hi = w.col(j).maxCoeff();
        for (Eigen::Index i = 0; i < m; ++i) {
            double v;
            if (hi - lo > 1e-9)
                v = (w(i, j) - lo) / (hi - lo);
            else
                v = hi > 1e-9 ? 1.0 : 0.0;  // constant loading: uniformly on or off
            fm.data[size_t(i)] = float(v);
        }
        heatmaps.push_back(std::move(fm));
    }
    return heatmaps;
}

PcaBasis pca_basis(const Eigen::MatrixXd& x, int k) {
    if (k < 1 || k > std::min(x.rows(), x.cols()))
        throw std::invalid_argument("pca_basis: k out of range");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    PcaBasis basis;
    basis.components = svd.matrixV().leftCols(k).transpose();
    basis.singular_values = svd.singularValues().head(k);
    return basis;
}

double iou_binary(const Image& pred, const Image& gt, double threshold) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw std::invalid_argument("iou_binary: size mismatch");
    long inter = 0, uni = 0;
    for (int y = 0; y < gt.h; ++y)
        for (int x = 0; x < gt.w; ++x) {
            const bool p = pred.at(y, x, 0) > threshold;
            const bool g = gt.at(y, x, 0) > threshold;
            inter += p && g;
            uni += p || g;
        }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

SegmentationProbe segmentation_probe(const std::vector<FeatureMap>& train_features,
                                     const std::vector<Image>& train_masks,
                                     const std::vector<FeatureMap>& test_features,
                                     const std::vector<Image>& test_masks,
                                     const SegmentationProbeConfig& config) {
    if (train_features.empty() || train_features.size() != train_masks.size())
        throw std::invalid_argument("segmentation_probe: empty or mismatched training set");
    if (test_features.size() != test_masks.size())
        throw std::invalid_argument("segmentation_probe: mismatched held-out set");

    const int c = train_features[0].c;
    SegmentationProbe probe;
    probe.weights = Eigen::VectorXd::Zero(c);
    probe.bias = 0.0;

    // resize masks once to each feature grid
    auto grid_targets = [](const std::vector<FeatureMap>& feats, const std::vector<Image>& masks) {
        std::vector<Eigen::VectorXd> out;
        for (size_t i = 0; i < feats.size(); ++i) {
            const Image resized = resize_bilinear(masks[i], feats[i].h, feats[i].w);
            Eigen::VectorXd t(feats[i].cells());
            for (int cell = 0; cell < feats[i].cells(); ++cell)
                t(cell) = resized.data[size_t(cell) * resized.c] > 0.5 ? 1.0 : 0.0;
            out.push_back(std::move(t));
        }
        return out;
    };
    const std::vector<Eigen::VectorXd> train_t = grid_targets(train_features, train_masks);

    // full-batch logistic regression on standardized inputs; the affine
    // standardization is folded back into (weights, bias) afterwards
    std::vector<Eigen::MatrixXd> xs;
    for (const FeatureMap& fm : train_features)
        xs.push_back(ConstMatMap(fm.data.data(), fm.cells(), fm.c).cast<double>());

    long total_cells = 0;
    for (const auto& x : xs) total_cells += x.rows();

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(c);
    for (const auto& x : xs) mean += x.colwise().sum().transpose();
    mean /= double(total_cells);
    Eigen::VectorXd var = Eigen::VectorXd::Constant(c, 1e-12);
    for (const auto& x : xs) var += (x.rowwise() - mean.transpose()).colwise().squaredNorm().transpose();
    const Eigen::VectorXd inv_std = (var / double(total_cells)).cwiseSqrt().cwiseMax(1e-6).cwiseInverse();
    for (auto& x : xs) x = (x.rowwise() - mean.transpose()) * inv_std.asDiagonal();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(c);
        double gb = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const Eigen::VectorXd logits =
                (xs[i] * probe.weights).array() + probe.bias;
            const Eigen::VectorXd p = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
            const Eigen::VectorXd delta = p - train_t[i];
            gw += xs[i].transpose() * delta;
            gb += delta.sum();
        }
        gw /= double(total_cells);
        gb /= double(total_cells);
        gw += config.weight_decay * probe.weights;
        probe.weights -= config.lr * gw;
        probe.bias -= config.lr * gb;
    }
    probe.bias -= probe.weights.cwiseProduct(inv_std).dot(mean);
    probe.weights = probe.weights.cwiseProduct(inv_std);

    if (!test_features.empty()) {
        const std::vector<Eigen::VectorXd> test_t = grid_targets(test_features, test_masks);
        double iou_sum = 0.0;
        for (size_t i = 0; i < test_features.size(); ++i) {
            const FeatureMap& fm = test_features[i];
            const Eigen::MatrixXd x = ConstMatMap(fm.data.data(), fm.cells(), fm.c).cast<double>();
            const Eigen::VectorXd logits = (x * probe.weights).array() + probe.bias;
            Image pred(fm.h, fm.w, 1), gt(fm.h, fm.w, 1);
            for (int cell = 0; cell < fm.cells(); ++cell) {
                pred.data[cell] = logits(cell) > 0.0 ? 1.f : 0.f;
                gt.data[cell] = float(test_t[i](cell));
            }
            iou_sum += iou_binary(pred, gt);
        }
        probe.mean_iou = iou_sum / double(test_features.size());
    }
    return probe;
}

}  // namespace lmk
