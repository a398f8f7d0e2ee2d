#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "lmk/features.hpp"
#include "lmk/tensor.hpp"
#include "lmk/image.hpp"

namespace lmk {

struct NmfFactors {
    Eigen::MatrixXd w;  // M x k, per-row part loadings
    Eigen::MatrixXd h;  // k x C, part bases
    std::vector<double> recon_error_history;  // Frobenius error per iteration
};

// Multiplicative-update factorization of a nonnegative matrix, minimizing
// ||X - WH||_F. The error history is recorded every iteration and is
// nonincreasing.
NmfFactors nmf_factorize(const Eigen::MatrixXd& x, int k, int iters, uint64_t seed);

// Per-pixel nonnegative loadings against a fixed basis: the W-side
// multiplicative update iterated to convergence while H stays put, then each
// component min-max normalized into a heatmap.
std::vector<FeatureMap> part_heatmaps(const Hypercolumn& hc, const Eigen::MatrixXd& basis);

struct PcaBasis {
    Eigen::MatrixXd components;       // k x C, orthonormal rows
    Eigen::VectorXd singular_values;  // descending
};

// Top-k right singular vectors of X, without mean subtraction.
PcaBasis pca_basis(const Eigen::MatrixXd& x, int k);

double iou_binary(const Image& pred, const Image& gt, double threshold = 0.5);

struct SegmentationProbeConfig {
    int epochs = 80;
    double lr = 0.05;
    double weight_decay = 1e-4;
    uint64_t seed = 0;
};

struct SegmentationProbe {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double mean_iou = 0.0;  // on the held-out pairs
};

// Logistic per-pixel classifier over frozen descriptors; masks are resized
// to each feature grid. Reports mean IoU over the held-out set.
SegmentationProbe segmentation_probe(const std::vector<FeatureMap>& train_features,
                                     const std::vector<Image>& train_masks,
                                     const std::vector<FeatureMap>& test_features,
                                     const std::vector<Image>& test_masks,
                                     const SegmentationProbeConfig& config);

}  // namespace lmk
