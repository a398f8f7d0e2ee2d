#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "lmk/features.hpp"
#include "lmk/landmarks.hpp"

namespace lmk {

// Expected cell coordinate (x, y) under softmax(beta * heatmap). Cell (i, j)
// sits at coordinate (x=j, y=i).
Vec2 soft_argmax(const Eigen::MatrixXd& heatmap, double beta);

// d(loss)/d(heatmap) given d(loss)/d(coordinate).
Eigen::MatrixXd soft_argmax_backward(const Eigen::MatrixXd& heatmap, double beta, Vec2 dcoord);

// Per target landmark: K 1x1xC filters produce K heatmaps whose soft-argmax
// coordinates (normalized to [-1,1]) are mixed linearly into the output.
struct RegressorParams {
    int n_landmarks = 0;
    int n_filters = 0;  // K
    int channels = 0;   // C
    double softargmax_beta = 1.0;
    // per landmark
    std::vector<Eigen::MatrixXd> filters;  // K x C
    std::vector<Eigen::VectorXd> filter_bias;  // K
    std::vector<Eigen::MatrixXd> mixer;    // 2 x 2K
    std::vector<Eigen::Vector2d> mixer_bias;

    static RegressorParams random_init(int landmarks, int filters, int channels, double beta,
                                       uint64_t seed);
    long long parameter_count() const;
};

long long regressor_param_count(long long channels, long long filters, long long landmarks);

// Predictions in image pixel coordinates.
std::vector<Vec2> regressor_forward(const FeatureMap& desc, const RegressorParams& params,
                                    int image_h, int image_w);

struct RegressorGrads {
    std::vector<Eigen::MatrixXd> filters;
    std::vector<Eigen::VectorXd> filter_bias;
    std::vector<Eigen::MatrixXd> mixer;
    std::vector<Eigen::Vector2d> mixer_bias;
};

// Mean squared coordinate error in normalized [-1,1] units over visible
// landmarks of one image, with optional parameter gradients.
double regressor_loss(const FeatureMap& desc, const RegressorParams& params,
                      const LandmarkSet& gt, int image_h, int image_w,
                      RegressorGrads* grads = nullptr);

struct RegressorTrainConfig {
    int n_filters = 50;
    double softargmax_beta = 1.0;
    int epochs = 60;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    uint64_t seed = 0;
    // Head k starts as a matcher against the descriptor sampled at the
    // ground-truth landmark of one training image; random filters leave
    // soft-argmax nearly uniform and the heads never escape the centroid.
    bool anchor_init = true;
    // Per-channel scale equalization during training; the scales are folded
    // back into the filters, so the returned parameters apply to raw
    // descriptors.
    bool standardize = true;
};

// Minimizes mean squared coordinate error (in [-1,1] units) on visible
// landmarks over frozen per-image descriptors.
RegressorParams train_regressor(const std::vector<FeatureMap>& descriptors,
                                const std::vector<LandmarkSet>& annotations, int image_h,
                                int image_w, const RegressorTrainConfig& config);

}  // namespace lmk
