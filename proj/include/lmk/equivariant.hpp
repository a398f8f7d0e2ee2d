#pragma once

#include <Eigen/Core>

#include <functional>

#include "lmk/features.hpp"
#include "lmk/tensor.hpp"
#include "lmk/warp.hpp"

namespace lmk {

// Row-stochastic match probabilities p(v|u): row u ranges over feat_a cells,
// column v over feat_b cells, both in row-major grid order.
struct MatchDistribution {
    Eigen::MatrixXd probs;
    int grid_h = 0, grid_w = 0;  // feat_b grid
};

// Descriptors are L2-normalized per location before the inner products, so
// tau acts on cosine similarities.
MatchDistribution match_distribution(const FeatureMap& feat_a, const FeatureMap& feat_b,
                                     double tau);

// Mean squared feature distance between u and its warped partner gu, over
// warp-valid cells; feat_b is sampled bilinearly at gu.
double loss_equi_mse(const FeatureMap& feat_a, const FeatureMap& feat_b, const WarpField& warp);

// Mean squared grid distance between gu and the argmax inner-product match.
// Ties break toward the lowest row-major index. Diagnostic only.
double loss_diversity_argmax(const FeatureMap& feat_a, const FeatureMap& feat_b,
                             const WarpField& warp);

// (1/|Omega|^2) sum_u sum_v ||gu - v|| p(v|u), distances in grid-cell units,
// summed over warp-valid u. mean_over_u swaps the verbatim prefactor for
// 1/|valid|. Optional gradients w.r.t. the raw (pre-normalization) features.
double loss_equi_soft(const FeatureMap& feat_a, const FeatureMap& feat_b, const WarpField& warp,
                      double tau, bool mean_over_u = false, FeatureMap* grad_a = nullptr,
                      FeatureMap* grad_b = nullptr);

// Location-wise linear compression of hypercolumns.
struct Projector {
    int input_dim = 0;
    int output_dim = 0;
    double tau = 1.0 / 7.0;
    std::vector<float> w;  // input_dim x output_dim, row-major

    ConstMatMap mat() const { return ConstMatMap(w.data(), input_dim, output_dim); }
    static Projector random_init(int input_dim, int output_dim, uint64_t seed);
};

FeatureMap project_features(const Hypercolumn& hc, const Projector& proj);
FeatureMap project_features(const FeatureMap& fm, const Projector& proj);

struct ProjectorTrainConfig {
    int epochs = 10;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    double tau = 1.0 / 7.0;
    bool mean_over_u = false;
    uint64_t seed = 0;
};

// Trains w against the soft equivariance loss with x' = x and g = identity
// on the frozen features: every location must match itself, which pushes
// off-diagonal match mass down and makes locations distinct.
Projector train_projector(const std::function<Hypercolumn(int)>& features, int n_images,
                          int input_dim, int output_dim, const ProjectorTrainConfig& config);

// Mean of p(u|u) under the distribution induced by the (projected) features;
// the quantity projector training drives up.
double mean_self_match_probability(const FeatureMap& feat, double tau);

}  // namespace lmk
