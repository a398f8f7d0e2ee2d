#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

#include "lmk/backbone.hpp"
#include "lmk/view_pair.hpp"

namespace lmk {

// Query/key encoder pair with a FIFO queue of negative keys. The key encoder
// trails the query encoder by momentum updates and never sees gradients.
struct EncoderState {
    Backbone query;
    Backbone key;
    double momentum_m = 0.999;
    double tau_nce = 0.07;
    MatRM queue;  // N x D, unit rows
    int queue_head = 0;

    EncoderState() = default;
    EncoderState(const BackboneSpec& spec, int queue_size, uint64_t seed);

    int queue_size() const { return int(queue.rows()); }
    int embed_dim() const { return int(queue.cols()); }
};

// -log( exp(<q,k+>/tau) / (exp(<q,k+>/tau) + sum_i exp(<q,z_i>/tau)) ).
// strict_eq5 drops the positive term from the denominator. grad_q, when
// given, receives d(loss)/d(q).
double info_nce_loss(const Eigen::VectorXd& q, const Eigen::VectorXd& k_pos,
                     const Eigen::MatrixXd& negatives, double tau, bool strict_eq5 = false,
                     Eigen::VectorXd* grad_q = nullptr);

// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise over all arrays.
void momentum_update(EncoderState& state);

// Overwrites rows starting at queue_head; head advances modulo N.
void queue_enqueue(EncoderState& state, const MatRM& keys);

double cosine_lr(long step, long total_steps, double base_lr);

struct PretrainConfig {
    int epochs = 20;
    int batch_size = 32;
    int queue_size = 512;
    double momentum_m = 0.999;
    double tau_nce = 0.07;
    double base_lr = 0.03;  // scaled by batch_size / 256
    double weight_decay = 1e-4;
    double sgd_momentum = 0.9;
    bool strict_eq5 = false;
    std::string backbone = "small";
    uint64_t seed = 0;
    int workers = 0;  // <= 1 means synchronous single-worker
    TransformPolicy policy;
};

struct EpochMetrics {
    int epoch = 0;
    double loss_mean = 0.0;
    double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Contrastive pretraining over the image set. Deterministic for a fixed
// (config, seed) in single-worker mode; worker threads only parallelize
// view-pair generation.
EncoderState pretrain(const std::vector<Image>& images, const PretrainConfig& config,
                      std::vector<EpochMetrics>* metrics = nullptr,
                      const EpochCallback& on_epoch = nullptr);

}  // namespace lmk
