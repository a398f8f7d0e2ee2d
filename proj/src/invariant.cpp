#include "lmk/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

EncoderState::EncoderState(const BackboneSpec& spec, int queue_size, uint64_t seed)
    : query(spec, seed), key(spec, seed) {
    if (queue_size < 1) throw std::invalid_argument("EncoderState: queue_size must be >= 1");
    key.copy_params_from(query);
    Rng rng(Rng(seed).fork(0xABCDull).next_u64());
    queue = MatRM(queue_size, spec.embed_dim);
    for (int i = 0; i < queue.size(); ++i) queue.data()[i] = float(rng.normal());
    queue = l2_normalize_rows(queue);
    queue_head = 0;
}

double info_nce_loss(const Eigen::VectorXd& q, const Eigen::VectorXd& k_pos,
                     const Eigen::MatrixXd& negatives, double tau, bool strict_eq5,
                     Eigen::VectorXd* grad_q) {
    if (tau <= 0.0) throw std::invalid_argument("info_nce_loss: tau must be positive");
    if (q.size() != k_pos.size() || (negatives.size() > 0 && negatives.cols() != q.size()))
        throw std::invalid_argument("info_nce_loss: dimension mismatch");
    if (!q.allFinite() || !k_pos.allFinite() || !negatives.allFinite())
        throw NumericError("info_nce_loss: non-finite input");

    const double pos = q.dot(k_pos) / tau;
    Eigen::VectorXd neg = negatives * q / tau;

    // loss = -pos + logsumexp(logits); the positive logit joins the
    // denominator unless the strict printed form is requested.
    double max_logit = neg.size() > 0 ? neg.maxCoeff() : -std::numeric_limits<double>::infinity();
    if (!strict_eq5) max_logit = std::max(max_logit, pos);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < neg.size(); ++i) sum += std::exp(neg(i) - max_logit);
    if (!strict_eq5) sum += std::exp(pos - max_logit);
    const double lse = max_logit + std::log(sum);
    const double loss = lse - pos;

    if (grad_q) {
        // d(loss)/dq = (1/tau) * (sum_i p_i z_i + [!strict] p_pos k+ - k+)
        grad_q->setZero(q.size());
        for (Eigen::Index i = 0; i < neg.size(); ++i) {
            const double p = std::exp(neg(i) - lse);
            *grad_q += p * negatives.row(i).transpose();
        }
        if (!strict_eq5) {
            const double p_pos = std::exp(pos - lse);
            *grad_q += p_pos * k_pos;
        }
        *grad_q -= k_pos;
        *grad_q /= tau;
    }
    return loss;
}

void momentum_update(EncoderState& state) {
    const double m = state.momentum_m;
    auto kp = state.key.params();
    auto qp = state.query.params();
    for (size_t i = 0; i < kp.size(); ++i) {
        auto& k = *kp[i].value;
        const auto& q = *qp[i].value;
        for (size_t j = 0; j < k.size(); ++j) k[j] = float(m * double(k[j]) + (1.0 - m) * double(q[j]));
    }
}

void queue_enqueue(EncoderState& state, const MatRM& keys) {
    const int n = state.queue_size();
    const int b = int(keys.rows());
    if (b > n) throw std::invalid_argument("queue_enqueue: batch larger than queue");
    if (keys.cols() != state.queue.cols())
        throw std::invalid_argument("queue_enqueue: embedding dimension mismatch");
    for (int i = 0; i < b; ++i) {
        state.queue.row((state.queue_head + i) % n) = keys.row(i);
    }
    state.queue_head = b == 0 ? state.queue_head : (state.queue_head + b) % n;
}

double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * double(step) / double(total_steps)));
}

namespace {

uint64_t pair_seed(uint64_t base, int epoch, size_t index) {
    Rng r(base ^ (0x9e3779b97f4a7c15ull * (uint64_t(epoch) + 1)));
    return r.fork(index).next_u64();
}

// View pairs depend only on (seed, epoch, index), so worker threads change
// wall-clock time but not results.
std::vector<ViewPair> make_pairs(const std::vector<Image>& images,
                                 const std::vector<size_t>& indices, const TransformPolicy& policy,
                                 uint64_t base_seed, int epoch, int workers) {
    std::vector<ViewPair> pairs(indices.size());
    auto fill = [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i)
            pairs[i] = sample_view_pair(images[indices[i]], policy,
                                        pair_seed(base_seed, epoch, indices[i]));
    };
    if (workers <= 1 || indices.size() < 2) {
        fill(0, indices.size());
    } else {
        const int n_threads = std::min<size_t>(workers, indices.size());
        std::vector<std::thread> threads;
        const size_t chunk = (indices.size() + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const size_t lo = t * chunk;
            const size_t hi = std::min(indices.size(), lo + chunk);
            if (lo < hi) threads.emplace_back(fill, lo, hi);
        }
        for (auto& th : threads) th.join();
    }
    return pairs;
}

}  // namespace

EncoderState pretrain(const std::vector<Image>& images, const PretrainConfig& config,
                      std::vector<EpochMetrics>* metrics, const EpochCallback& on_epoch) {
    if (images.empty()) throw std::invalid_argument("pretrain: empty dataset");
    if (config.epochs < 1 || config.batch_size < 1)
        throw std::invalid_argument("pretrain: bad epochs/batch_size");

    EncoderState state(backbone_spec(config.backbone), config.queue_size, config.seed);
    state.momentum_m = config.momentum_m;
    state.tau_nce = config.tau_nce;

    auto qparams = state.query.params();
    SgdMomentum opt;
    opt.momentum = config.sgd_momentum;
    opt.weight_decay = config.weight_decay;

    const double scaled_lr = config.base_lr * double(config.batch_size) / 256.0;
    const long steps_per_epoch = (long(images.size()) + config.batch_size - 1) / config.batch_size;
    const long total_steps = steps_per_epoch * config.epochs;

    Rng shuffle_rng(Rng(config.seed).fork(0x51ull).next_u64());
    std::vector<size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);

    // Fill the queue with real keys before the first measured epoch;
    // otherwise epoch 1 scores against random negatives and its mean loss is
    // not comparable with later epochs.
    {
        size_t idx = 0;
        while (size_t(state.queue_head) + config.batch_size <= size_t(config.queue_size)) {
            std::vector<size_t> warm_idx;
            for (int b = 0; b < config.batch_size; ++b)
                warm_idx.push_back(order[idx++ % order.size()]);
            std::vector<ViewPair> pairs =
                make_pairs(images, warm_idx, config.policy, config.seed, 0, config.workers);
            std::vector<const Image*> views;
            for (const ViewPair& p : pairs) views.push_back(&p.view_b);
            queue_enqueue(state, state.key.embed_forward(Tensor::from_images(views), nullptr));
            if (state.queue_head == 0) break;  // wrapped exactly
        }
    }

    long step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // Fisher-Yates with the deterministic rng
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double loss_sum = 0.0;
        long loss_count = 0;
        double last_lr = 0.0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<size_t> batch_idx(order.begin() + start, order.begin() + end);
            std::vector<ViewPair> pairs =
                make_pairs(images, batch_idx, config.policy, config.seed, epoch, config.workers);

            std::vector<const Image*> views_a, views_b;
            for (const ViewPair& p : pairs) {
                views_a.push_back(&p.view_a);
                views_b.push_back(&p.view_b);
            }
            Backbone::EmbedCache cache;
            MatRM q = state.query.embed_forward(Tensor::from_images(views_a), &cache);
            MatRM k = state.key.embed_forward(Tensor::from_images(views_b), nullptr);

            const Eigen::MatrixXd negatives = state.queue.cast<double>();
            MatRM dq(q.rows(), q.cols());
            double batch_loss = 0.0;
            for (Eigen::Index i = 0; i < q.rows(); ++i) {
                Eigen::VectorXd grad;
                const double li =
                    info_nce_loss(q.row(i).transpose().cast<double>(),
                                  k.row(i).transpose().cast<double>(), negatives, config.tau_nce,
                                  config.strict_eq5, &grad);
                batch_loss += li;
                dq.row(i) = (grad / double(q.rows())).cast<float>().transpose();
            }
            batch_loss /= double(q.rows());
            if (!std::isfinite(batch_loss))
                throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step) + " (lr " +
                                   std::to_string(last_lr) + ", loss history mean " +
                                   std::to_string(loss_count ? loss_sum / loss_count : 0.0) + ")");
            loss_sum += batch_loss;
            ++loss_count;

            zero_grads(qparams);
            state.query.embed_backward(cache, dq);
            last_lr = cosine_lr(step, total_steps, scaled_lr);
            opt.lr = last_lr;
            opt.step(qparams);

            momentum_update(state);
            queue_enqueue(state, k);
            ++step;
        }

        EpochMetrics em{epoch, loss_sum / double(std::max(1L, loss_count)), last_lr};
        if (metrics) metrics->push_back(em);
        if (on_epoch) on_epoch(em);
    }
    return state;
}

}  // namespace lmk
