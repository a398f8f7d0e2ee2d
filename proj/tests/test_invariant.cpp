#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lmk/errors.hpp"
#include "lmk/invariant.hpp"
#include "lmk/rng.hpp"
#include "lmk/synthetic.hpp"

using namespace lmk;

namespace {

Eigen::VectorXd unit(std::initializer_list<double> vals) {
    Eigen::VectorXd v(vals.size());
    int i = 0;
    for (double x : vals) v(i++) = x;
    return v / v.norm();
}

}  // namespace

TEST_CASE("info_nce equals ln(N+1) when all similarities coincide") {
    const int d = 6;
    Eigen::VectorXd q = unit({1, 0, 0, 0, 0, 0});
    // every candidate has the same similarity to q
    Eigen::VectorXd k = unit({0.5, std::sqrt(0.75), 0, 0, 0, 0});
    for (int n : {1, 5, 64}) {
        Eigen::MatrixXd negs(n, d);
        for (int i = 0; i < n; ++i)
            negs.row(i) = unit({0.5, 0, std::sqrt(0.75), 0, 0, 0}).transpose();
        const double loss = info_nce_loss(q, k, negs, 0.2);
        CHECK(loss == doctest::Approx(std::log(double(n + 1))).epsilon(1e-9));
    }
}

TEST_CASE("info_nce matches the scalar log-sum-exp oracle") {
    // <q,k+> = 1, two negatives at similarity 0, tau = 1:
    // loss = -log(e / (e + 2)) = ln(1 + 2/e)
    Eigen::VectorXd q = unit({1, 0, 0});
    Eigen::VectorXd k = q;
    Eigen::MatrixXd negs(2, 3);
    negs.row(0) = unit({0, 1, 0}).transpose();
    negs.row(1) = unit({0, 0, 1}).transpose();
    const double expect = std::log1p(2.0 * std::exp(-1.0));  // 0.55141279...
    CHECK(info_nce_loss(q, k, negs, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("info_nce saturates to ~0 at extreme logit gaps") {
    Eigen::VectorXd q = unit({1, 0});
    Eigen::VectorXd k = q;
    Eigen::MatrixXd negs(8, 2);
    for (int i = 0; i < 8; ++i) negs.row(i) = -q.transpose();
    const double loss = info_nce_loss(q, k, negs, 1.0 / 40.0);  // logits +40 / -40
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("info_nce is positive and strictly decreasing in the positive similarity") {
    Rng rng(3);
    Eigen::MatrixXd negs(16, 8);
    for (int i = 0; i < negs.size(); ++i) negs.data()[i] = rng.normal();
    for (int i = 0; i < negs.rows(); ++i) negs.row(i) /= negs.row(i).norm();
    Eigen::VectorXd q(8);
    for (int i = 0; i < 8; ++i) q(i) = rng.normal();
    q /= q.norm();

    double prev = 1e18;
    for (double sim : {-0.5, 0.0, 0.4, 0.8, 0.99}) {
        // build k+ with the requested similarity in the plane spanned by q and an orthogonal vector
        Eigen::VectorXd ortho = Eigen::VectorXd::Unit(8, 3) -
                                q * q(3);
        ortho /= ortho.norm();
        Eigen::VectorXd k = sim * q + std::sqrt(1 - sim * sim) * ortho;
        const double loss = info_nce_loss(q, k, negs, 0.1);
        CHECK(loss > 0.0);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("info_nce gradient matches central finite differences at D=8") {
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
        CHECK(std::abs(fd - grad(j)) / std::max({std::abs(fd), std::abs(grad(j)), 1e-10}) < 1e-4);
    }
}

TEST_CASE("strict printed form drops the positive from the denominator") {
    Eigen::VectorXd q = unit({1, 0, 0});
    Eigen::MatrixXd negs(4, 3);
    for (int i = 0; i < 4; ++i) negs.row(i) = unit({0.5, std::sqrt(0.75), 0}).transpose();
    Eigen::VectorXd k = unit({0.5, std::sqrt(0.75), 0});
    // all similarities equal: strict form gives ln(N), inclusive form ln(N+1)
    CHECK(info_nce_loss(q, k, negs, 1.0, true) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    CHECK(info_nce_loss(q, k, negs, 1.0, false) == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    // and it is unbounded below once the positive dominates
    CHECK(info_nce_loss(q, q, negs, 0.05, true) < 0.0);
}

TEST_CASE("info_nce rejects non-finite input") {
    Eigen::VectorXd q = unit({1, 0});
    Eigen::VectorXd bad = q;
    bad(0) = std::nan("");
    Eigen::MatrixXd negs = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(info_nce_loss(bad, q, negs, 0.1), NumericError);
    CHECK_THROWS_AS(info_nce_loss(q, q, negs, 0.0), std::invalid_argument);
}

TEST_CASE("momentum update endpoints and contraction") {
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
    CHECK(distance() == doctest::Approx(0.999 * before).epsilon(1e-5));

    // m = 1 freezes the key encoder
    EncoderState frozen(backbone_spec("small"), 8, 2);
    for (auto& p : frozen.key.params()) (*p.value)[0] += 1.f;
    const auto snapshot = *frozen.key.params()[0].value;
    frozen.momentum_m = 1.0;
    momentum_update(frozen);
    CHECK(*frozen.key.params()[0].value == snapshot);

    // m = 0 copies the query encoder
    frozen.momentum_m = 0.0;
    momentum_update(frozen);
    auto kp = frozen.key.params();
    auto qp = frozen.query.params();
    for (size_t i = 0; i < kp.size(); ++i) CHECK(*kp[i].value == *qp[i].value);
}

TEST_CASE("one momentum step from 0 toward 1 lands on 1-m") {
    EncoderState state(backbone_spec("small"), 4, 3);
    auto kp = state.key.params();
    auto qp = state.query.params();
    std::fill(kp[0].value->begin(), kp[0].value->end(), 0.f);
    std::fill(qp[0].value->begin(), qp[0].value->end(), 1.f);
    state.momentum_m = 0.999;
    momentum_update(state);
    for (float v : *kp[0].value) CHECK(v == doctest::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("queue enqueue is a ring buffer") {
    EncoderState state(backbone_spec("small"), 4, 4);
    const int d = state.embed_dim();
    auto key_row = [&](float fill) {
        MatRM m(1, d);
        m.setConstant(fill);
        return m;
    };
    MatRM abcd(4, d);
    for (int i = 0; i < 4; ++i) abcd.row(i).setConstant(float(i + 1));
    queue_enqueue(state, abcd);
    CHECK(state.queue_head == 0);  // wrapped all the way around
    MatRM ef(2, d);
    ef.row(0).setConstant(5.f);
    ef.row(1).setConstant(6.f);
    queue_enqueue(state, ef);
    CHECK(state.queue_head == 2);
    CHECK(state.queue(0, 0) == 5.f);
    CHECK(state.queue(1, 0) == 6.f);
    CHECK(state.queue(2, 0) == 3.f);
    CHECK(state.queue(3, 0) == 4.f);

    // zero-row push is a no-op
    const MatRM before = state.queue;
    queue_enqueue(state, MatRM(0, d));
    CHECK(state.queue == before);
    CHECK(state.queue_head == 2);

    // N single pushes fully evict in insertion order
    for (int i = 0; i < 4; ++i) queue_enqueue(state, key_row(float(10 + i)));
    for (int i = 0; i < 4; ++i) CHECK(state.queue((2 + i) % 4, 0) == float(10 + i));

    MatRM too_big(5, d);
    too_big.setZero();
    CHECK_THROWS_AS(queue_enqueue(state, too_big), std::invalid_argument);
}

TEST_CASE("queue matches an explicit ring-buffer simulation") {
    EncoderState state(backbone_spec("small"), 16, 9);
    const int d = state.embed_dim();
    std::vector<std::vector<float>> sim(16);
    for (int i = 0; i < 16; ++i) {
        sim[i].assign(size_t(d), 0.f);
        for (int j = 0; j < d; ++j) sim[i][j] = state.queue(i, j);
    }
    int head = 0;
    Rng rng(11);
    for (int push = 0; push < 200; ++push) {
        const int b = int(rng.uniform_index(6));
        MatRM keys(b, d);
        for (int i = 0; i < keys.size(); ++i) keys.data()[i] = float(rng.normal());
        queue_enqueue(state, keys);
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < d; ++j) sim[(head + i) % 16][j] = keys(i, j);
        }
        if (b > 0) head = (head + b) % 16;
        CHECK(state.queue_head == head);
    }
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < d; ++j) CHECK(state.queue(i, j) == sim[i][j]);
}

TEST_CASE("encoder state invariants hold after construction") {
    EncoderState state(backbone_spec("small"), 32, 13);
    for (int i = 0; i < state.queue.rows(); ++i)
        CHECK(double(state.queue.row(i).norm()) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(state.queue_head == 0);
    auto kp = state.key.params();
    auto qp = state.query.params();
    REQUIRE(kp.size() == qp.size());
    for (size_t i = 0; i < kp.size(); ++i) {
        CHECK(kp[i].value->size() == qp[i].value->size());
        CHECK(*kp[i].value == *qp[i].value);  // key starts as a copy
    }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.5) == doctest::Approx(0.5));
    CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(-1, 100, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.5), std::invalid_argument);
}

TEST_CASE("pretraining drives the contrastive loss down on a synthetic fixture") {
    std::vector<Image> images;
    for (int i = 0; i < 96; ++i) images.push_back(render_blob_face(64, 64, 1000 + i).image);

    PretrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.queue_size = 64;
    cfg.seed = 5;
    cfg.policy.crop_scale_min = 0.75;
    cfg.policy.jitter_brightness = 0.3;
    cfg.policy.jitter_contrast = 0.3;
    cfg.policy.jitter_saturation = 0.3;

    std::vector<EpochMetrics> metrics;
    pretrain(images, cfg, &metrics);
    REQUIRE(metrics.size() == 5);
    CHECK(metrics[4].loss_mean < metrics[0].loss_mean);
    CHECK(metrics[0].lr > metrics[4].lr);
}

TEST_CASE("pretraining is deterministic per seed in single-worker mode") {
    std::vector<Image> images;
    for (int i = 0; i < 12; ++i) images.push_back(render_blob_face(48, 48, 2000 + i).image);
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.queue_size = 16;
    cfg.seed = 21;
    cfg.workers = 0;
    std::vector<EpochMetrics> m1, m2;
    pretrain(images, cfg, &m1);
    pretrain(images, cfg, &m2);
    REQUIRE(m1.size() == m2.size());
    for (size_t i = 0; i < m1.size(); ++i) CHECK(m1[i].loss_mean == m2[i].loss_mean);
}

TEST_CASE("identical images keep the loss pinned near ln(N+1)") {
    std::vector<Image> images(16, render_blob_face(48, 48, 3000).image);
    PretrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.queue_size = 32;
    cfg.seed = 31;
    std::vector<EpochMetrics> metrics;
    pretrain(images, cfg, &metrics);
    const double uniform = std::log(32.0 + 1.0);
    CHECK(std::abs(metrics.back().loss_mean - uniform) < 0.6);
}

TEST_CASE("worker threads only change wall time, not results") {
    std::vector<Image> images;
    for (int i = 0; i < 12; ++i) images.push_back(render_blob_face(48, 48, 4000 + i).image);
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.queue_size = 16;
    cfg.seed = 77;
    std::vector<EpochMetrics> serial, threaded;
    cfg.workers = 0;
    pretrain(images, cfg, &serial);
    cfg.workers = 3;
    pretrain(images, cfg, &threaded);
    REQUIRE(serial.size() == threaded.size());
    for (size_t i = 0; i < serial.size(); ++i)
        CHECK(serial[i].loss_mean == threaded[i].loss_mean);
}

TEST_CASE("pretrain rejects an empty dataset") {
    PretrainConfig cfg;
    CHECK_THROWS_AS(pretrain({}, cfg), std::invalid_argument);
}
