#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lmk/rng.hpp"
#include "lmk/tensor.hpp"

namespace lmk {

// Named view over one parameter array and its gradient buffer.
struct ParamRef {
    std::string name;
    std::vector<float>* value = nullptr;
    std::vector<float>* grad = nullptr;
};

struct Conv2d {
    int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
    std::vector<float> weight;  // (k*k*in_c) x out_c, row-major
    std::vector<float> bias;    // out_c
    std::vector<float> dweight, dbias;

    struct Cache {
        MatRM patches;  // im2col of the forward input
        int in_h = 0, in_w = 0, n = 0;
    };

    void init(int in_channels, int out_channels, int kernel, int stride_, Rng& rng);
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

// Per-location normalization over channels with learned scale/shift.
// Pointwise across space, so it commutes with translations exactly.
struct ChannelNorm {
    int c = 0;
    std::vector<float> gamma, beta;
    std::vector<float> dgamma, dbeta;
    static constexpr float kEps = 1e-5f;

    struct Cache {
        std::vector<float> xhat;
        std::vector<float> inv_std;  // one per location
        int n = 0, h = 0, w = 0;
    };

    void init(int channels);
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct Relu {
    struct Cache {
        std::vector<uint8_t> mask;
    };
    static Tensor forward(const Tensor& x, Cache* cache);
    static Tensor backward(const Cache& cache, const Tensor& dy);
};

struct Linear {
    int in_dim = 0, out_dim = 0;
    std::vector<float> weight;  // in_dim x out_dim row-major
    std::vector<float> bias;
    std::vector<float> dweight, dbias;

    struct Cache {
        MatRM input;
    };

    void init(int in, int out, Rng& rng);
    MatRM forward(const MatRM& x, Cache* cache) const;
    MatRM backward(const Cache& cache, const MatRM& dy);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

// N x H x W x C -> N x C mean over space.
MatRM global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const MatRM& dy, int h, int w);

// Row-wise x / max(||x||, eps).
MatRM l2_normalize_rows(const MatRM& x, float eps = 1e-8f);
MatRM l2_normalize_rows_backward(const MatRM& x, const MatRM& dy, float eps = 1e-8f);

struct SgdMomentum {
    double lr = 0.03, momentum = 0.9, weight_decay = 1e-4;
    std::vector<std::vector<float>> velocity;

    void step(std::vector<ParamRef>& params);
};

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
    long t = 0;
    std::vector<std::vector<float>> m, v;

    void step(std::vector<ParamRef>& params);
};

void zero_grads(std::vector<ParamRef>& params);

}  // namespace lmk
