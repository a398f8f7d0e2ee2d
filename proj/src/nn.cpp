#include "lmk/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lmk {

Tensor Tensor::from_images(const std::vector<const Image*>& images) {
    if (images.empty()) throw std::invalid_argument("Tensor::from_images: empty batch");
    const Image& first = *images[0];
    Tensor t(int(images.size()), first.h, first.w, first.c);
    for (size_t i = 0; i < images.size(); ++i) {
        if (!images[i]->same_shape(first))
            throw std::invalid_argument("Tensor::from_images: mixed shapes in batch");
        std::memcpy(t.data.data() + i * images[i]->data.size(), images[i]->data.data(),
                    images[i]->data.size() * sizeof(float));
    }
    return t;
}

Tensor Tensor::from_image(const Image& image) { return from_images({&image}); }

namespace {

int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

MatRM im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow) {
    const int cols = k * k * x.c;
    MatRM patches(Eigen::Index(size_t(x.n) * oh * ow), cols);
    patches.setZero();
    for (int in = 0; in < x.n; ++in)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                float* row = patches.row((Eigen::Index(in) * oh + oy) * ow + ox).data();
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const float* src =
                            x.data.data() + ((size_t(in) * x.h + iy) * x.w + ix) * x.c;
                        std::memcpy(row + (ky * k + kx) * x.c, src, size_t(x.c) * sizeof(float));
                    }
                }
            }
    return patches;
}

void col2im(const MatRM& dpatches, int n, int in_h, int in_w, int c, int k, int stride, int pad,
            int oh, int ow, Tensor& dx) {
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const float* row = dpatches.row((Eigen::Index(in) * oh + oy) * ow + ox).data();
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= in_w) continue;
                        const float* src = row + (ky * k + kx) * c;
                        float* dst = &dx.at(in, iy, ix, 0);
                        for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                    }
                }
            }
}

}  // namespace

void Conv2d::init(int in_channels, int out_channels, int kernel, int stride_, Rng& rng) {
    in_c = in_channels;
    out_c = out_channels;
    k = kernel;
    stride = stride_;
    pad = kernel / 2;
    const int fan_in = k * k * in_c;
    const double std = std::sqrt(2.0 / fan_in);
    weight.resize(size_t(fan_in) * out_c);
    for (float& v : weight) v = float(rng.normal(0.0, std));
    bias.assign(out_c, 0.f);
    dweight.assign(weight.size(), 0.f);
    dbias.assign(bias.size(), 0.f);
}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
    if (x.c != in_c) throw std::invalid_argument("Conv2d: channel mismatch");
    const int oh = conv_out_dim(x.h, k, stride, pad);
    const int ow = conv_out_dim(x.w, k, stride, pad);
    MatRM patches = im2col(x, k, stride, pad, oh, ow);

    Tensor y(x.n, oh, ow, out_c);
    ConstMatMap wmat(weight.data(), k * k * in_c, out_c);
    MatMap ymat(y.data.data(), patches.rows(), out_c);
    ymat.noalias() = patches * wmat;
    ConstMatMap bmat(bias.data(), 1, out_c);
    ymat.rowwise() += bmat.row(0);

    if (cache) {
        cache->patches = std::move(patches);
        cache->in_h = x.h;
        cache->in_w = x.w;
        cache->n = x.n;
    }
    return y;
}

Tensor Conv2d::backward(const Cache& cache, const Tensor& dy) {
    const Eigen::Index rows = Eigen::Index(size_t(dy.n) * dy.h * dy.w);
    ConstMatMap dymat(dy.data.data(), rows, out_c);

    MatMap dwmat(dweight.data(), k * k * in_c, out_c);
    dwmat.noalias() += cache.patches.transpose() * dymat;
    // fixed-order accumulation; alignment-sensitive redux paths are not
    // bit-reproducible across allocations
    for (Eigen::Index r = 0; r < rows; ++r)
        for (int j = 0; j < out_c; ++j) dbias[j] += dymat(r, j);

    ConstMatMap wmat(weight.data(), k * k * in_c, out_c);
    MatRM dpatches = dymat * wmat.transpose();

    Tensor dx(cache.n, cache.in_h, cache.in_w, in_c);
    col2im(dpatches, cache.n, cache.in_h, cache.in_w, in_c, k, stride, pad, dy.h, dy.w, dx);
    return dx;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &dweight});
    out.push_back({prefix + ".bias", &bias, &dbias});
}

void ChannelNorm::init(int channels) {
    c = channels;
    gamma.assign(c, 1.f);
    beta.assign(c, 0.f);
    dgamma.assign(c, 0.f);
    dbeta.assign(c, 0.f);
}

Tensor ChannelNorm::forward(const Tensor& x, Cache* cache) const {
    if (x.c != c) throw std::invalid_argument("ChannelNorm: channel mismatch");
    Tensor y(x.n, x.h, x.w, x.c);
    const size_t locs = size_t(x.n) * x.h * x.w;
    if (cache) {
        cache->xhat.resize(locs * c);
        cache->inv_std.resize(locs);
        cache->n = x.n;
        cache->h = x.h;
        cache->w = x.w;
    }
    for (size_t i = 0; i < locs; ++i) {
        const float* xi = x.data.data() + i * c;
        float* yi = y.data.data() + i * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xi[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= c;
        const float inv = float(1.0 / std::sqrt(var + kEps));
        for (int j = 0; j < c; ++j) {
            const float xh = (xi[j] - float(mean)) * inv;
            yi[j] = gamma[j] * xh + beta[j];
            if (cache) cache->xhat[i * c + j] = xh;
        }
        if (cache) cache->inv_std[i] = inv;
    }
    return y;
}

Tensor ChannelNorm::backward(const Cache& cache, const Tensor& dy) {
    Tensor dx(dy.n, dy.h, dy.w, dy.c);
    const size_t locs = size_t(dy.n) * dy.h * dy.w;
    for (size_t i = 0; i < locs; ++i) {
        const float* dyi = dy.data.data() + i * c;
        const float* xh = cache.xhat.data() + i * c;
        float* dxi = dx.data.data() + i * c;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < c; ++j) {
            const double dxhat = double(dyi[j]) * gamma[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xh[j];
            dgamma[j] += dyi[j] * xh[j];
            dbeta[j] += dyi[j];
        }
        const double inv = cache.inv_std[i];
        for (int j = 0; j < c; ++j) {
            const double dxhat = double(dyi[j]) * gamma[j];
            dxi[j] = float(inv * (dxhat - sum_dxhat / c - double(xh[j]) * sum_dxhat_xhat / c));
        }
    }
    return dx;
}

void ChannelNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma, &dgamma});
    out.push_back({prefix + ".beta", &beta, &dbeta});
}

Tensor Relu::forward(const Tensor& x, Cache* cache) {
    Tensor y = x;
    if (cache) cache->mask.resize(x.size());
    for (size_t i = 0; i < y.size(); ++i) {
        const bool pos = y.data[i] > 0.f;
        if (!pos) y.data[i] = 0.f;
        if (cache) cache->mask[i] = pos;
    }
    return y;
}

Tensor Relu::backward(const Cache& cache, const Tensor& dy) {
    Tensor dx = dy;
    for (size_t i = 0; i < dx.size(); ++i)
        if (!cache.mask[i]) dx.data[i] = 0.f;
    return dx;
}

void Linear::init(int in, int out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    const double std = std::sqrt(2.0 / in);
    weight.resize(size_t(in) * out);
    for (float& v : weight) v = float(rng.normal(0.0, std));
    bias.assign(out, 0.f);
    dweight.assign(weight.size(), 0.f);
    dbias.assign(bias.size(), 0.f);
}

MatRM Linear::forward(const MatRM& x, Cache* cache) const {
    if (x.cols() != in_dim) throw std::invalid_argument("Linear: dimension mismatch");
    ConstMatMap wmat(weight.data(), in_dim, out_dim);
    ConstMatMap bmat(bias.data(), 1, out_dim);
    MatRM y = x * wmat;
    y.rowwise() += bmat.row(0);
    if (cache) cache->input = x;
    return y;
}

MatRM Linear::backward(const Cache& cache, const MatRM& dy) {
    MatMap dwmat(dweight.data(), in_dim, out_dim);
    dwmat.noalias() += cache.input.transpose() * dy;
    for (Eigen::Index r = 0; r < dy.rows(); ++r)
        for (int j = 0; j < out_dim; ++j) dbias[j] += dy(r, j);
    ConstMatMap wmat(weight.data(), in_dim, out_dim);
    return dy * wmat.transpose();
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &dweight});
    out.push_back({prefix + ".bias", &bias, &dbias});
}

MatRM global_avg_pool(const Tensor& x) {
    MatRM y(x.n, x.c);
    y.setZero();
    const float inv = 1.f / float(x.h * x.w);
    for (int in = 0; in < x.n; ++in) {
        ConstMatMap rows(x.data.data() + size_t(in) * x.h * x.w * x.c, x.h * x.w, x.c);
        y.row(in) = rows.colwise().sum() * inv;
    }
    return y;
}

Tensor global_avg_pool_backward(const MatRM& dy, int h, int w) {
    Tensor dx(int(dy.rows()), h, w, int(dy.cols()));
    const float inv = 1.f / float(h * w);
    for (int in = 0; in < dx.n; ++in) {
        MatMap rows(dx.data.data() + size_t(in) * h * w * dx.c, h * w, dx.c);
        rows.rowwise() = dy.row(in) * inv;
    }
    return dx;
}

MatRM l2_normalize_rows(const MatRM& x, float eps) {
    MatRM y = x;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const float norm = std::max(eps, float(y.row(i).norm()));
        y.row(i) /= norm;
    }
    return y;
}

MatRM l2_normalize_rows_backward(const MatRM& x, const MatRM& dy, float eps) {
    MatRM dx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const float norm = std::max(eps, float(x.row(i).norm()));
        const MatRM::ConstRowXpr xi = x.row(i);
        const float dot = float((xi * dy.row(i).transpose())(0, 0)) / (norm * norm);
        dx.row(i) = (dy.row(i) - xi * dot) / norm;
    }
    return dx;
}

void SgdMomentum::step(std::vector<ParamRef>& params) {
    if (velocity.size() != params.size()) {
        velocity.clear();
        for (auto& p : params) velocity.emplace_back(p.value->size(), 0.f);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        auto& theta = *params[i].value;
        auto& g = *params[i].grad;
        auto& v = velocity[i];
        for (size_t j = 0; j < theta.size(); ++j) {
            const float grad = g[j] + float(weight_decay) * theta[j];
            v[j] = float(momentum) * v[j] + grad;
            theta[j] -= float(lr) * v[j];
        }
    }
}

void Adam::step(std::vector<ParamRef>& params) {
    if (m.size() != params.size()) {
        m.clear();
        v.clear();
        for (auto& p : params) {
            m.emplace_back(p.value->size(), 0.f);
            v.emplace_back(p.value->size(), 0.f);
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& theta = *params[i].value;
        auto& g = *params[i].grad;
        for (size_t j = 0; j < theta.size(); ++j) {
            const double grad = double(g[j]) + weight_decay * theta[j];
            m[i][j] = float(beta1 * m[i][j] + (1.0 - beta1) * grad);
            v[i][j] = float(beta2 * v[i][j] + (1.0 - beta2) * grad * grad);
            const double mhat = m[i][j] / bc1;
            const double vhat = v[i][j] / bc2;
            theta[j] -= float(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

void zero_grads(std::vector<ParamRef>& params) {
    for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.f);
}

}  // namespace lmk
