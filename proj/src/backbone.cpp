#include "lmk/backbone.hpp"

#include <cstring>
#include <stdexcept>

namespace lmk {

int BackboneSpec::hypercolumn_channels(const std::set<int>& block_ids) const {
    int c = 0;
    for (int b : block_ids) {
        if (b < 1 || b > 5) throw std::invalid_argument("hypercolumn_channels: block id out of range");
        c += stage_channels[b - 1];
    }
    return c;
}

BackboneSpec backbone_spec(const std::string& preset) {
    BackboneSpec s;
    s.name = preset;
    if (preset == "large") {
        s.stage_channels = {64, 256, 512, 1024, 2048};
        s.embed_dim = 128;
    } else if (preset == "half") {
        s.stage_channels = {32, 128, 256, 512, 1024};
        s.embed_dim = 128;
    } else if (preset == "small") {
        s.stage_channels = {16, 32, 64, 128, 256};
        s.embed_dim = 64;
    } else {
        throw std::invalid_argument("backbone_spec: unknown preset " + preset);
    }
    s.blocks_per_stage = 1;
    return s;
}

void BasicBlock::init(int channels, Rng& rng) {
    conv1.init(channels, channels, 3, 1, rng);
    conv2.init(channels, channels, 3, 1, rng);
    norm1.init(channels);
    norm2.init(channels);
}

Tensor BasicBlock::forward(const Tensor& x, Cache* cache) const {
    Tensor h = conv1.forward(x, cache ? &cache->c1 : nullptr);
    h = norm1.forward(h, cache ? &cache->n1 : nullptr);
    h = Relu::forward(h, cache ? &cache->r_mid : nullptr);
    h = conv2.forward(h, cache ? &cache->c2 : nullptr);
    h = norm2.forward(h, cache ? &cache->n2 : nullptr);
    for (size_t i = 0; i < h.size(); ++i) h.data[i] += x.data[i];
    return Relu::forward(h, cache ? &cache->r_out : nullptr);
}

Tensor BasicBlock::backward(const Cache& cache, const Tensor& dy) {
    Tensor d = Relu::backward(cache.r_out, dy);
    Tensor dskip = d;  // identity shortcut
    d = norm2.backward(cache.n2, d);
    d = conv2.backward(cache.c2, d);
    d = Relu::backward(cache.r_mid, d);
    d = norm1.backward(cache.n1, d);
    d = conv1.backward(cache.c1, d);
    for (size_t i = 0; i < d.size(); ++i) d.data[i] += dskip.data[i];
    return d;
}

void BasicBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    conv1.collect(prefix + ".conv1", out);
    norm1.collect(prefix + ".norm1", out);
    conv2.collect(prefix + ".conv2", out);
    norm2.collect(prefix + ".norm2", out);
}

void StageUnit::init(int in_c, int out_c, int n_blocks, Rng& rng) {
    down.init(in_c, out_c, 3, 2, rng);
    down_norm.init(out_c);
    blocks.resize(n_blocks);
    for (auto& b : blocks) b.init(out_c, rng);
}

Tensor StageUnit::forward(const Tensor& x, Cache* cache) const {
    if (cache) cache->bc.resize(blocks.size());
    Tensor h = down.forward(x, cache ? &cache->dc : nullptr);
    h = down_norm.forward(h, cache ? &cache->dn : nullptr);
    h = Relu::forward(h, cache ? &cache->dr : nullptr);
    for (size_t i = 0; i < blocks.size(); ++i)
        h = blocks[i].forward(h, cache ? &cache->bc[i] : nullptr);
    return h;
}

Tensor StageUnit::backward(const Cache& cache, const Tensor& dy) {
    Tensor d = dy;
    for (size_t i = blocks.size(); i-- > 0;) d = blocks[i].backward(cache.bc[i], d);
    d = Relu::backward(cache.dr, d);
    d = down_norm.backward(cache.dn, d);
    return down.backward(cache.dc, d);
}

void StageUnit::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    down.collect(prefix + ".down", out);
    down_norm.collect(prefix + ".down_norm", out);
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i + 1), out);
}

Backbone::Backbone(const BackboneSpec& spec, uint64_t seed) : spec_(spec) {
    Rng rng(seed);
    stem_.init(3, spec.stage_channels[0], 3, 2, rng);
    stem_norm_.init(spec.stage_channels[0]);
    for (int k = 0; k < 4; ++k)
        stages_[k].init(spec.stage_channels[k], spec.stage_channels[k + 1], spec.blocks_per_stage,
                        rng);
    head_.init(spec.stage_channels[4], spec.embed_dim, rng);
}

Tensor Backbone::run_to_stage(const Tensor& input, int last_block,
                              std::vector<Tensor>* taps) const {
    Tensor h = stem_.forward(input, nullptr);
    h = stem_norm_.forward(h, nullptr);
    h = Relu::forward(h, nullptr);
    if (taps) taps->push_back(h);
    for (int k = 0; k < 4 && k + 2 <= last_block; ++k) {
        h = stages_[k].forward(h, nullptr);
        if (taps) taps->push_back(h);
    }
    return h;
}

std::vector<FeatureMap> Backbone::forward_blocks(const Image& image,
                                                 const std::set<int>& block_ids) const {
    for (int b : block_ids)
        if (b < 1 || b > 5) throw std::invalid_argument("forward_blocks: block id out of range");
    if (block_ids.empty()) return {};

    const int last = *block_ids.rbegin();
    std::vector<Tensor> taps;
    run_to_stage(Tensor::from_image(image), last, &taps);

    std::vector<FeatureMap> out;
    for (int b : block_ids) {
        const Tensor& t = taps[b - 1];
        FeatureMap fm(t.h, t.w, t.c);
        fm.source_block = b;
        fm.stride = 1 << b;
        std::memcpy(fm.data.data(), t.data.data(), t.size() * sizeof(float));
        out.push_back(std::move(fm));
    }
    return out;
}

MatRM Backbone::embed_forward(const Tensor& batch, EmbedCache* cache) const {
    Tensor h = stem_.forward(batch, cache ? &cache->stem_c : nullptr);
    h = stem_norm_.forward(h, cache ? &cache->stem_n : nullptr);
    h = Relu::forward(h, cache ? &cache->stem_r : nullptr);
    for (int k = 0; k < 4; ++k) h = stages_[k].forward(h, cache ? &cache->stages[k] : nullptr);
    if (cache) {
        cache->pool_h = h.h;
        cache->pool_w = h.w;
    }
    MatRM pooled = global_avg_pool(h);
    MatRM emb = head_.forward(pooled, cache ? &cache->head : nullptr);
    if (cache) cache->pre_norm = emb;
    return l2_normalize_rows(emb);
}

void Backbone::embed_backward(EmbedCache& cache, const MatRM& d_embed) {
    MatRM d = l2_normalize_rows_backward(cache.pre_norm, d_embed);
    d = head_.backward(cache.head, d);
    Tensor dt = global_avg_pool_backward(d, cache.pool_h, cache.pool_w);
    for (int k = 3; k >= 0; --k) dt = stages_[k].backward(cache.stages[k], dt);
    dt = Relu::backward(cache.stem_r, dt);
    dt = stem_norm_.backward(cache.stem_n, dt);
    stem_.backward(cache.stem_c, dt);
}

std::vector<ParamRef> Backbone::params() {
    std::vector<ParamRef> out;
    stem_.collect("stem", out);
    stem_norm_.collect("stem_norm", out);
    for (int k = 0; k < 4; ++k) stages_[k].collect("stage" + std::to_string(k + 2), out);
    head_.collect("head", out);
    return out;
}

void Backbone::copy_params_from(const Backbone& other) {
    auto dst = params();
    auto src = const_cast<Backbone&>(other).params();
    if (dst.size() != src.size()) throw std::invalid_argument("copy_params_from: spec mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].value->size() != src[i].value->size())
            throw std::invalid_argument("copy_params_from: shape mismatch at " + dst[i].name);
        *dst[i].value = *src[i].value;
    }
}

}  // namespace lmk
