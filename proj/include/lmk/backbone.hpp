#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "lmk/features.hpp"
#include "lmk/nn.hpp"

namespace lmk {

// Five-stage residual backbone. Stage k halves resolution, so cumulative
// strides are 2,4,8,16,32; stage channel counts define the preset contract.
struct BackboneSpec {
    std::string name;
    std::array<int, 5> stage_channels;
    int blocks_per_stage = 1;  // residual blocks after each downsample, stages 2..5
    int embed_dim = 128;

    int hypercolumn_channels(const std::set<int>& block_ids) const;
};

// Presets: "large" mirrors a ResNet50-width contract, "half" halves its
// widths, "small" is the desk-scale preset.
BackboneSpec backbone_spec(const std::string& preset);

struct BasicBlock {
    Conv2d conv1, conv2;
    ChannelNorm norm1, norm2;

    struct Cache {
        Conv2d::Cache c1, c2;
        ChannelNorm::Cache n1, n2;
        Relu::Cache r_mid, r_out;
    };

    void init(int channels, Rng& rng);
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct StageUnit {
    Conv2d down;
    ChannelNorm down_norm;
    std::vector<BasicBlock> blocks;

    struct Cache {
        Conv2d::Cache dc;
        ChannelNorm::Cache dn;
        Relu::Cache dr;
        std::vector<BasicBlock::Cache> bc;
    };

    void init(int in_c, int out_c, int n_blocks, Rng& rng);
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

class Backbone {
public:
    Backbone() = default;
    Backbone(const BackboneSpec& spec, uint64_t seed);

    const BackboneSpec& spec() const { return spec_; }

    // Inference-mode taps of the requested blocks, ascending block order.
    std::vector<FeatureMap> forward_blocks(const Image& image, const std::set<int>& block_ids) const;

    struct EmbedCache {
        Conv2d::Cache stem_c;
        ChannelNorm::Cache stem_n;
        Relu::Cache stem_r;
        std::array<StageUnit::Cache, 4> stages;
        Linear::Cache head;
        MatRM pre_norm;       // embeddings before row normalization
        int pool_h = 0, pool_w = 0;
    };

    // Global embedding: stage5 -> average pool -> linear -> row L2 norm.
    // Returns B x embed_dim with unit rows; pass a cache to enable backward.
    MatRM embed_forward(const Tensor& batch, EmbedCache* cache) const;
    void embed_backward(EmbedCache& cache, const MatRM& d_embed);

    std::vector<ParamRef> params();
    // Copies values (not grads) from another backbone with identical spec.
    void copy_params_from(const Backbone& other);

private:
    BackboneSpec spec_;
    Conv2d stem_;
    ChannelNorm stem_norm_;
    std::array<StageUnit, 4> stages_;
    Linear head_;

    Tensor run_to_stage(const Tensor& input, int last_block,
                        std::vector<Tensor>* taps) const;
};

}  // namespace lmk
