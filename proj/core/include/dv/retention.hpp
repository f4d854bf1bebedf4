#pragma once

#include "dv/unet.hpp"

namespace dv {

// Conditioning image, [H, W, 3] in [0,1]. The null condition is the all-ones
// white image; it passes through the branch like any other input.
struct ConditionImage {
    Tensor data;
    bool is_null = false;

    static ConditionImage white(int64_t height, int64_t width) {
        return {Tensor::full({height, width, 3}, 1.0), true};
    }
    static ConditionImage from_pixels(Tensor pixels) { return {std::move(pixels), false}; }
    int64_t height() const { return data.dim(0); }
    int64_t width() const { return data.dim(1); }
};

void validate_condition_image(const ConditionImage& img);

// Image Retention branch: conv_d over the noisy latent, conv_s over the
// conditioning image (stride = codec spatial factor), additive fusion, a
// duplicate of the backbone's down/mid blocks, and a zero-convolution after
// each block. Outputs are ordered [down level 1 .. L, mid].
class RetentionBranch {
  public:
    RetentionBranch() = default;
    RetentionBranch(ParamStore& ps, const std::string& prefix, const UNetConfig& cfg, int spatial_factor,
                    RandomStream& rng);

    // image: [B, 3, H, W]; z: [B*T, c, h, w]
    std::vector<Var> forward(const Var& z, const Var& temb, const TextBatch& text, const Var& image, int64_t batch,
                             int64_t frames, bool temporal) const;

    // conv_s only: [B, 3, H, W] -> [B, c0, h0, w0]
    Var embed_image(const Var& image) const;
    // z_r = z_d + z_s broadcast over frames
    static Var fuse(const Var& z_d, const Var& z_s, int64_t frames);

    UNetConfig cfg;
    int spatial_factor = 4;
    Conv2dLayer conv_d;
    Conv2dLayer conv_s;
    std::vector<UNetBlock> down;
    std::vector<Conv2dLayer> downsample;
    UNetBlock mid;
    std::vector<Conv2dLayer> zero_convs;  // L+1 entries
};

// Copies the backbone block weights (down blocks, downsamples, mid) into the
// retention branch of the same store; conv_d/conv_s/zero-convs keep their
// fresh initialization.
void clone_retention_from_backbone(ParamStore& ps, const std::string& retention_prefix,
                                   const std::string& unet_prefix);

}  // namespace dv
