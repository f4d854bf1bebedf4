#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dv/nn.hpp"
#include "dv/text_encoder.hpp"

namespace dv {

struct UNetConfig {
    int num_levels = 3;
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int attention_heads = 4;
    int temporal_kernel = 3;
    int text_dim = 64;
    int norm_groups = 8;
    int latent_channels = 48;

    int level_channels(int level) const {  // level 0-based
        return base_channels * channel_multipliers[static_cast<size_t>(level)];
    }
    int time_dim() const { return 4 * base_channels; }
};

void validate_unet_config(const UNetConfig& cfg);

struct TextBatch {
    std::vector<Var> emb;  // per item, [S_b, text_dim]
};

// Block applied at every level: spatial ResNet, spatial self-attention, text
// cross-attention, Temp-Conv, Temp-Attn, in that order.
struct UNetBlock {
    ResBlock res;
    SelfAttention2d sattn;
    CrossAttention2d xattn;
    TempConv tconv;
    TempAttn tattn;
    UNetBlock() = default;
    UNetBlock(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, const UNetConfig& cfg,
              RandomStream& rng);
    Var forward(const Var& x, const Var& temb_frames, const TextBatch& text, int64_t batch, int64_t frames,
                bool temporal) const;
};

// Video U-Net denoiser. Activations are laid out [B*T, C, h, w] with frames
// of one video contiguous; temporal sublayers regroup internally. Control
// signals (when given) must hold num_levels + 1 entries ordered
// [down level 1 .. down level L, mid]; entry i-1 is added to the skip input
// of up block j = L - i + 1 and the mid entry to the mid-block output.
class UNet {
  public:
    UNet() = default;
    UNet(ParamStore& ps, const std::string& prefix, const UNetConfig& cfg, RandomStream& rng);

    Var forward(const Var& z, const Var& temb, const TextBatch& text, const std::vector<Var>* controls,
                int64_t batch, int64_t frames) const;

    UNetConfig cfg;
    bool temporal_enabled = true;

    TimeEmbed time_mlp;
    Conv2dLayer conv_in;
    std::vector<UNetBlock> down;
    std::vector<Conv2dLayer> downsample;
    UNetBlock mid;
    std::vector<UNetBlock> up;
    std::vector<Conv2dLayer> upconv;
    GroupNormLayer out_norm;
    Conv2dLayer conv_out;
};

// Deterministic step embedding exposed for direct use; sinusoidal base
// followed by the UNet's 2-layer MLP.
Tensor time_embed(const UNet& unet, int t);

}  // namespace dv
