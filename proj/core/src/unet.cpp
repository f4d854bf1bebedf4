#include "dv/unet.hpp"

namespace dv {

using namespace ops;

void validate_unet_config(const UNetConfig& cfg) {
    if (cfg.num_levels < 2) throw invalid_argument("unet: num_levels must be >= 2");
    if (static_cast<int>(cfg.channel_multipliers.size()) != cfg.num_levels)
        throw invalid_argument("unet: channel_multipliers must have num_levels entries");
    if (cfg.temporal_kernel < 1 || cfg.temporal_kernel % 2 == 0)
        throw invalid_argument("unet: temporal_kernel must be odd and positive");
    for (int l = 0; l < cfg.num_levels; ++l) {
        int ch = cfg.level_channels(l);
        if (ch % cfg.attention_heads)
            throw invalid_argument("unet: level " + std::to_string(l) + " channels not divisible by heads");
        if (ch % cfg.norm_groups)
            throw invalid_argument("unet: level " + std::to_string(l) + " channels not divisible by norm groups");
    }
    if (cfg.text_dim < 1 || cfg.base_channels < 1 || cfg.latent_channels < 1)
        throw invalid_argument("unet: dimensions must be positive");
}

UNetBlock::UNetBlock(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, const UNetConfig& cfg,
                     RandomStream& rng) {
    res = ResBlock(ps, name + ".res", cin, cout, cfg.time_dim(), cfg.norm_groups, rng);
    sattn = SelfAttention2d(ps, name + ".sattn", cout, cfg.attention_heads, cfg.norm_groups, rng, InitKind::Zeros);
    xattn = CrossAttention2d(ps, name + ".xattn", cout, cfg.text_dim, cfg.attention_heads, cfg.norm_groups, rng,
                             InitKind::Zeros);
    tconv = TempConv(ps, name + ".tconv", cout, cfg.temporal_kernel, rng);
    tattn = TempAttn(ps, name + ".tattn", cout, cfg.attention_heads, cfg.norm_groups, rng);
}

Var UNetBlock::forward(const Var& x, const Var& temb_frames, const TextBatch& text, int64_t batch, int64_t frames,
                       bool temporal) const {
    Var h = res.forward(x, temb_frames);
    h = sattn.forward(h);
    h = xattn.forward(h, text.emb, batch, frames);
    if (temporal) {
        h = tconv.forward(h, batch, frames);
        h = tattn.forward(h, batch, frames);
    }
    return h;
}

UNet::UNet(ParamStore& ps, const std::string& prefix, const UNetConfig& cfg_, RandomStream& rng) : cfg(cfg_) {
    validate_unet_config(cfg);
    const int L = cfg.num_levels;
    time_mlp = TimeEmbed(ps, prefix + ".time", cfg.base_channels, cfg.time_dim(), rng);
    conv_in = Conv2dLayer(ps, prefix + ".conv_in", cfg.latent_channels, cfg.base_channels, 3, 1, 1, rng);
    for (int i = 0; i < L; ++i) {
        int cin = i == 0 ? cfg.base_channels : cfg.level_channels(i - 1);
        down.emplace_back(ps, prefix + ".down" + std::to_string(i + 1), cin, cfg.level_channels(i), cfg, rng);
        if (i < L - 1)
            downsample.emplace_back(ps, prefix + ".downsample" + std::to_string(i + 1), cfg.level_channels(i),
                                    cfg.level_channels(i), 3, 2, 1, rng);
    }
    int mid_ch = cfg.level_channels(L - 1);
    mid = UNetBlock(ps, prefix + ".mid", mid_ch, mid_ch, cfg, rng);
    for (int j = 0; j < L; ++j) {
        int prev = j == 0 ? cfg.level_channels(L - 1) : cfg.level_channels(L - j);
        int skip_ch = cfg.level_channels(L - 1 - j);
        up.emplace_back(ps, prefix + ".up" + std::to_string(j + 1), prev + skip_ch, skip_ch, cfg, rng);
        if (j < L - 1)
            upconv.emplace_back(ps, prefix + ".upconv" + std::to_string(j + 1), skip_ch, skip_ch, 3, 1, 1, rng);
    }
    out_norm = GroupNormLayer(ps, prefix + ".out_norm", cfg.base_channels, cfg.norm_groups);
    conv_out = Conv2dLayer(ps, prefix + ".conv_out", cfg.base_channels, cfg.latent_channels, 3, 1, 1, rng);
}

Var UNet::forward(const Var& z, const Var& temb, const TextBatch& text, const std::vector<Var>* controls,
                  int64_t batch, int64_t frames) const {
    const int L = cfg.num_levels;
    if (z.dims().size() != 4 || z.dims()[1] != cfg.latent_channels)
        throw invalid_argument("unet: latent shape " + shape_str(z.dims()) + " does not match config channels " +
                               std::to_string(cfg.latent_channels));
    if (z.dims()[0] != batch * frames) throw invalid_argument("unet: leading dim != batch*frames");
    if (static_cast<int64_t>(text.emb.size()) != batch) throw invalid_argument("unet: text batch size mismatch");
    if (controls && static_cast<int>(controls->size()) != L + 1)
        throw invalid_argument("unet: expected " + std::to_string(L + 1) + " control signals, got " +
                               std::to_string(controls->size()));

    Var temb_frames = repeat_interleave0(temb, frames);
    Var h = conv_in.forward(z);
    std::vector<Var> skips;
    skips.reserve(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) {
        h = down[static_cast<size_t>(i)].forward(h, temb_frames, text, batch, frames, temporal_enabled);
        skips.push_back(h);
        if (i < L - 1) h = downsample[static_cast<size_t>(i)].forward(h);
    }
    h = mid.forward(h, temb_frames, text, batch, frames, temporal_enabled);
    if (controls) h = add(h, (*controls)[static_cast<size_t>(L)]);
    for (int j = 0; j < L; ++j) {
        Var skip = skips[static_cast<size_t>(L - 1 - j)];
        if (controls) skip = add(skip, (*controls)[static_cast<size_t>(L - 1 - j)]);
        h = concat_channel(h, skip);
        h = up[static_cast<size_t>(j)].forward(h, temb_frames, text, batch, frames, temporal_enabled);
        if (j < L - 1) h = upconv[static_cast<size_t>(j)].forward(upsample_nearest2x(h));
    }
    return conv_out.forward(silu(out_norm.forward(h)));
}

Tensor time_embed(const UNet& unet, int t) {
    NoGradGuard ng;
    Var e = unet.time_mlp.forward({t});
    return e.value().reshaped({e.value().dim(1)}).clone();
}

}  // namespace dv
