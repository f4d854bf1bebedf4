#include "dv/retention.hpp"

namespace dv {

using namespace ops;

void validate_condition_image(const ConditionImage& img) {
    if (img.data.ndim() != 3 || img.data.dim(2) != 3)
        throw invalid_argument("condition image must be [H,W,3], got " + shape_str(img.data.dims()));
    const double* p = img.data.data();
    for (int64_t i = 0; i < img.data.size(); ++i)
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw invalid_argument("condition image values must lie in [0,1]");
    if (img.is_null) {
        for (int64_t i = 0; i < img.data.size(); ++i)
            if (p[i] != 1.0) throw invalid_argument("null condition image must be all-ones");
    }
}

RetentionBranch::RetentionBranch(ParamStore& ps, const std::string& prefix, const UNetConfig& cfg_,
                                 int spatial_factor_, RandomStream& rng)
    : cfg(cfg_), spatial_factor(spatial_factor_) {
    const int L = cfg.num_levels;
    int c0 = cfg.base_channels;
    conv_d = Conv2dLayer(ps, prefix + ".conv_d", cfg.latent_channels, c0, 3, 1, 1, rng);
    conv_s = Conv2dLayer(ps, prefix + ".conv_s", 3, c0, 3, spatial_factor, 1, rng);
    for (int i = 0; i < L; ++i) {
        int cin = i == 0 ? c0 : cfg.level_channels(i - 1);
        down.emplace_back(ps, prefix + ".down" + std::to_string(i + 1), cin, cfg.level_channels(i), cfg, rng);
        if (i < L - 1)
            downsample.emplace_back(ps, prefix + ".downsample" + std::to_string(i + 1), cfg.level_channels(i),
                                    cfg.level_channels(i), 3, 2, 1, rng);
    }
    int mid_ch = cfg.level_channels(L - 1);
    mid = UNetBlock(ps, prefix + ".mid", mid_ch, mid_ch, cfg, rng);
    for (int i = 0; i < L; ++i)
        zero_convs.emplace_back(ps, prefix + ".zc" + std::to_string(i + 1), cfg.level_channels(i),
                                cfg.level_channels(i), 1, 1, 0, rng, InitKind::Zeros);
    zero_convs.emplace_back(ps, prefix + ".zc_mid", mid_ch, mid_ch, 1, 1, 0, rng, InitKind::Zeros);
}

Var RetentionBranch::embed_image(const Var& image) const {
    if (image.dims().size() != 4 || image.dims()[1] != 3)
        throw invalid_argument("embed_image: expected [B,3,H,W], got " + shape_str(image.dims()));
    return conv_s.forward(image);
}

Var RetentionBranch::fuse(const Var& z_d, const Var& z_s, int64_t frames) {
    return add_frame_broadcast(z_d, z_s, frames);
}

std::vector<Var> RetentionBranch::forward(const Var& z, const Var& temb, const TextBatch& text, const Var& image,
                                          int64_t batch, int64_t frames, bool temporal) const {
    const int L = cfg.num_levels;
    Var z_d = conv_d.forward(z);
    Var z_s = embed_image(image);
    if (z_s.dims()[2] != z_d.dims()[2] || z_s.dims()[3] != z_d.dims()[3])
        throw invalid_argument("retention: image latent " + shape_str(z_s.dims()) +
                               " does not align with noisy latent " + shape_str(z_d.dims()));
    Var h = fuse(z_d, z_s, frames);
    Var temb_frames = repeat_interleave0(temb, frames);
    std::vector<Var> controls;
    controls.reserve(static_cast<size_t>(L) + 1);
    for (int i = 0; i < L; ++i) {
        h = down[static_cast<size_t>(i)].forward(h, temb_frames, text, batch, frames, temporal);
        controls.push_back(zero_convs[static_cast<size_t>(i)].forward(h));
        if (i < L - 1) h = downsample[static_cast<size_t>(i)].forward(h);
    }
    h = mid.forward(h, temb_frames, text, batch, frames, temporal);
    controls.push_back(zero_convs[static_cast<size_t>(L)].forward(h));
    return controls;
}

void clone_retention_from_backbone(ParamStore& ps, const std::string& retention_prefix,
                                   const std::string& unet_prefix) {
    const std::string rp = retention_prefix + ".";
    size_t copied = 0;
    for (const auto& [name, var] : ps.all()) {
        if (name.rfind(rp, 0) != 0) continue;
        std::string suffix = name.substr(rp.size());
        if (suffix.rfind("down", 0) != 0 && suffix.rfind("mid", 0) != 0) continue;
        // the first retention block consumes c0 channels while the backbone's
        // consumes conv_in output of the same width, so shapes line up
        std::string src = unet_prefix + "." + suffix;
        if (!ps.has(src)) throw invalid_state("clone_from_backbone: no backbone counterpart for " + name);
        ps.copy_value(name, src);
        ++copied;
    }
    if (copied == 0) throw invalid_state("clone_from_backbone: nothing to copy under " + retention_prefix);
}

}  // namespace dv
