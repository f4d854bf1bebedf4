#pragma once

#include <vector>

#include "dv/model.hpp"
#include "dv/random.hpp"

namespace dvtest {

// T=2, 2 levels, 8 base channels, 64-bit gradients checkable in seconds
inline dv::ModelConfig tiny_model_config(uint64_t seed = 0) {
    dv::ModelConfig cfg;
    cfg.unet.num_levels = 2;
    cfg.unet.base_channels = 8;
    cfg.unet.channel_multipliers = {1, 2};
    cfg.unet.attention_heads = 2;
    cfg.unet.temporal_kernel = 3;
    cfg.unet.text_dim = 16;
    cfg.unet.norm_groups = 4;
    cfg.unet.latent_channels = 12;  // space_to_depth with f = 2
    cfg.spatial_factor = 2;
    cfg.max_step = 50;
    cfg.init_seed = seed;
    return cfg;
}

inline dv::CodecConfig tiny_codec_config() {
    return dv::CodecConfig{dv::CodecMode::SpaceToDepth, 2, 12};
}

// fills every parameter (including the zero-initialized ones) with small
// random values so gradients flow through the whole graph
inline void randomize_params(dv::ParamStore& ps, uint64_t seed, double scale = 0.1) {
    dv::RandomStream rng(dv::mix_seed(seed, 0xF111));
    for (auto& [name, var] : ps.all()) {
        dv::Var v = var;
        dv::Tensor t(v.dims());
        rng.fill_normal(t);
        t.scale_(scale);
        v.mutable_value() = std::move(t);
    }
}

inline dv::Tensor random_latent_batch(dv::RandomStream& rng, int64_t B, int64_t T, int64_t c, int64_t h, int64_t w) {
    dv::Tensor z({B, T, c, h, w});
    rng.fill_normal(z);
    return z;
}

inline dv::ConditionImage random_image(dv::RandomStream& rng, int64_t H, int64_t W) {
    dv::Tensor img({H, W, 3});
    double* p = img.data();
    for (int64_t i = 0; i < img.size(); ++i) p[i] = rng.uniform();
    return dv::ConditionImage::from_pixels(std::move(img));
}

}  // namespace dvtest
