#include "dv/codec.hpp"

#include <algorithm>
#include <cmath>

namespace dv {

using namespace ops;

void validate_video(const VideoTensor& v) {
    if (v.data.ndim() != 4 || v.data.dim(3) != 3)
        throw invalid_argument("video must have shape [T,H,W,3], got " + shape_str(v.data.dims()));
    const double* p = v.data.data();
    for (int64_t i = 0; i < v.data.size(); ++i)
        if (!(p[i] >= 0.0 && p[i] <= 1.0))
            throw invalid_argument("video values must lie in [0,1]");
}

void validate_codec_config(const CodecConfig& cfg) {
    if (cfg.spatial_factor < 1) throw invalid_argument("codec: spatial_factor must be positive");
    if (cfg.latent_channels < 1) throw invalid_argument("codec: latent_channels must be positive");
    if (cfg.mode == CodecMode::SpaceToDepth && cfg.latent_channels != 3 * cfg.spatial_factor * cfg.spatial_factor)
        throw invalid_argument("codec: space_to_depth requires latent_channels = 3*f^2");
}

Codec::Codec(CodecConfig cfg, uint64_t seed) : cfg_(cfg) {
    validate_codec_config(cfg_);
    if (cfg_.mode == CodecMode::LearnedAe) {
        if (cfg_.spatial_factor != 4) throw invalid_argument("learned_ae codec implemented for spatial_factor 4");
        RandomStream rng(mix_seed(seed, 0xC0DEC));
        enc1_ = Conv2dLayer(params_, "codec.enc1", 3, 16, 3, 2, 1, rng);
        enc2_ = Conv2dLayer(params_, "codec.enc2", 16, cfg_.latent_channels, 3, 2, 1, rng);
        dec1_ = Conv2dLayer(params_, "codec.dec1", cfg_.latent_channels, 16, 3, 1, 1, rng);
        dec2_ = Conv2dLayer(params_, "codec.dec2", 16, 3, 3, 1, 1, rng);
        // 1x1 conv initialized to the identity map
        Tensor wid({3, 3, 1, 1});
        for (int64_t c = 0; c < 3; ++c) wid[c * 3 + c] = 1.0;
        Var w = params_.add("codec.dec_final.w", std::move(wid));
        Var b = params_.add("codec.dec_final.b", Tensor::zeros({3}));
        dec_final_.w = w;
        dec_final_.b = b;
        dec_final_.stride = 1;
        dec_final_.pad = 0;
    }
}

Var Codec::encode_frames_var(const Var& frames) const {
    return enc2_.forward(silu(enc1_.forward(frames)));
}

Var Codec::decode_frames_var(const Var& latent) const {
    Var h = silu(dec1_.forward(upsample_nearest2x(latent)));
    h = dec2_.forward(upsample_nearest2x(h));
    return dec_final_.forward(h);
}

LatentVideo Codec::encode(const VideoTensor& x) const {
    if (x.data.ndim() != 4 || x.data.dim(3) != 3)
        throw invalid_argument("encode: video must be [T,H,W,3], got " + shape_str(x.data.dims()));
    const int f = cfg_.spatial_factor;
    int64_t T = x.frames(), H = x.height(), W = x.width();
    if (H % f || W % f)
        throw invalid_argument("encode: spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                               " not divisible by factor " + std::to_string(f));
    int64_t h = H / f, w = W / f;

    if (cfg_.mode == CodecMode::SpaceToDepth) {
        int64_t C = 3LL * f * f;
        Tensor z({T, C, h, w});
        const double* px = x.data.data();
        double* pz = z.data();
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c) {
                int64_t ch = c % 3, rem = c / 3;
                int64_t dx = rem % f, dy = rem / f;
                for (int64_t i = 0; i < h; ++i)
                    for (int64_t j = 0; j < w; ++j) {
                        double v = px[((t * H + i * f + dy) * W + j * f + dx) * 3 + ch];
                        pz[((t * C + c) * h + i) * w + j] = 2.0 * v - 1.0;
                    }
            }
        return {std::move(z)};
    }

    // learned_ae: per-frame forward, [T,H,W,3] -> [T,3,H,W]
    NoGradGuard ng;
    Tensor fr({T, 3, H, W});
    const double* px = x.data.data();
    double* pf = fr.data();
    for (int64_t t = 0; t < T; ++t)
        for (int64_t ch = 0; ch < 3; ++ch)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j)
                    pf[((t * 3 + ch) * H + i) * W + j] = px[((t * H + i) * W + j) * 3 + ch];
    Var out = encode_frames_var(Var::constant(std::move(fr)));
    return {out.value().clone()};
}

VideoTensor Codec::decode(const LatentVideo& z) const {
    if (z.data.ndim() != 4) throw invalid_argument("decode: latent must be [T,c,h,w]");
    const int f = cfg_.spatial_factor;
    int64_t T = z.frames(), C = z.channels(), h = z.height(), w = z.width();
    if (C != cfg_.latent_channels)
        throw invalid_argument("decode: latent has " + std::to_string(C) + " channels, codec expects " +
                               std::to_string(cfg_.latent_channels));
    int64_t H = h * f, W = w * f;

    if (cfg_.mode == CodecMode::SpaceToDepth) {
        Tensor x({T, H, W, 3});
        const double* pz = z.data.data();
        double* px = x.data();
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c) {
                int64_t ch = c % 3, rem = c / 3;
                int64_t dx = rem % f, dy = rem / f;
                for (int64_t i = 0; i < h; ++i)
                    for (int64_t j = 0; j < w; ++j) {
                        double v = (pz[((t * C + c) * h + i) * w + j] + 1.0) * 0.5;
                        px[((t * H + i * f + dy) * W + j * f + dx) * 3 + ch] = std::clamp(v, 0.0, 1.0);
                    }
            }
        return {std::move(x)};
    }

    NoGradGuard ng;
    Var out = decode_frames_var(Var::constant(z.data.clone()));  // [T,3,H,W]
    Tensor x({T, H, W, 3});
    const double* pf = out.value().data();
    double* px = x.data();
    for (int64_t t = 0; t < T; ++t)
        for (int64_t ch = 0; ch < 3; ++ch)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j)
                    px[((t * H + i) * W + j) * 3 + ch] =
                        std::clamp(pf[((t * 3 + ch) * H + i) * W + j], 0.0, 1.0);
    return {std::move(x)};
}

std::vector<double> Codec::train_autoencoder(const std::vector<VideoTensor>& data, int epochs, uint64_t seed) {
    if (cfg_.mode != CodecMode::LearnedAe)
        throw invalid_state("train_autoencoder: codec mode is space_to_depth");
    if (data.empty()) throw invalid_argument("train_autoencoder: empty dataset");

    // flatten videos into frames [N,3,H,W]
    std::vector<Tensor> frames;
    for (const auto& v : data) {
        int64_t T = v.frames(), H = v.height(), W = v.width();
        const double* px = v.data.data();
        for (int64_t t = 0; t < T; ++t) {
            Tensor fr({1, 3, H, W});
            double* pf = fr.data();
            for (int64_t ch = 0; ch < 3; ++ch)
                for (int64_t i = 0; i < H; ++i)
                    for (int64_t j = 0; j < W; ++j)
                        pf[(ch * H + i) * W + j] = px[((t * H + i) * W + j) * 3 + ch];
            frames.push_back(std::move(fr));
        }
    }
    size_t held = std::max<size_t>(1, frames.size() / 10);
    size_t n_train = frames.size() - held;

    auto stack = [&](const std::vector<size_t>& ids) {
        int64_t H = frames[0].dim(2), W = frames[0].dim(3);
        Tensor out({static_cast<int64_t>(ids.size()), 3, H, W});
        for (size_t i = 0; i < ids.size(); ++i)
            std::copy(frames[ids[i]].data(), frames[ids[i]].data() + frames[ids[i]].size(),
                      out.data() + static_cast<int64_t>(i) * 3 * H * W);
        return out;
    };

    auto heldout_mse = [&]() {
        NoGradGuard ng;
        std::vector<size_t> ids;
        for (size_t i = n_train; i < frames.size(); ++i) ids.push_back(i);
        Var x = Var::constant(stack(ids));
        Var rec = decode_frames_var(encode_frames_var(x));
        Var loss = mse(rec, x);
        return loss.value()[0];
    };

    RandomStream rng(mix_seed(seed, 0xAE));
    Adam opt(params_.vars(), AdamConfig{.lr = 5e-4});
    std::vector<double> curve;
    curve.push_back(heldout_mse());
    const size_t batch = 16;
    for (int e = 0; e < epochs; ++e) {
        std::vector<size_t> order(n_train);
        for (size_t i = 0; i < n_train; ++i) order[i] = i;
        for (size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
        for (size_t at = 0; at < n_train; at += batch) {
            std::vector<size_t> ids(order.begin() + static_cast<long>(at),
                                    order.begin() + static_cast<long>(std::min(at + batch, n_train)));
            Var x = Var::constant(stack(ids));
            Var loss = mse(decode_frames_var(encode_frames_var(x)), x);
            if (!std::isfinite(loss.value()[0])) throw divergence_error("autoencoder training diverged");
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
        curve.push_back(heldout_mse());
    }
    return curve;
}

}  // namespace dv
