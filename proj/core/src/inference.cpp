#include "dv/inference.hpp"

namespace dv {

std::string mode_name(GenerationMode mode) {
    switch (mode) {
        case GenerationMode::TextOnly: return "text_only";
        case GenerationMode::ImageOnly: return "image_only";
        case GenerationMode::TextImage: return "text_image";
    }
    return "unknown";
}

Tensor video_frame(const VideoTensor& video, int64_t t) {
    int64_t H = video.height(), W = video.width();
    if (t < 0 || t >= video.frames()) throw invalid_argument("video_frame: index out of range");
    Tensor frame({H, W, 3});
    std::copy(video.data.data() + t * H * W * 3, video.data.data() + (t + 1) * H * W * 3, frame.data());
    return frame;
}

Tensor resize_nearest(const Tensor& image, int64_t new_h, int64_t new_w) {
    if (image.ndim() != 3 || image.dim(2) != 3) throw invalid_argument("resize_nearest: expected [H,W,3]");
    int64_t H = image.dim(0), W = image.dim(1);
    if (H == new_h && W == new_w) return image.clone();
    Tensor out({new_h, new_w, 3});
    const double* p = image.data();
    double* po = out.data();
    for (int64_t y = 0; y < new_h; ++y) {
        int64_t sy = std::min(H - 1, y * H / new_h);
        for (int64_t x = 0; x < new_w; ++x) {
            int64_t sx = std::min(W - 1, x * W / new_w);
            for (int64_t c = 0; c < 3; ++c) po[(y * new_w + x) * 3 + c] = p[(sy * W + sx) * 3 + c];
        }
    }
    return out;
}

VideoTensor generate(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                     const SampleRequest& req) {
    if (req.steps < 1 || req.steps > sched.num_steps)
        throw invalid_argument("generate: steps must lie in [1, schedule num_steps]");
    if (req.frames < 1) throw invalid_argument("generate: frames must be positive");
    const int f = codec.config().spatial_factor;
    int64_t H = req.image.height(), W = req.image.width();
    ConditionImage image = req.image;
    if (req.resolution_override) {
        auto [oh, ow] = *req.resolution_override;
        if (oh % f || ow % f)
            throw invalid_argument("generate: override resolution " + std::to_string(oh) + "x" + std::to_string(ow) +
                                   " not divisible by codec factor " + std::to_string(f));
        H = oh;
        W = ow;
        if (image.height() != H || image.width() != W) {
            bool null = image.is_null;
            image = ConditionImage{resize_nearest(image.data, H, W), null};
        }
    }
    if (H % f || W % f) throw invalid_argument("generate: resolution not divisible by codec factor");

    const int64_t c = codec.config().latent_channels;
    const int64_t h = H / f, w = W / f;
    RandomStream rng(mix_seed(req.seed, 0x5A3));
    Tensor z0({req.frames, c, h, w});
    rng.fill_normal(z0);
    LatentVideo z{std::move(z0)};

    CondPair cond{req.prompt, image};
    ModelBatchDenoiser denoiser(model);
    std::vector<int> ts = sampling_timesteps(sched, req.steps);
    for (size_t i = 0; i + 1 < ts.size(); ++i) {
        int t = ts[i], t_prev = ts[i + 1];
        Tensor eps = guided_eps(denoiser, z.data, t, cond, req.scales);
        if (req.eta > 0.0) {
            Tensor noise({req.frames, c, h, w});
            rng.fill_normal(noise);
            LatentVideo nz{std::move(noise)};
            z = ddim_step(z, LatentVideo{std::move(eps)}, t, t_prev, sched, req.eta, &nz);
        } else {
            z = ddim_step(z, LatentVideo{std::move(eps)}, t, t_prev, sched, 0.0, nullptr);
        }
    }
    return codec.decode(z);
}

GenerateResult generate_multi(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                              GenerationMode mode, const SampleRequest& req) {
    SampleRequest r = req;
    switch (mode) {
        case GenerationMode::TextOnly:
            r.image = ConditionImage::white(req.image.height(), req.image.width());
            break;
        case GenerationMode::ImageOnly:
            r.prompt = std::nullopt;
            break;
        case GenerationMode::TextImage:
            break;
    }
    return {generate(model, codec, sched, r), mode};
}

TwoStageResult two_stage(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                         const ConditionImage& image, const std::optional<std::vector<std::string>>& prompt1,
                         const std::optional<std::vector<std::string>>& prompt2, const SampleRequest& defaults) {
    SampleRequest r1 = defaults;
    r1.image = image;
    r1.prompt = prompt1;
    VideoTensor stage1 = generate(model, codec, sched, r1);

    SampleRequest r2 = defaults;
    r2.image = ConditionImage::from_pixels(video_frame(stage1, stage1.frames() - 1));
    r2.prompt = prompt2;
    r2.seed = mix_seed(defaults.seed, 2);
    VideoTensor stage2 = generate(model, codec, sched, r2);

    int64_t T1 = stage1.frames(), T2 = stage2.frames();
    int64_t H = stage1.height(), W = stage1.width();
    Tensor combined({T1 + T2, H, W, 3});
    std::copy(stage1.data.data(), stage1.data.data() + stage1.data.size(), combined.data());
    std::copy(stage2.data.data(), stage2.data.data() + stage2.data.size(),
              combined.data() + stage1.data.size());
    return {std::move(stage1), std::move(stage2), VideoTensor{std::move(combined)}};
}

SampleRequest resolution_override(const SampleRequest& req, int new_h, int new_w, int codec_factor,
                                  int train_resolution) {
    if (new_h % codec_factor || new_w % codec_factor)
        throw invalid_argument("resolution_override: dimensions must be divisible by the codec factor");
    if (new_h < train_resolution || new_w < train_resolution)
        throw invalid_argument("resolution_override: new dimensions must be >= the training resolution");
    SampleRequest out = req;
    out.resolution_override = std::make_pair(new_h, new_w);
    return out;
}

}  // namespace dv
