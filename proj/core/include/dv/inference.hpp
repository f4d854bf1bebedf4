#pragma once

#include "dv/guidance.hpp"
#include "dv/training.hpp"

namespace dv {

struct SampleRequest {
    ConditionImage image;  // also fixes the output resolution unless overridden
    std::optional<std::vector<std::string>> prompt;
    GuidanceScales scales;
    int steps = 50;
    int frames = 8;
    uint64_t seed = 0;
    double eta = 0.0;
    std::optional<std::pair<int, int>> resolution_override;  // (H', W')
};

enum class GenerationMode { TextOnly, ImageOnly, TextImage };
std::string mode_name(GenerationMode mode);

// Starts from per-frame i.i.d. standard-normal latent noise, iterates
// guided_eps + ddim_step over the sampling timesteps, and decodes.
// Deterministic for a fixed seed at eta = 0.
VideoTensor generate(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                     const SampleRequest& req);

struct GenerateResult {
    VideoTensor video;
    GenerationMode mode;
};

// text_only forces the white image; image_only forces the null prompt.
GenerateResult generate_multi(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                              GenerationMode mode, const SampleRequest& req);

struct TwoStageResult {
    VideoTensor stage1;
    VideoTensor stage2;
    VideoTensor combined;  // 2T frames, no deduplication
};

// Stage 2 is conditioned on stage 1's final frame (bitwise) and uses a seed
// derived from the request seed.
TwoStageResult two_stage(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                         const ConditionImage& image, const std::optional<std::vector<std::string>>& prompt1,
                         const std::optional<std::vector<std::string>>& prompt2, const SampleRequest& defaults);

// Returns the request retargeted to a larger resolution; the condition image
// is resized with nearest-neighbor sampling when needed.
SampleRequest resolution_override(const SampleRequest& req, int new_h, int new_w, int codec_factor,
                                  int train_resolution);

Tensor resize_nearest(const Tensor& image, int64_t new_h, int64_t new_w);  // [H,W,3]

Tensor video_frame(const VideoTensor& video, int64_t t);  // copy of frame t, [H,W,3]

}  // namespace dv
