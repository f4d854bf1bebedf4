#pragma once

#include <vector>

#include "dv/nn.hpp"
#include "dv/schedule.hpp"

namespace dv {

// Pixel-space video, shape [T, H, W, 3], values in [0, 1].
struct VideoTensor {
    Tensor data;
    int64_t frames() const { return data.dim(0); }
    int64_t height() const { return data.dim(1); }
    int64_t width() const { return data.dim(2); }
};

void validate_video(const VideoTensor& v);

enum class CodecMode { SpaceToDepth, LearnedAe };

struct CodecConfig {
    CodecMode mode = CodecMode::SpaceToDepth;
    int spatial_factor = 4;
    int latent_channels = 48;  // forced to 3*f*f for space_to_depth
};

void validate_codec_config(const CodecConfig& cfg);

// Pixel <-> latent mapping. space_to_depth is a fixed pixel rearrangement
// followed by the affine map 2x-1 (decode inverts and clamps to [0,1]);
// learned_ae is a small convolutional autoencoder trained by
// train_autoencoder.
class Codec {
  public:
    explicit Codec(CodecConfig cfg, uint64_t seed = 0);

    const CodecConfig& config() const { return cfg_; }
    LatentVideo encode(const VideoTensor& x) const;
    VideoTensor decode(const LatentVideo& z) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Trains the autoencoder on the given videos; returns held-out MSE at
    // each epoch boundary (index 0 = untrained). learned_ae mode only.
    std::vector<double> train_autoencoder(const std::vector<VideoTensor>& data, int epochs, uint64_t seed);

  private:
    Var decode_frames_var(const Var& frames) const;  // [N,3,H,W] pre-clamp
    Var encode_frames_var(const Var& frames) const;  // [N,c,h,w]

    CodecConfig cfg_;
    ParamStore params_;
    Conv2dLayer enc1_, enc2_;
    Conv2dLayer dec1_, dec2_;
    Conv2dLayer dec_final_;  // 1x1, identity-initialized
};

}  // namespace dv
