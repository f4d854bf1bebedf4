#pragma once

#include <string>

#include "dv/codec.hpp"
#include "dv/dataset.hpp"
#include "dv/guidance.hpp"
#include "dv/model.hpp"
#include "dv/schedule.hpp"
#include "dv/training.hpp"

namespace dv {

// Flat typed key-value configuration with section prefixes
// (e.g. schedule.num_steps=1000). Unknown keys are hard errors and the
// serialized form round-trips losslessly.
struct RunConfig {
    uint64_t seed = 0;

    int schedule_num_steps = 1000;
    ScheduleKind schedule_kind = ScheduleKind::LinearBeta;

    CodecMode codec_mode = CodecMode::SpaceToDepth;
    int codec_spatial_factor = 4;
    int codec_latent_channels = 48;

    int backbone_num_levels = 3;
    int backbone_base_channels = 32;
    std::vector<int> backbone_channel_multipliers = {1, 2, 4};
    int backbone_attention_heads = 4;
    int backbone_temporal_kernel = 3;
    int backbone_text_dim = 64;
    int backbone_norm_groups = 8;

    int dataset_num_videos = 500;
    int dataset_frames_per_video = 8;
    int dataset_resolution = 32;
    int dataset_velocity = 2;
    uint64_t dataset_seed = 7;

    int training_epochs = 20;
    int training_batch_size = 8;
    double training_learning_rate = 1e-4;
    double training_text_dropout_p = 0.10;
    double training_image_dropout_p = 0.10;
    int training_sample_rate = 4;

    int inference_frames = 8;
    int inference_steps = 50;
    double inference_scale_text = 7.5;
    double inference_scale_image = 1.5;
    Decomposition inference_decomposition = Decomposition::TextFirst;
    double inference_eta = 0.0;

    bool operator==(const RunConfig&) const = default;

    UNetConfig unet_config() const;
    ModelConfig model_config() const;
    CodecConfig codec_config() const;
    DatasetSpec dataset_spec() const;
    TrainConfig train_config() const;
    GuidanceScales guidance_scales() const;
};

std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
void save_config_file(const std::string& path, const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);  // FNV-1a over the canonical serialization

std::string schedule_kind_name(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& s);
std::string codec_mode_name(CodecMode m);
CodecMode parse_codec_mode(const std::string& s);
std::string decomposition_name(Decomposition d);
Decomposition parse_decomposition(const std::string& s);

}  // namespace dv
