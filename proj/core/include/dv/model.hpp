#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dv/codec.hpp"
#include "dv/retention.hpp"
#include "dv/schedule.hpp"
#include "dv/text_encoder.hpp"
#include "dv/unet.hpp"

namespace dv {

// Text condition (token sequence or null) plus image condition.
struct CondPair {
    std::optional<std::vector<std::string>> text;
    ConditionImage image;
};

struct ModelConfig {
    UNetConfig unet;
    int spatial_factor = 4;  // links conv_s stride to the codec
    int max_step = 1000;     // schedule length, for range checks
    uint64_t init_seed = 0;
};

// The assembled denoiser: text encoder, primary video U-Net and Image
// Retention branch sharing one parameter store. The retention branch is
// cloned from the backbone at construction.
class DreamVideoModel {
  public:
    explicit DreamVideoModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    UNet& unet() { return unet_; }
    const UNet& unet() const { return unet_; }
    RetentionBranch& retention() { return retention_; }
    TextEncoder& text_encoder() { return text_; }
    const TextEncoder& text_encoder() const { return text_; }

    // Batched denoiser: z [B,T,c,h,w], one step and condition pair per item.
    // The returned tensor has the same shape as z. Each item counts as one
    // denoiser evaluation.
    Tensor predict_eps(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds);
    // Training path; graph-connected result, [B*T,c,h,w].
    Var predict_eps_var(const Var& z_flat, const std::vector<int>& t, const std::vector<CondPair>& conds,
                        int64_t batch, int64_t frames);

    // Runs the backbone alone (no control injection).
    Tensor backbone_eps(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds);

    void clone_retention_from_backbone();

    int64_t eval_count() const { return eval_count_; }
    void reset_eval_count() { eval_count_ = 0; }

  private:
    TextBatch encode_text(const std::vector<CondPair>& conds) const;
    Var stack_images(const std::vector<CondPair>& conds) const;
    void check_inputs(const Shape& zdims, const std::vector<int>& t, size_t n_conds) const;

    ModelConfig cfg_;
    ParamStore params_;
    TextEncoder text_;
    UNet unet_;
    RetentionBranch retention_;
    int64_t eval_count_ = 0;
};

// Single-video wrapper matching the denoiser contract: eps prediction for a
// latent [T,c,h,w] under one condition pair.
Tensor unet_forward(DreamVideoModel& model, const LatentVideo& z_t, int t, const CondPair& cond);

// Exactly the Temp-Conv/Temp-Attn parameters of the primary U-Net plus every
// Image Retention branch parameter; spatial backbone, text encoder and codec
// are excluded.
std::vector<std::pair<std::string, Var>> trainable_parameters(DreamVideoModel& model);
bool is_trainable_param(const std::string& name);

}  // namespace dv
