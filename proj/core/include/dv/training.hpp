#pragma once

#include <functional>

#include "dv/dataset.hpp"
#include "dv/guidance.hpp"
#include "dv/model.hpp"

namespace dv {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 1e-4;
    double text_dropout_p = 0.10;
    double image_dropout_p = 0.10;
    int sample_rate = 4;  // temporal stride when slicing training clips
    uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Independently nulls the text (probability p_text) and whitens the image
// (probability p_image). Text is drawn first.
CondPair dropout_conditions(const CondPair& pair, double p_text, double p_image, RandomStream& rng);

struct TrainBatchItem {
    VideoTensor video;
    std::optional<std::vector<std::string>> caption;
    ConditionImage image;
};

// Denoiser seam so the loss can be evaluated against stub models.
class EpsDenoiser {
  public:
    virtual ~EpsDenoiser() = default;
    virtual Tensor predict(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds) = 0;
};

class ModelEpsDenoiser : public EpsDenoiser {
  public:
    explicit ModelEpsDenoiser(DreamVideoModel& m) : model_(m) {}
    Tensor predict(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds) override {
        return model_.predict_eps(z, t, conds);
    }

  private:
    DreamVideoModel& model_;
};

struct PreparedBatch {
    Tensor z_clean;  // [B,T,c,h,w]
    Tensor z_t;
    Tensor eps;
    std::vector<int> t;
    std::vector<CondPair> conds;
};

// Encodes the clip batch, draws one step (uniform in [1, num_steps]) and one
// standard-normal noise tensor per item, and diffuses. Draw order per item:
// step, then noise.
PreparedBatch prepare_training_batch(const Codec& codec, const NoiseSchedule& sched,
                                     const std::vector<TrainBatchItem>& batch, RandomStream& rng);

// Mean over batch and elements of (eps_hat - eps)^2.
double training_loss(EpsDenoiser& denoiser, const Codec& codec, const NoiseSchedule& sched,
                     const std::vector<TrainBatchItem>& batch, RandomStream& rng);

// Slices a training clip at the configured temporal stride. All starts in
// [0, min(rate, T_src) - 1] yield the same clip length.
VideoTensor slice_clip(const VideoTensor& video, int sample_rate, int start);
int clip_length(int source_frames, int sample_rate);

struct TrainResult {
    std::vector<double> epoch_loss;
    int64_t steps = 0;
    bool diverged = false;
};

using EpochCallback = std::function<void(int epoch, double mean_loss, int64_t optimizer_steps)>;

// Adam on the trainable subset (Temp layers + retention branch); everything
// else stays frozen. Deterministic for a fixed seed.
TrainResult train(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                  const std::vector<DatasetItem>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace dv
