#pragma once

#include <map>
#include <memory>

#include "dv/dataset.hpp"
#include "dv/metrics.hpp"
#include "dv/nn.hpp"

namespace dv {

struct ToyExtractorConfig {
    int embed_dim = 64;
    int epochs = 12;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double holdout_fraction = 0.2;
};

// Small classifier trained on the toy corpus's motion/color/shape labels.
// Per-frame conv trunk, temporal pooling (mean, mean |delta|, last-first),
// shared penultimate embedding, three classification heads. classify()
// returns the motion posterior; embed_text() maps caption words to stored
// class-prototype embeddings.
class ToyExtractor : public FeatureExtractor {
  public:
    ToyExtractor(const ToyExtractorConfig& cfg, uint64_t seed);

    // Returns held-out motion accuracy after training.
    double train(const std::vector<DatasetItem>& corpus);

    std::vector<double> embed_video(const VideoTensor& video) override;
    std::vector<double> embed_image(const Tensor& frame) override;
    std::vector<double> embed_text(const std::vector<std::string>& tokens) override;
    std::vector<double> classify(const VideoTensor& video) override;

    const ToyExtractorConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    double holdout_accuracy() const { return holdout_accuracy_; }
    void set_holdout_accuracy(double v) { holdout_accuracy_ = v; }

    // Prototype table access for serialization.
    std::map<std::string, std::vector<double>>& prototypes() { return prototypes_; }

  private:
    Var embed_var(const Var& frames, int64_t batch, int64_t frames_per_item) const;  // [B, embed_dim]
    Tensor frames_tensor(const VideoTensor& video) const;                            // [T,3,H,W]

    ToyExtractorConfig cfg_;
    uint64_t seed_ = 0;
    ParamStore params_;
    Conv2dLayer c1_, c2_, c3_;
    Linear fc_, head_motion_, head_color_, head_shape_;
    std::map<std::string, std::vector<double>> prototypes_;  // attribute word -> embedding
    double holdout_accuracy_ = 0.0;
};

std::unique_ptr<ToyExtractor> train_toy_extractor(const std::vector<DatasetItem>& corpus, uint64_t seed,
                                                  const ToyExtractorConfig& cfg = {});

}  // namespace dv
