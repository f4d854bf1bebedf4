#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dv/codec.hpp"

namespace dv {

// Frame = [H, W, 3] tensor in [0,1].

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double luminance_range = 1.0;
};

// Mean local SSIM over a Gaussian window, channels averaged, valid positions
// only. Range [-1, 1]; negative values are reported as-is.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

// ssim(condition image, frame 0 of the generated video).
double fff_ssim(const Tensor& condition_image, const VideoTensor& generated);

struct GaussianStats {
    std::vector<double> mean;        // d
    std::vector<double> covariance;  // d*d row-major, symmetric PSD
    int64_t sample_count = 0;
    int64_t dim() const { return static_cast<int64_t>(mean.size()); }
};

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), clamped at 0. The matrix
// square root uses the symmetric eigendecomposition of S1^{1/2} S2 S1^{1/2}.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> embed_video(const VideoTensor& video) = 0;
    virtual std::vector<double> embed_image(const Tensor& frame) = 0;
    virtual std::vector<double> embed_text(const std::vector<std::string>& tokens) = 0;
    virtual std::vector<double> classify(const VideoTensor& video) = 0;  // probability vector
};

double fvd(const std::vector<VideoTensor>& real, const std::vector<VideoTensor>& generated,
           FeatureExtractor& extractor);

double inception_score(const std::vector<VideoTensor>& generated, FeatureExtractor& extractor, int splits = 1);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Mean over frames of cos(embed_text(prompt), embed_image(frame)).
double clip_sim(const std::vector<std::string>& prompt, const VideoTensor& video, FeatureExtractor& extractor);

// cos(embed_image(condition image), embed_image(frame 0)).
double fff_clip(const Tensor& condition_image, const VideoTensor& generated, FeatureExtractor& extractor);

}  // namespace dv
