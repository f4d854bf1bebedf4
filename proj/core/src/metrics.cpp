#include "dv/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "dv/parallel.hpp"

namespace dv {

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
    if (!a.same_shape(b))
        throw invalid_argument("ssim: shape mismatch " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
    if (a.ndim() != 3) throw invalid_argument("ssim: expected [H,W,C] images");
    int64_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
    const int win = params.window;
    if (H < win || W < win) throw invalid_argument("ssim: image smaller than the window");

    // normalized Gaussian window
    std::vector<double> g(static_cast<size_t>(win));
    double gsum = 0.0;
    for (int i = 0; i < win; ++i) {
        double d = i - (win - 1) / 2.0;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
        gsum += g[static_cast<size_t>(i)];
    }
    for (auto& v : g) v /= gsum;

    const double c1 = params.k1 * params.luminance_range * params.k1 * params.luminance_range;
    const double c2 = params.k2 * params.luminance_range * params.k2 * params.luminance_range;

    const double* pa = a.data();
    const double* pb = b.data();
    double total = 0.0;
    int64_t count = 0;
    for (int64_t ch = 0; ch < C; ++ch) {
        for (int64_t y = 0; y + win <= H; ++y) {
            for (int64_t x = 0; x + win <= W; ++x) {
                double ma = 0, mb = 0, eaa = 0, ebb = 0, eab = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        double wgt = g[static_cast<size_t>(i)] * g[static_cast<size_t>(j)];
                        double va = pa[(((y + i) * W) + (x + j)) * C + ch];
                        double vb = pb[(((y + i) * W) + (x + j)) * C + ch];
                        ma += wgt * va;
                        mb += wgt * vb;
                        eaa += wgt * va * va;
                        ebb += wgt * vb * vb;
                        eab += wgt * va * vb;
                    }
                }
                double va = eaa - ma * ma;
                double vb = ebb - mb * mb;
                double cov = eab - ma * mb;
                double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double fff_ssim(const Tensor& condition_image, const VideoTensor& generated) {
    if (generated.data.ndim() != 4) throw invalid_argument("fff_ssim: bad video shape");
    int64_t H = generated.height(), W = generated.width();
    if (condition_image.ndim() != 3 || condition_image.dim(0) != H || condition_image.dim(1) != W)
        throw invalid_argument("fff_ssim: condition image resolution " + shape_str(condition_image.dims()) +
                               " does not match video frames");
    Tensor frame0({H, W, 3});
    std::copy(generated.data.data(), generated.data.data() + H * W * 3, frame0.data());
    return ssim(condition_image, frame0);
}

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) throw invalid_argument("fit_gaussian: need at least 2 feature vectors");
    int64_t n = static_cast<int64_t>(features.size());
    int64_t d = static_cast<int64_t>(features[0].size());
    for (const auto& f : features)
        if (static_cast<int64_t>(f.size()) != d) throw invalid_argument("fit_gaussian: inconsistent dimensions");
    GaussianStats s;
    s.sample_count = n;
    s.mean.assign(static_cast<size_t>(d), 0.0);
    for (const auto& f : features)
        for (int64_t i = 0; i < d; ++i) s.mean[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
    for (int64_t i = 0; i < d; ++i) s.mean[static_cast<size_t>(i)] /= static_cast<double>(n);
    s.covariance.assign(static_cast<size_t>(d * d), 0.0);
    for (const auto& f : features)
        for (int64_t i = 0; i < d; ++i)
            for (int64_t j = 0; j < d; ++j)
                s.covariance[static_cast<size_t>(i * d + j)] +=
                    (f[static_cast<size_t>(i)] - s.mean[static_cast<size_t>(i)]) *
                    (f[static_cast<size_t>(j)] - s.mean[static_cast<size_t>(j)]);
    for (auto& v : s.covariance) v /= static_cast<double>(n - 1);
    return s;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* who) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw numerical_error(std::string(who) + ": eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    double max_ev = std::max(ev.maxCoeff(), 0.0);
    double tol = 1e-6 * std::max(1.0, max_ev);
    for (int i = 0; i < ev.size(); ++i) {
        if (ev[i] < -tol)
            throw numerical_error(std::string(who) + ": matrix not PSD, eigenvalue " + std::to_string(ev[i]));
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
    if (s1.dim() != s2.dim()) throw invalid_argument("frechet_distance: dimension mismatch");
    int64_t d = s1.dim();
    double mean_term = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        double df = s1.mean[static_cast<size_t>(i)] - s2.mean[static_cast<size_t>(i)];
        mean_term += df * df;
    }
    using Eigen::MatrixXd;
    Eigen::Map<const MatrixXd> c1m(s1.covariance.data(), d, d);
    Eigen::Map<const MatrixXd> c2m(s2.covariance.data(), d, d);
    // symmetrize against accumulation noise
    MatrixXd c1 = 0.5 * (c1m + c1m.transpose());
    MatrixXd c2 = 0.5 * (c2m + c2m.transpose());
    MatrixXd r1 = psd_sqrt(c1, "frechet_distance(S1)");
    MatrixXd inner = r1 * c2 * r1;
    inner = 0.5 * (inner + inner.transpose());
    MatrixXd cross = psd_sqrt(inner, "frechet_distance(S1^1/2 S2 S1^1/2)");
    double tr = c1.trace() + c2.trace() - 2.0 * cross.trace();
    return std::max(mean_term + tr, 0.0);
}

double fvd(const std::vector<VideoTensor>& real, const std::vector<VideoTensor>& generated,
           FeatureExtractor& extractor) {
    if (real.size() < 2 || generated.size() < 2) throw invalid_argument("fvd: each set needs at least 2 videos");
    std::vector<std::vector<double>> fr(real.size()), fg(generated.size());
    parallel_for(static_cast<int64_t>(real.size()),
                 [&](int64_t i) { fr[static_cast<size_t>(i)] = extractor.embed_video(real[static_cast<size_t>(i)]); });
    parallel_for(static_cast<int64_t>(generated.size()), [&](int64_t i) {
        fg[static_cast<size_t>(i)] = extractor.embed_video(generated[static_cast<size_t>(i)]);
    });
    return frechet_distance(fit_gaussian(fr), fit_gaussian(fg));
}

double inception_score(const std::vector<VideoTensor>& generated, FeatureExtractor& extractor, int splits) {
    if (generated.empty()) throw invalid_argument("inception_score: empty set");
    if (splits < 1) throw invalid_argument("inception_score: splits must be >= 1");
    const double eps = 1e-12;
    std::vector<std::vector<double>> probs;
    probs.reserve(generated.size());
    for (const auto& v : generated) {
        auto p = extractor.classify(v);
        double sum = 0.0;
        for (double x : p) sum += x;
        if (std::fabs(sum - 1.0) > 1e-6) throw numerical_error("inception_score: classifier output does not sum to 1");
        probs.push_back(std::move(p));
    }
    int64_t n = static_cast<int64_t>(probs.size());
    int64_t k = static_cast<int64_t>(probs[0].size());
    double score_sum = 0.0;
    int64_t per = n / splits;
    for (int s = 0; s < splits; ++s) {
        int64_t lo = s * per;
        int64_t hi = s == splits - 1 ? n : lo + per;
        std::vector<double> marginal(static_cast<size_t>(k), 0.0);
        for (int64_t i = lo; i < hi; ++i)
            for (int64_t j = 0; j < k; ++j) marginal[static_cast<size_t>(j)] += probs[static_cast<size_t>(i)][static_cast<size_t>(j)];
        for (auto& m : marginal) m /= static_cast<double>(hi - lo);
        double kl_mean = 0.0;
        for (int64_t i = lo; i < hi; ++i) {
            double kl = 0.0;
            for (int64_t j = 0; j < k; ++j) {
                double p = probs[static_cast<size_t>(i)][static_cast<size_t>(j)];
                if (p > 0.0)
                    kl += p * std::log(std::max(p, eps) / std::max(marginal[static_cast<size_t>(j)], eps));
            }
            kl_mean += kl;
        }
        kl_mean /= static_cast<double>(hi - lo);
        score_sum += std::exp(kl_mean);
    }
    return score_sum / static_cast<double>(splits);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw numerical_error("cosine_similarity: zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double clip_sim(const std::vector<std::string>& prompt, const VideoTensor& video, FeatureExtractor& extractor) {
    auto text = extractor.embed_text(prompt);
    int64_t T = video.frames(), H = video.height(), W = video.width();
    double total = 0.0;
    for (int64_t t = 0; t < T; ++t) {
        Tensor frame({H, W, 3});
        std::copy(video.data.data() + t * H * W * 3, video.data.data() + (t + 1) * H * W * 3, frame.data());
        total += cosine_similarity(text, extractor.embed_image(frame));
    }
    return total / static_cast<double>(T);
}

double fff_clip(const Tensor& condition_image, const VideoTensor& generated, FeatureExtractor& extractor) {
    int64_t H = generated.height(), W = generated.width();
    Tensor frame0({H, W, 3});
    std::copy(generated.data.data(), generated.data.data() + H * W * 3, frame0.data());
    return cosine_similarity(extractor.embed_image(condition_image), extractor.embed_image(frame0));
}

}  // namespace dv
