#include <doctest.h>

#include <cmath>

#include "dv/extractor.hpp"
#include "dv/metrics.hpp"

using namespace dv;

namespace {

Tensor random_image(RandomStream& rng, int64_t H, int64_t W) {
    Tensor t({H, W, 3});
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = rng.uniform();
    return t;
}

VideoTensor video_of(std::vector<Tensor> frames) {
    int64_t T = static_cast<int64_t>(frames.size());
    int64_t H = frames[0].dim(0), W = frames[0].dim(1);
    Tensor v({T, H, W, 3});
    for (int64_t t = 0; t < T; ++t)
        std::copy(frames[static_cast<size_t>(t)].data(), frames[static_cast<size_t>(t)].data() + H * W * 3,
                  v.data() + t * H * W * 3);
    return {std::move(v)};
}

// stub emitting preset vectors / classifications
class StubExtractor : public FeatureExtractor {
  public:
    std::vector<double> embed_video(const VideoTensor& v) override {
        return video_features.at(static_cast<size_t>(std::lround(v.data[0] * 1000)));
    }
    std::vector<double> embed_image(const Tensor& frame) override {
        return image_features.at(static_cast<size_t>(std::lround(frame[0] * 1000)));
    }
    std::vector<double> embed_text(const std::vector<std::string>&) override { return text_feature; }
    std::vector<double> classify(const VideoTensor& v) override {
        return classifications.at(static_cast<size_t>(std::lround(v.data[0] * 1000)));
    }
    std::map<size_t, std::vector<double>> video_features;
    std::map<size_t, std::vector<double>> image_features;
    std::vector<double> text_feature;
    std::map<size_t, std::vector<double>> classifications;
};

VideoTensor tagged_video(double tag) {
    Tensor v({2, 4, 4, 3}, 0.2);
    v[0] = tag;
    return {std::move(v)};
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("ssim: identity, symmetry, closed-form constant patches") {
    RandomStream rng(1);
    Tensor a = random_image(rng, 16, 16);
    Tensor b = random_image(rng, 16, 16);

    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

    // all-zeros vs all-ones: C1/(1+C1) with C1 = (0.01)^2
    Tensor zeros({16, 16, 3}, 0.0), ones({16, 16, 3}, 1.0);
    double c1 = 1e-4;
    CHECK(ssim(zeros, ones) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-10));

    // joint channel permutation of both inputs leaves ssim unchanged
    auto permute_channels = [](const Tensor& img) {
        Tensor out(img.dims());
        int64_t n = img.size() / 3;
        for (int64_t i = 0; i < n; ++i) {
            out[i * 3 + 0] = img[i * 3 + 2];
            out[i * 3 + 1] = img[i * 3 + 0];
            out[i * 3 + 2] = img[i * 3 + 1];
        }
        return out;
    };
    CHECK(ssim(permute_channels(a), permute_channels(b)) == doctest::Approx(ssim(a, b)).epsilon(1e-12));

    CHECK_THROWS_AS(ssim(a, random_image(rng, 16, 8)), invalid_argument);
    CHECK_THROWS_AS(ssim(random_image(rng, 8, 8), random_image(rng, 8, 8)), invalid_argument);  // below window
}

TEST_CASE("fff_ssim: definition and frame invariance") {
    RandomStream rng(2);
    Tensor cond = random_image(rng, 16, 16);
    Tensor other = random_image(rng, 16, 16);
    VideoTensor vid = video_of({cond.clone(), other.clone()});
    CHECK(fff_ssim(cond, vid) == doctest::Approx(1.0).epsilon(1e-12));

    // changing frames 1..T-1 does not change the metric
    VideoTensor vid2 = video_of({cond.clone(), random_image(rng, 16, 16)});
    CHECK(fff_ssim(cond, vid2) == fff_ssim(cond, vid));
    CHECK_THROWS_AS(fff_ssim(random_image(rng, 12, 16), vid), invalid_argument);
}

TEST_CASE("fit_gaussian: hand-computed example and invariances") {
    auto s = fit_gaussian({{0.0, 0.0}, {2.0, 0.0}});
    CHECK(s.mean[0] == 1.0);
    CHECK(s.mean[1] == 0.0);
    CHECK(s.covariance[0] == 2.0);  // unbiased divisor n-1 = 1
    CHECK(s.covariance[1] == 0.0);
    CHECK(s.covariance[2] == 0.0);
    CHECK(s.covariance[3] == 0.0);

    auto same = fit_gaussian({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    for (double v : same.covariance) CHECK(v == 0.0);

    auto fwd = fit_gaussian({{1, 2}, {3, 1}, {0, 5}});
    auto rev = fit_gaussian({{0, 5}, {3, 1}, {1, 2}});
    for (size_t i = 0; i < 4; ++i) CHECK(fwd.covariance[i] == doctest::Approx(rev.covariance[i]).epsilon(1e-14));

    CHECK_THROWS_AS(fit_gaussian({{1.0}}), invalid_argument);
}

TEST_CASE("frechet_distance: closed forms") {
    // identical stats -> 0
    auto s = fit_gaussian({{0.0, 1.0}, {1.0, 0.0}, {2.0, 2.0}});
    CHECK(frechet_distance(s, s) < 1e-8);

    // 1-D: mu 0 vs 3, var 1 vs 4 -> 9 + (1 + 4 - 2*2) = 10
    GaussianStats a, b;
    a.mean = {0.0};
    a.covariance = {1.0};
    a.sample_count = 2;
    b.mean = {3.0};
    b.covariance = {4.0};
    b.sample_count = 2;
    CHECK(frechet_distance(a, b) == doctest::Approx(10.0).epsilon(1e-8));

    // diagonal covariances decompose into per-coordinate 1-D distances
    GaussianStats d1, d2;
    d1.mean = {1.0, -2.0, 0.5};
    d2.mean = {0.0, 1.0, 2.0};
    d1.covariance = {2.0, 0, 0, 0, 0.5, 0, 0, 0, 1.0};
    d2.covariance = {1.0, 0, 0, 0, 3.0, 0, 0, 0, 0.25};
    d1.sample_count = d2.sample_count = 4;
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) {
        double dm = d1.mean[static_cast<size_t>(i)] - d2.mean[static_cast<size_t>(i)];
        double v1 = d1.covariance[static_cast<size_t>(i * 3 + i)], v2 = d2.covariance[static_cast<size_t>(i * 3 + i)];
        expect += dm * dm + v1 + v2 - 2.0 * std::sqrt(v1 * v2);
    }
    CHECK(frechet_distance(d1, d2) == doctest::Approx(expect).epsilon(1e-8));

    GaussianStats bad = a;
    bad.covariance = {-1.0};
    CHECK_THROWS_AS(frechet_distance(bad, b), numerical_error);
    GaussianStats wrong_dim = d1;
    CHECK_THROWS_AS(frechet_distance(a, wrong_dim), invalid_argument);
}

TEST_CASE("fvd: zero on identical sets, symmetric, stub closed form") {
    StubExtractor ex;
    ex.video_features[100] = {0.0};
    ex.video_features[200] = {2.0};
    ex.video_features[300] = {3.0};
    ex.video_features[400] = {7.0};
    std::vector<VideoTensor> real, gen;
    real.push_back(tagged_video(0.1));
    real.push_back(tagged_video(0.2));
    gen.push_back(tagged_video(0.3));
    gen.push_back(tagged_video(0.4));

    std::vector<VideoTensor> real_copy;
    real_copy.push_back(tagged_video(0.1));
    real_copy.push_back(tagged_video(0.2));
    CHECK(fvd(real, real_copy, ex) < 1e-6);

    // features {0,2} vs {3,7}: mu 1 vs 5, var 2 vs 8 -> 16 + 2 + 8 - 2*4 = 18
    CHECK(fvd(real, gen, ex) == doctest::Approx(18.0).epsilon(1e-8));
    CHECK(fvd(gen, real, ex) == doctest::Approx(fvd(real, gen, ex)).epsilon(1e-12));
}

TEST_CASE("inception_score: uniform -> 1, one-hot distinct -> N, floor at 1") {
    StubExtractor ex;
    const int N = 5;
    std::vector<VideoTensor> vids;
    for (int i = 0; i < N; ++i) {
        vids.push_back(tagged_video(0.1 * (i + 1)));
        std::vector<double> onehot(N, 0.0);
        onehot[static_cast<size_t>(i)] = 1.0;
        ex.classifications[static_cast<size_t>(100 * (i + 1))] = onehot;
    }
    CHECK(inception_score(vids, ex) == doctest::Approx(static_cast<double>(N)).epsilon(1e-9));

    for (int i = 0; i < N; ++i)
        ex.classifications[static_cast<size_t>(100 * (i + 1))] = std::vector<double>(4, 0.25);
    CHECK(inception_score(vids, ex) == doctest::Approx(1.0).epsilon(1e-12));

    // all videos classified identically (non-uniform) -> 1.0
    for (int i = 0; i < N; ++i) ex.classifications[static_cast<size_t>(100 * (i + 1))] = {0.7, 0.2, 0.1};
    CHECK(inception_score(vids, ex) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("clip_sim and fff_clip") {
    StubExtractor ex;
    ex.text_feature = {1.0, 0.0};
    ex.image_features[0] = {1.0, 0.0};    // frame tagged 0.0: identical
    ex.image_features[500] = {0.0, 1.0};  // frame tagged 0.5: orthogonal
    Tensor f_same({4, 4, 3}, 0.0);
    Tensor f_orth({4, 4, 3}, 0.5);
    VideoTensor vid = video_of({f_same.clone(), f_orth.clone()});
    // cosines 1 and 0 -> mean 0.5
    CHECK(clip_sim({"red"}, vid, ex) == doctest::Approx(0.5).epsilon(1e-12));

    VideoTensor same_only = video_of({f_same.clone(), f_same.clone()});
    CHECK(clip_sim({"red"}, same_only, ex) == doctest::Approx(1.0).epsilon(1e-12));

    // fff_clip: frame 0 equals condition image -> 1; orthogonal stub -> 0
    CHECK(fff_clip(f_same, vid, ex) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fff_clip(f_orth, vid, ex) == doctest::Approx(0.0).epsilon(1e-12));

    // frames 1..T-1 do not matter
    VideoTensor vid2 = video_of({f_same.clone(), f_same.clone()});
    CHECK(fff_clip(f_same, vid2, ex) == fff_clip(f_same, vid, ex));

    ex.text_feature = {0.0, 0.0};
    CHECK_THROWS_AS(clip_sim({"red"}, vid, ex), numerical_error);

    // cosines 0.2 and 0.6 -> 0.4
    ex.text_feature = {1.0, 0.0};
    ex.image_features[0] = {0.2, std::sqrt(1.0 - 0.04)};
    ex.image_features[500] = {0.6, std::sqrt(1.0 - 0.36)};
    CHECK(clip_sim({"red"}, vid, ex) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("toy extractor: seeded training beats chance by 3x") {
    DatasetSpec spec;
    spec.num_videos = 140;
    spec.resolution = 16;
    spec.frames_per_video = 6;
    spec.velocity = 1;
    spec.seed = 23;
    auto corpus = synth_dataset(spec);

    ToyExtractorConfig cfg;
    cfg.epochs = 10;
    auto ex = train_toy_extractor(corpus, 42, cfg);
    // chance for 7 motion classes is 1/7
    CHECK(ex->holdout_accuracy() >= 3.0 / 7.0);

    // embeddings have the configured dimension; classify sums to 1
    CHECK(ex->embed_video(corpus[0].video).size() == 64);
    CHECK(ex->embed_image(Tensor({16, 16, 3}, 0.3)).size() == 64);
    auto probs = ex->classify(corpus[0].video);
    REQUIRE(probs.size() == 7);
    double sum = 0;
    for (double p : probs) sum += p;
    CHECK(std::fabs(sum - 1.0) < 1e-6);

    // determinism
    auto ex2 = train_toy_extractor(corpus, 42, cfg);
    auto e1 = ex->embed_video(corpus[3].video);
    auto e2 = ex2->embed_video(corpus[3].video);
    CHECK(e1 == e2);
}

TEST_SUITE_END();
