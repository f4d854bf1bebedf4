#include "dv/extractor.hpp"

#include <cmath>

namespace dv {

using namespace ops;

ToyExtractor::ToyExtractor(const ToyExtractorConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
    RandomStream rng(mix_seed(seed, 0xE87));
    // 5 input channels: centered RGB plus x/y coordinate maps
    c1_ = Conv2dLayer(params_, "ex.c1", 5, 16, 3, 2, 1, rng);
    c2_ = Conv2dLayer(params_, "ex.c2", 16, 32, 3, 2, 1, rng);
    c3_ = Conv2dLayer(params_, "ex.c3", 32, 32, 3, 2, 1, rng);
    fc_ = Linear(params_, "ex.fc", 96, cfg.embed_dim, rng);
    head_motion_ = Linear(params_, "ex.head_motion", cfg.embed_dim, 7, rng);
    head_color_ = Linear(params_, "ex.head_color", cfg.embed_dim, 5, rng);
    head_shape_ = Linear(params_, "ex.head_shape", cfg.embed_dim, 3, rng);
}

Tensor ToyExtractor::frames_tensor(const VideoTensor& video) const {
    int64_t T = video.frames(), H = video.height(), W = video.width();
    Tensor out({T, 5, H, W});
    const double* p = video.data.data();
    double* po = out.data();
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                    po[((t * 5 + c) * H + y) * W + x] = 2.0 * p[((t * H + y) * W + x) * 3 + c] - 1.0;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                po[((t * 5 + 3) * H + y) * W + x] = 2.0 * static_cast<double>(x) / static_cast<double>(W - 1) - 1.0;
                po[((t * 5 + 4) * H + y) * W + x] = 2.0 * static_cast<double>(y) / static_cast<double>(H - 1) - 1.0;
            }
    }
    return out;
}

Var ToyExtractor::embed_var(const Var& frames, int64_t batch, int64_t frames_per_item) const {
    Var h = silu(c1_.forward(frames));
    h = silu(c2_.forward(h));
    h = silu(c3_.forward(h));
    Var feats = gap2d(h);  // [B*T, 32]
    int64_t F = feats.dims()[1];
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        Var ft = slice_axis0(feats, b * frames_per_item, frames_per_item);  // [T, F]
        Var mean_t = mean_axis0(ft);
        Var delta_t, span_t;
        if (frames_per_item > 1) {
            Var d = sub(slice_axis0(ft, 1, frames_per_item - 1), slice_axis0(ft, 0, frames_per_item - 1));
            delta_t = mean_axis0(abs_val(d));
            span_t = reshape(sub(slice_axis0(ft, frames_per_item - 1, 1), slice_axis0(ft, 0, 1)), {F});
        } else {
            delta_t = Var::constant(Tensor::zeros({F}));
            span_t = Var::constant(Tensor::zeros({F}));
        }
        Var fv = concat_axis0({mean_t, delta_t, span_t});  // [3F]
        rows.push_back(reshape(fv, {1, 3 * F}));
    }
    Var x = concat_axis0(rows);  // [B, 3F]
    return silu(fc_.forward(x));
}

double ToyExtractor::train(const std::vector<DatasetItem>& corpus) {
    if (corpus.size() < 5) throw invalid_argument("toy extractor: corpus too small");
    RandomStream rng(mix_seed(seed_, 0xE87A11));
    size_t n_hold = std::max<size_t>(1, static_cast<size_t>(static_cast<double>(corpus.size()) * cfg_.holdout_fraction));
    size_t n_train = corpus.size() - n_hold;

    int64_t T = corpus[0].video.frames();
    auto build_batch = [&](const std::vector<size_t>& ids) {
        int64_t H = corpus[0].video.height(), W = corpus[0].video.width();
        Tensor frames({static_cast<int64_t>(ids.size()) * T, 5, H, W});
        int64_t item_sz = T * 5 * H * W;
        for (size_t i = 0; i < ids.size(); ++i) {
            Tensor f = frames_tensor(corpus[ids[i]].video);
            std::copy(f.data(), f.data() + item_sz, frames.data() + static_cast<int64_t>(i) * item_sz);
        }
        return frames;
    };

    Adam opt(params_.vars(), AdamConfig{.lr = cfg_.learning_rate});
    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (size_t i = n_train; i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
        for (size_t at = 0; at < n_train; at += static_cast<size_t>(cfg_.batch_size)) {
            std::vector<size_t> ids(order.begin() + static_cast<long>(at),
                                    order.begin() + static_cast<long>(std::min(at + static_cast<size_t>(cfg_.batch_size), n_train)));
            std::vector<int> lm, lc, ls;
            for (size_t id : ids) {
                lm.push_back(corpus[id].motion_id);
                lc.push_back(corpus[id].color_id);
                ls.push_back(corpus[id].shape_id);
            }
            Var frames = Var::constant(build_batch(ids));
            Var emb = embed_var(frames, static_cast<int64_t>(ids.size()), T);
            Var loss = add(add(cross_entropy(head_motion_.forward(emb), lm), cross_entropy(head_color_.forward(emb), lc)),
                           cross_entropy(head_shape_.forward(emb), ls));
            if (!std::isfinite(loss.value()[0])) throw divergence_error("toy extractor training diverged");
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
    }

    // class prototypes over the training split, keyed by caption word
    std::map<std::string, std::vector<double>> sums;
    std::map<std::string, int> counts;
    for (size_t i = 0; i < n_train; ++i) {
        auto emb = embed_video(corpus[i].video);
        for (const auto& word : corpus[i].caption) {
            auto& s = sums[word];
            if (s.empty()) s.assign(emb.size(), 0.0);
            for (size_t k = 0; k < emb.size(); ++k) s[k] += emb[k];
            counts[word]++;
        }
    }
    prototypes_.clear();
    for (auto& [word, s] : sums) {
        for (auto& v : s) v /= static_cast<double>(counts[word]);
        prototypes_[word] = std::move(s);
    }

    // held-out motion accuracy
    int correct = 0;
    for (size_t i = n_train; i < corpus.size(); ++i) {
        auto probs = classify(corpus[i].video);
        int arg = 0;
        for (size_t k = 1; k < probs.size(); ++k)
            if (probs[k] > probs[static_cast<size_t>(arg)]) arg = static_cast<int>(k);
        if (arg == corpus[i].motion_id) ++correct;
    }
    holdout_accuracy_ = static_cast<double>(correct) / static_cast<double>(n_hold);
    return holdout_accuracy_;
}

std::vector<double> ToyExtractor::embed_video(const VideoTensor& video) {
    NoGradGuard ng;
    Var frames = Var::constant(frames_tensor(video));
    Var emb = embed_var(frames, 1, video.frames());
    const Tensor& v = emb.value();
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> ToyExtractor::embed_image(const Tensor& frame) {
    if (frame.ndim() != 3 || frame.dim(2) != 3) throw invalid_argument("embed_image: expected [H,W,3]");
    NoGradGuard ng;
    VideoTensor single{frame.reshaped({1, frame.dim(0), frame.dim(1), 3})};
    Var frames = Var::constant(frames_tensor(single));
    Var emb = embed_var(frames, 1, 1);
    const Tensor& v = emb.value();
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> ToyExtractor::embed_text(const std::vector<std::string>& tokens) {
    std::vector<double> out(static_cast<size_t>(cfg_.embed_dim), 0.0);
    int matched = 0;
    for (const auto& tok : tokens) {
        auto it = prototypes_.find(tok);
        if (it == prototypes_.end()) continue;
        for (size_t k = 0; k < out.size(); ++k) out[k] += it->second[k];
        ++matched;
    }
    if (matched > 0)
        for (auto& v : out) v /= static_cast<double>(matched);
    return out;
}

std::vector<double> ToyExtractor::classify(const VideoTensor& video) {
    NoGradGuard ng;
    Var frames = Var::constant(frames_tensor(video));
    Var emb = embed_var(frames, 1, video.frames());
    Var probs = softmax_lastdim(head_motion_.forward(emb));
    const Tensor& v = probs.value();
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::unique_ptr<ToyExtractor> train_toy_extractor(const std::vector<DatasetItem>& corpus, uint64_t seed,
                                                  const ToyExtractorConfig& cfg) {
    auto ex = std::make_unique<ToyExtractor>(cfg, seed);
    ex->train(corpus);
    return ex;
}

}  // namespace dv
