#include "dv/training.hpp"

#include <cmath>

namespace dv {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw invalid_argument("train config: epochs and batch_size must be positive");
    if (cfg.learning_rate <= 0) throw invalid_argument("train config: learning rate must be positive");
    if (cfg.text_dropout_p < 0 || cfg.text_dropout_p > 1 || cfg.image_dropout_p < 0 || cfg.image_dropout_p > 1)
        throw invalid_argument("train config: dropout probabilities must lie in [0,1]");
    if (cfg.sample_rate < 1) throw invalid_argument("train config: sample_rate must be >= 1");
}

CondPair dropout_conditions(const CondPair& pair, double p_text, double p_image, RandomStream& rng) {
    CondPair out = pair;
    if (rng.bernoulli(p_text)) out.text = std::nullopt;
    if (rng.bernoulli(p_image)) out.image = ConditionImage::white(pair.image.height(), pair.image.width());
    return out;
}

int clip_length(int source_frames, int sample_rate) {
    int window = std::min(sample_rate, source_frames);
    return (source_frames - window) / sample_rate + 1;
}

VideoTensor slice_clip(const VideoTensor& video, int sample_rate, int start) {
    int T_src = static_cast<int>(video.frames());
    int len = clip_length(T_src, sample_rate);
    if (start < 0 || start + (len - 1) * sample_rate >= T_src)
        throw invalid_argument("slice_clip: start " + std::to_string(start) + " out of range");
    int64_t H = video.height(), W = video.width();
    int64_t frame_sz = H * W * 3;
    Tensor out({len, H, W, 3});
    for (int k = 0; k < len; ++k) {
        const double* src = video.data.data() + (static_cast<int64_t>(start) + static_cast<int64_t>(k) * sample_rate) * frame_sz;
        std::copy(src, src + frame_sz, out.data() + static_cast<int64_t>(k) * frame_sz);
    }
    return {std::move(out)};
}

PreparedBatch prepare_training_batch(const Codec& codec, const NoiseSchedule& sched,
                                     const std::vector<TrainBatchItem>& batch, RandomStream& rng) {
    if (batch.empty()) throw invalid_argument("training batch must be nonempty");
    PreparedBatch pb;
    int64_t B = static_cast<int64_t>(batch.size());
    LatentVideo z0 = codec.encode(batch[0].video);
    int64_t T = z0.frames(), C = z0.channels(), h = z0.height(), w = z0.width();
    pb.z_clean = Tensor({B, T, C, h, w});
    pb.z_t = Tensor({B, T, C, h, w});
    pb.eps = Tensor({B, T, C, h, w});
    int64_t item_sz = T * C * h * w;
    for (int64_t b = 0; b < B; ++b) {
        const TrainBatchItem& it = batch[static_cast<size_t>(b)];
        LatentVideo z = b == 0 ? std::move(z0) : codec.encode(it.video);
        if (z.data.size() != item_sz) throw invalid_argument("training batch: clips must share a shape");
        int t = 1 + static_cast<int>(rng.uniform_int(sched.num_steps));
        Tensor noise({T, C, h, w});
        rng.fill_normal(noise);
        std::copy(z.data.data(), z.data.data() + item_sz, pb.z_clean.data() + b * item_sz);
        std::copy(noise.data(), noise.data() + item_sz, pb.eps.data() + b * item_sz);
        LatentVideo zt = diffuse(z, t, LatentVideo{noise}, sched);
        std::copy(zt.data.data(), zt.data.data() + item_sz, pb.z_t.data() + b * item_sz);
        pb.t.push_back(t);
        pb.conds.push_back(CondPair{it.caption, it.image});
    }
    return pb;
}

double training_loss(EpsDenoiser& denoiser, const Codec& codec, const NoiseSchedule& sched,
                     const std::vector<TrainBatchItem>& batch, RandomStream& rng) {
    PreparedBatch pb = prepare_training_batch(codec, sched, batch, rng);
    Tensor eps_hat = denoiser.predict(pb.z_t, pb.t, pb.conds);
    if (!eps_hat.same_shape(pb.eps)) throw invalid_argument("training_loss: denoiser output shape mismatch");
    double s = 0.0;
    const double* a = eps_hat.data();
    const double* b = pb.eps.data();
    for (int64_t i = 0; i < eps_hat.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    double loss = s / static_cast<double>(eps_hat.size());
    if (!std::isfinite(loss)) throw divergence_error("training loss is non-finite");
    return loss;
}

TrainResult train(DreamVideoModel& model, const Codec& codec, const NoiseSchedule& sched,
                  const std::vector<DatasetItem>& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    validate_train_config(cfg);
    if (dataset.empty()) throw invalid_argument("train: dataset must be nonempty");

    RandomStream rng(mix_seed(cfg.seed, 0x7EA11));
    auto named = trainable_parameters(model);
    std::vector<Var> params;
    params.reserve(named.size());
    for (auto& [name, var] : named) params.push_back(var);
    Adam opt(params, AdamConfig{.lr = cfg.learning_rate});

    TrainResult result;
    const int64_t n = static_cast<int64_t>(dataset.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int64_t i = n; i > 1; --i)
            std::swap(order[static_cast<size_t>(i - 1)], order[static_cast<size_t>(rng.uniform_int(i))]);
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t at = 0; at < n; at += cfg.batch_size) {
            int64_t bend = std::min(at + cfg.batch_size, n);
            std::vector<TrainBatchItem> batch;
            batch.reserve(static_cast<size_t>(bend - at));
            for (int64_t i = at; i < bend; ++i) {
                const DatasetItem& item = dataset[static_cast<size_t>(order[static_cast<size_t>(i)])];
                int T_src = static_cast<int>(item.video.frames());
                int window = std::min(cfg.sample_rate, T_src);
                int start = static_cast<int>(rng.uniform_int(window));
                VideoTensor clip = slice_clip(item.video, cfg.sample_rate, start);
                int64_t H = clip.height(), W = clip.width();
                Tensor frame0({H, W, 3});
                std::copy(clip.data.data(), clip.data.data() + H * W * 3, frame0.data());
                CondPair cond{item.caption, ConditionImage::from_pixels(std::move(frame0))};
                cond = dropout_conditions(cond, cfg.text_dropout_p, cfg.image_dropout_p, rng);
                batch.push_back(TrainBatchItem{std::move(clip), cond.text, std::move(cond.image)});
            }
            PreparedBatch pb;
            try {
                pb = prepare_training_batch(codec, sched, batch, rng);
            } catch (const divergence_error&) {
                result.diverged = true;
                return result;
            }
            int64_t B = pb.z_t.dim(0), T = pb.z_t.dim(1);
            Var z_flat = Var::constant(pb.z_t.reshaped({B * T, pb.z_t.dim(2), pb.z_t.dim(3), pb.z_t.dim(4)}));
            Var eps_hat = model.predict_eps_var(z_flat, pb.t, pb.conds, B, T);
            Var target = Var::constant(pb.eps.reshaped(eps_hat.dims()));
            Var loss = ops::mse(eps_hat, target);
            double lv = loss.value()[0];
            if (!std::isfinite(lv)) {
                result.diverged = true;
                return result;
            }
            opt.zero_grad();
            backward(loss);
            opt.step();
            loss_sum += lv;
            ++batches;
            ++result.steps;
        }
        double mean_loss = loss_sum / static_cast<double>(batches);
        result.epoch_loss.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss, result.steps);
    }
    return result;
}

}  // namespace dv
