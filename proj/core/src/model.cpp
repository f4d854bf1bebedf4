#include "dv/model.hpp"

namespace dv {

using namespace ops;

DreamVideoModel::DreamVideoModel(const ModelConfig& cfg) : cfg_(cfg) {
    validate_unet_config(cfg_.unet);
    RandomStream rng(mix_seed(cfg_.init_seed, 0x11DE1));
    RandomStream text_rng = rng.fork(1);
    RandomStream unet_rng = rng.fork(2);
    RandomStream ret_rng = rng.fork(3);
    text_ = TextEncoder(params_, "text", cfg_.unet.text_dim, text_rng);
    unet_ = UNet(params_, "unet", cfg_.unet, unet_rng);
    retention_ = RetentionBranch(params_, "retention", cfg_.unet, cfg_.spatial_factor, ret_rng);
    clone_retention_from_backbone();
}

void DreamVideoModel::clone_retention_from_backbone() {
    dv::clone_retention_from_backbone(params_, "retention", "unet");
}

TextBatch DreamVideoModel::encode_text(const std::vector<CondPair>& conds) const {
    TextBatch tb;
    tb.emb.reserve(conds.size());
    for (const auto& c : conds) tb.emb.push_back(text_.encode(c.text).emb);
    return tb;
}

Var DreamVideoModel::stack_images(const std::vector<CondPair>& conds) const {
    int64_t B = static_cast<int64_t>(conds.size());
    int64_t H = conds[0].image.height(), W = conds[0].image.width();
    Tensor img({B, 3, H, W});
    double* po = img.data();
    for (int64_t b = 0; b < B; ++b) {
        const ConditionImage& ci = conds[static_cast<size_t>(b)].image;
        validate_condition_image(ci);
        if (ci.height() != H || ci.width() != W)
            throw invalid_argument("condition images in one batch must share a resolution");
        const double* p = ci.data.data();
        for (int64_t ch = 0; ch < 3; ++ch)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j)
                    po[((b * 3 + ch) * H + i) * W + j] = p[(i * W + j) * 3 + ch];
    }
    return Var::constant(std::move(img));
}

void DreamVideoModel::check_inputs(const Shape& zdims, const std::vector<int>& t, size_t n_conds) const {
    if (zdims.size() != 5) throw invalid_argument("predict_eps: latent batch must be [B,T,c,h,w]");
    int64_t B = zdims[0];
    if (static_cast<int64_t>(t.size()) != B || static_cast<int64_t>(n_conds) != B)
        throw invalid_argument("predict_eps: batch size mismatch between latents, steps and conditions");
    for (int ti : t)
        if (ti < 0 || ti > cfg_.max_step)
            throw invalid_argument("predict_eps: step " + std::to_string(ti) + " outside [0, " +
                                   std::to_string(cfg_.max_step) + "]");
}

Var DreamVideoModel::predict_eps_var(const Var& z_flat, const std::vector<int>& t, const std::vector<CondPair>& conds,
                                     int64_t batch, int64_t frames) {
    for (int ti : t)
        if (ti < 0 || ti > cfg_.max_step) throw invalid_argument("predict_eps: step out of range");
    Var temb = unet_.time_mlp.forward(t);
    TextBatch text = encode_text(conds);
    Var image = stack_images(conds);
    std::vector<Var> controls = retention_.forward(z_flat, temb, text, image, batch, frames, unet_.temporal_enabled);
    Var eps = unet_.forward(z_flat, temb, text, &controls, batch, frames);
    eval_count_ += batch;
    return eps;
}

Tensor DreamVideoModel::predict_eps(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds) {
    check_inputs(z.dims(), t, conds.size());
    NoGradGuard ng;
    int64_t B = z.dim(0), T = z.dim(1);
    Var z_flat = Var::constant(z.reshaped({B * T, z.dim(2), z.dim(3), z.dim(4)}));
    Var eps = predict_eps_var(z_flat, t, conds, B, T);
    return eps.value().reshaped(z.dims()).clone();
}

Tensor DreamVideoModel::backbone_eps(const Tensor& z, const std::vector<int>& t, const std::vector<CondPair>& conds) {
    check_inputs(z.dims(), t, conds.size());
    NoGradGuard ng;
    int64_t B = z.dim(0), T = z.dim(1);
    Var z_flat = Var::constant(z.reshaped({B * T, z.dim(2), z.dim(3), z.dim(4)}));
    Var temb = unet_.time_mlp.forward(t);
    TextBatch text = encode_text(conds);
    Var eps = unet_.forward(z_flat, temb, text, nullptr, B, T);
    eval_count_ += B;
    return eps.value().reshaped(z.dims()).clone();
}

Tensor unet_forward(DreamVideoModel& model, const LatentVideo& z_t, int t, const CondPair& cond) {
    const Shape& d = z_t.data.dims();
    Tensor z = z_t.data.reshaped({1, d[0], d[1], d[2], d[3]});
    Tensor eps = model.predict_eps(z, {t}, {cond});
    return eps.reshaped(d);
}

bool is_trainable_param(const std::string& name) {
    if (name.rfind("retention.", 0) == 0) return true;
    if (name.rfind("unet.", 0) == 0)
        return name.find(".tconv.") != std::string::npos || name.find(".tattn.") != std::string::npos;
    return false;
}

std::vector<std::pair<std::string, Var>> trainable_parameters(DreamVideoModel& model) {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& [name, var] : model.params().all())
        if (is_trainable_param(name)) out.emplace_back(name, var);
    return out;
}

}  // namespace dv
