#include "dv/guidance.hpp"

namespace dv {

namespace {

void check_shapes(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b)) throw invalid_argument(std::string(who) + ": shape mismatch");
}

Tensor combine3(const Tensor& a, double ca, const Tensor& b, double cb, const Tensor& c, double cc) {
    Tensor out(a.dims());
    const double* pa = a.data();
    const double* pb = b.data();
    const double* pc = c.data();
    double* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = ca * pa[i] + cb * pb[i] + cc * pc[i];
    return out;
}

}  // namespace

Tensor cfg_single(const Tensor& eps_uncond, const Tensor& eps_cond, double s) {
    check_shapes(eps_uncond, eps_cond, "cfg_single");
    Tensor out(eps_uncond.dims());
    const double* pu = eps_uncond.data();
    const double* pc = eps_cond.data();
    double* po = out.data();
    const double cu = 1.0 - s;
    for (int64_t i = 0; i < out.size(); ++i) po[i] = cu * pu[i] + s * pc[i];
    return out;
}

Tensor cfg_double(const Tensor& eps_uu, const Tensor& eps_tu, const Tensor& eps_tc, const GuidanceScales& scales) {
    check_shapes(eps_uu, eps_tu, "cfg_double");
    check_shapes(eps_uu, eps_tc, "cfg_double");
    return combine3(eps_uu, 1.0 - scales.text, eps_tu, scales.text - scales.image, eps_tc, scales.image);
}

Tensor cfg_double_alt(const Tensor& eps_uu, const Tensor& eps_ui, const Tensor& eps_tc, const GuidanceScales& scales) {
    check_shapes(eps_uu, eps_ui, "cfg_double_alt");
    check_shapes(eps_uu, eps_tc, "cfg_double_alt");
    return combine3(eps_uu, 1.0 - scales.image, eps_ui, scales.image - scales.text, eps_tc, scales.text);
}

std::vector<Tensor> ModelBatchDenoiser::eval(const Tensor& z, int t, const std::vector<CondPair>& conds) {
    const Shape& d = z.dims();
    int64_t B = static_cast<int64_t>(conds.size());
    // tile the latent across the condition variants
    Tensor zb({B, d[0], d[1], d[2], d[3]});
    for (int64_t b = 0; b < B; ++b)
        std::copy(z.data(), z.data() + z.size(), zb.data() + b * z.size());
    Tensor eps = model_.predict_eps(zb, std::vector<int>(static_cast<size_t>(B), t), conds);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        Tensor e(d);
        std::copy(eps.data() + b * z.size(), eps.data() + (b + 1) * z.size(), e.data());
        out.push_back(std::move(e));
    }
    return out;
}

Tensor guided_eps(BatchDenoiser& denoiser, const Tensor& z_t, int t, const CondPair& cond,
                  const GuidanceScales& scales, bool collapse_unit_scales) {
    const bool text_null = !cond.text.has_value() || cond.text->empty();
    const bool image_null = cond.image.is_null;
    const int64_t H = cond.image.height(), W = cond.image.width();
    CondPair uncond{std::nullopt, ConditionImage::white(H, W)};

    if (text_null && image_null) {
        auto out = denoiser.eval(z_t, t, {uncond});
        return std::move(out[0]);
    }
    if (collapse_unit_scales && scales.text == 1.0 && scales.image == 1.0) {
        auto out = denoiser.eval(z_t, t, {cond});
        return std::move(out[0]);
    }
    if (image_null) {  // text-only conditioning
        auto out = denoiser.eval(z_t, t, {uncond, cond});
        return cfg_single(out[0], out[1], scales.text);
    }
    if (text_null) {  // image-only conditioning
        auto out = denoiser.eval(z_t, t, {uncond, cond});
        return cfg_single(out[0], out[1], scales.image);
    }
    if (scales.decomposition == Decomposition::TextFirst) {
        CondPair text_only{cond.text, ConditionImage::white(H, W)};
        auto out = denoiser.eval(z_t, t, {uncond, text_only, cond});
        return cfg_double(out[0], out[1], out[2], scales);
    }
    CondPair image_only{std::nullopt, cond.image};
    auto out = denoiser.eval(z_t, t, {uncond, image_only, cond});
    return cfg_double_alt(out[0], out[1], out[2], scales);
}

}  // namespace dv
