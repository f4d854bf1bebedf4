#pragma once

#include <functional>

#include "dv/model.hpp"

namespace dv {

enum class Decomposition { TextFirst, ImageFirst };

struct GuidanceScales {
    double text = 7.5;
    double image = 1.5;
    Decomposition decomposition = Decomposition::TextFirst;
};

// f_uncond + s * (f_cond - f_uncond), written in the algebraically equal
// expanded form (1-s)*f_uncond + s*f_cond so s=0 and s=1 are exact.
Tensor cfg_single(const Tensor& eps_uncond, const Tensor& eps_cond, double s);

// Text-first decomposition:
//   f(0,0) + s_t*(f(t,0) - f(0,0)) + s_i*(f(t,i) - f(t,0))
Tensor cfg_double(const Tensor& eps_uu, const Tensor& eps_tu, const Tensor& eps_tc, const GuidanceScales& scales);

// Image-first decomposition:
//   f(0,0) + s_i*(f(0,i) - f(0,0)) + s_t*(f(t,i) - f(0,i))
Tensor cfg_double_alt(const Tensor& eps_uu, const Tensor& eps_ui, const Tensor& eps_tc, const GuidanceScales& scales);

// Denoiser over a batch of condition variants sharing one latent and step.
class BatchDenoiser {
  public:
    virtual ~BatchDenoiser() = default;
    virtual std::vector<Tensor> eval(const Tensor& z, int t, const std::vector<CondPair>& conds) = 0;
};

class ModelBatchDenoiser : public BatchDenoiser {
  public:
    explicit ModelBatchDenoiser(DreamVideoModel& model) : model_(model) {}
    std::vector<Tensor> eval(const Tensor& z, int t, const std::vector<CondPair>& conds) override;

  private:
    DreamVideoModel& model_;
};

// Dispatches the condition variants required by the chosen decomposition
// (3 forwards in general, 2 when one condition is null, 1 when both are null
// or when collapse_unit_scales is set with s_t = s_i = 1) and combines them.
// z is a single-video latent [T,c,h,w].
Tensor guided_eps(BatchDenoiser& denoiser, const Tensor& z_t, int t, const CondPair& cond,
                  const GuidanceScales& scales, bool collapse_unit_scales = false);

}  // namespace dv
