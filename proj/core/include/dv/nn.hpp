#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dv/autograd.hpp"
#include "dv/random.hpp"

namespace dv {

enum class InitKind { Normal, Zeros, Dirac };

// Named parameter registry. Iteration order is lexicographic, which makes
// optimizer updates, checkpoint layout and gradient checks deterministic.
class ParamStore {
  public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Var>& all() const { return params_; }
    std::vector<Var> vars() const;
    int64_t total_elements() const;
    // Copies tensor values (not grads) from src_name into dst_name.
    void copy_value(const std::string& dst_name, const std::string& src_name);

  private:
    std::map<std::string, Var> params_;
};

Tensor init_tensor(Shape dims, InitKind kind, RandomStream& rng, double gain = 1.0);

struct Linear {
    Var w, b;
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, RandomStream& rng,
           InitKind kind = InitKind::Normal, bool bias = true);
    Var forward(const Var& x) const { return ops::linear(x, w, b); }
};

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 1;
    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int kernel, int stride, int pad,
                RandomStream& rng, InitKind kind = InitKind::Normal);
    Var forward(const Var& x) const { return ops::conv2d(x, w, b, stride, pad); }
};

struct GroupNormLayer {
    Var gamma, beta;
    int groups = 8;
    GroupNormLayer() = default;
    GroupNormLayer(ParamStore& ps, const std::string& name, int64_t channels, int groups);
    Var forward(const Var& x) const { return ops::group_norm(x, gamma, beta, groups); }
};

// Sinusoidal step embedding; entries lie in [-1, 1].
Tensor sinusoidal_embedding(double position, int64_t dim);
// Stacked sinusoidal embeddings for a batch of steps -> [B, dim].
Tensor sinusoidal_embedding_batch(const std::vector<int>& steps, int64_t dim);

// Sinusoidal base fed through a 2-layer MLP.
struct TimeEmbed {
    int64_t sin_dim = 0, out_dim = 0;
    Linear l1, l2;
    TimeEmbed() = default;
    TimeEmbed(ParamStore& ps, const std::string& name, int64_t sin_dim, int64_t out_dim, RandomStream& rng);
    Var forward(const std::vector<int>& steps) const;  // [B, out_dim]
};

// Per-frame multi-head self-attention over spatial positions.
struct SelfAttention2d {
    GroupNormLayer norm;
    Linear q, k, v, proj;
    int heads = 1;
    SelfAttention2d() = default;
    SelfAttention2d(ParamStore& ps, const std::string& name, int64_t channels, int heads, int norm_groups,
                    RandomStream& rng, InitKind proj_init);
    Var forward(const Var& x) const;  // [N,C,H,W]
};

// Cross-attention from spatial tokens to a per-item text sequence.
struct CrossAttention2d {
    GroupNormLayer norm;
    Linear q, k, v, proj;
    int heads = 1;
    CrossAttention2d() = default;
    CrossAttention2d(ParamStore& ps, const std::string& name, int64_t channels, int64_t text_dim, int heads,
                     int norm_groups, RandomStream& rng, InitKind proj_init);
    Var forward(const Var& x, const std::vector<Var>& text, int64_t batch, int64_t frames) const;
};

// 1-D convolution over the frame axis; dirac init makes it an exact identity.
struct TempConv {
    Var w, b;
    TempConv() = default;
    TempConv(ParamStore& ps, const std::string& name, int64_t channels, int kernel, RandomStream& rng);
    Var forward(const Var& x, int64_t batch, int64_t frames) const;
};

// Attention over the frame axis per spatial location, with a sinusoidal
// frame-position encoding added to the attention input. Zero-initialized
// output projection keeps it an identity at init.
struct TempAttn {
    GroupNormLayer norm;
    Linear q, k, v, proj;
    int heads = 1;
    TempAttn() = default;
    TempAttn(ParamStore& ps, const std::string& name, int64_t channels, int heads, int norm_groups, RandomStream& rng);
    Var forward(const Var& x, int64_t batch, int64_t frames) const;
};

// Time-modulated residual block (scale/shift conditioning on gn2).
struct ResBlock {
    GroupNormLayer gn1;
    Conv2dLayer conv1;
    Linear emb;
    GroupNormLayer gn2;
    Conv2dLayer conv2;  // zero-initialized
    std::optional<Conv2dLayer> skip;
    int64_t cin = 0, cout = 0;
    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int64_t time_dim, int norm_groups,
             RandomStream& rng);
    Var forward(const Var& x, const Var& temb_frames) const;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::vector<Var> params, AdamConfig cfg);
    void step();
    void zero_grad();
    int64_t steps_taken() const { return t_; }

  private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace dv
