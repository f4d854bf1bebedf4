#include "dv/nn.hpp"

#include <cmath>

namespace dv {

using namespace ops;

Var ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw invalid_state("duplicate parameter: " + name);
    Var v = Var::leaf(std::move(init), true, name);
    params_.emplace(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw invalid_state("unknown parameter: " + name);
    return it->second;
}

std::vector<Var> ParamStore::vars() const {
    std::vector<Var> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(v);
    return out;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.size();
    return n;
}

void ParamStore::copy_value(const std::string& dst_name, const std::string& src_name) {
    Var dst = get(dst_name);
    Var src = get(src_name);
    if (!dst.value().same_shape(src.value()))
        throw invalid_state("copy_value: shape mismatch " + dst_name + " " + shape_str(dst.dims()) + " vs " +
                            src_name + " " + shape_str(src.dims()));
    dst.mutable_value() = src.value().clone();
}

Tensor init_tensor(Shape dims, InitKind kind, RandomStream& rng, double gain) {
    Tensor t(dims);
    switch (kind) {
        case InitKind::Zeros:
            break;
        case InitKind::Normal: {
            // fan_in = product of all dims past the first
            int64_t fan_in = 1;
            for (size_t i = 1; i < dims.size(); ++i) fan_in *= dims[i];
            if (fan_in == 0) fan_in = 1;
            double std = gain / std::sqrt(static_cast<double>(fan_in));
            double* p = t.data();
            for (int64_t i = 0; i < t.size(); ++i) p[i] = rng.normal() * std;
            break;
        }
        case InitKind::Dirac: {
            // [C, C, k] identity over the center tap
            if (dims.size() != 3 || dims[0] != dims[1]) throw invalid_argument("dirac init expects [C,C,k]");
            int64_t C = dims[0], k = dims[2];
            double* p = t.data();
            for (int64_t c = 0; c < C; ++c) p[(c * C + c) * k + k / 2] = 1.0;
            break;
        }
    }
    return t;
}

Linear::Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, RandomStream& rng, InitKind kind,
               bool bias) {
    w = ps.add(name + ".w", init_tensor({out, in}, kind, rng));
    if (bias) b = ps.add(name + ".b", Tensor::zeros({out}));
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int kernel, int stride_,
                         int pad_, RandomStream& rng, InitKind kind)
    : stride(stride_), pad(pad_) {
    w = ps.add(name + ".w", init_tensor({cout, cin, kernel, kernel}, kind, rng));
    b = ps.add(name + ".b", Tensor::zeros({cout}));
}

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& name, int64_t channels, int groups_)
    : groups(groups_) {
    gamma = ps.add(name + ".g", Tensor::full({channels}, 1.0));
    beta = ps.add(name + ".b", Tensor::zeros({channels}));
}

Tensor sinusoidal_embedding(double position, int64_t dim) {
    Tensor out({dim});
    int64_t half = dim / 2;
    double* p = out.data();
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        p[i] = std::sin(position * freq);
        p[half + i] = std::cos(position * freq);
    }
    if (dim % 2) p[dim - 1] = 0.0;
    return out;
}

Tensor sinusoidal_embedding_batch(const std::vector<int>& steps, int64_t dim) {
    Tensor out({static_cast<int64_t>(steps.size()), dim});
    for (size_t i = 0; i < steps.size(); ++i) {
        Tensor row = sinusoidal_embedding(static_cast<double>(steps[i]), dim);
        std::copy(row.data(), row.data() + dim, out.data() + static_cast<int64_t>(i) * dim);
    }
    return out;
}

TimeEmbed::TimeEmbed(ParamStore& ps, const std::string& name, int64_t sin_dim_, int64_t out_dim_, RandomStream& rng)
    : sin_dim(sin_dim_), out_dim(out_dim_) {
    l1 = Linear(ps, name + ".l1", sin_dim, out_dim, rng);
    l2 = Linear(ps, name + ".l2", out_dim, out_dim, rng);
}

Var TimeEmbed::forward(const std::vector<int>& steps) const {
    Var base = Var::constant(sinusoidal_embedding_batch(steps, sin_dim));
    return l2.forward(silu(l1.forward(base)));
}

namespace {

// [rows, C] tokens -> multi-head attention helper reshapes
Var split_heads(const Var& tokens2d, int64_t groups_, int64_t len, int heads) {
    // [groups*len, C] -> [groups, len, heads, dh] -> [groups, heads, len, dh] -> [groups*heads, len, dh]
    int64_t C = tokens2d.dims()[1];
    int64_t dh = C / heads;
    Var x = reshape(tokens2d, {groups_, len, heads, dh});
    x = permute(x, {0, 2, 1, 3});
    return reshape(x, {groups_ * heads, len, dh});
}

Var merge_heads(const Var& x, int64_t groups_, int64_t len, int heads) {
    int64_t dh = x.dims()[2];
    Var y = reshape(x, {groups_, heads, len, dh});
    y = permute(y, {0, 2, 1, 3});
    return reshape(y, {groups_ * len, heads * dh});
}

}  // namespace

SelfAttention2d::SelfAttention2d(ParamStore& ps, const std::string& name, int64_t channels, int heads_,
                                 int norm_groups, RandomStream& rng, InitKind proj_init)
    : heads(heads_) {
    if (channels % heads_) throw invalid_argument("attention: channels not divisible by heads");
    norm = GroupNormLayer(ps, name + ".norm", channels, norm_groups);
    q = Linear(ps, name + ".q", channels, channels, rng, InitKind::Normal, false);
    k = Linear(ps, name + ".k", channels, channels, rng, InitKind::Normal, false);
    v = Linear(ps, name + ".v", channels, channels, rng, InitKind::Normal, false);
    proj = Linear(ps, name + ".proj", channels, channels, rng, proj_init, true);
}

Var SelfAttention2d::forward(const Var& x) const {
    const Shape& d = x.dims();
    int64_t N = d[0], C = d[1], H = d[2], W = d[3], HW = H * W;
    Var h = norm.forward(x);
    Var tokens = reshape(permute(h, {0, 2, 3, 1}), {N * HW, C});
    int64_t dh = C / heads;
    Var qh = split_heads(q.forward(tokens), N, HW, heads);
    Var kh = split_heads(k.forward(tokens), N, HW, heads);
    Var vh = split_heads(v.forward(tokens), N, HW, heads);
    Var attn = softmax_lastdim(bmm(qh, permute(kh, {0, 2, 1}), 1, 1.0 / std::sqrt(static_cast<double>(dh))));
    Var ctx = bmm(attn, vh);
    Var merged = merge_heads(ctx, N, HW, heads);
    Var out = proj.forward(merged);
    out = permute(reshape(out, {N, H, W, C}), {0, 3, 1, 2});
    return add(x, out);
}

CrossAttention2d::CrossAttention2d(ParamStore& ps, const std::string& name, int64_t channels, int64_t text_dim,
                                   int heads_, int norm_groups, RandomStream& rng, InitKind proj_init)
    : heads(heads_) {
    norm = GroupNormLayer(ps, name + ".norm", channels, norm_groups);
    q = Linear(ps, name + ".q", channels, channels, rng, InitKind::Normal, false);
    k = Linear(ps, name + ".k", text_dim, channels, rng, InitKind::Normal, false);
    v = Linear(ps, name + ".v", text_dim, channels, rng, InitKind::Normal, false);
    proj = Linear(ps, name + ".proj", channels, channels, rng, proj_init, true);
}

Var CrossAttention2d::forward(const Var& x, const std::vector<Var>& text, int64_t batch, int64_t frames) const {
    const Shape& d = x.dims();
    int64_t C = d[1], H = d[2], W = d[3], HW = H * W;
    if (d[0] != batch * frames) throw invalid_argument("cross_attention: N != batch*frames");
    int64_t dh = C / heads;
    Var h = norm.forward(x);
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        Var xb = slice_axis0(h, b * frames, frames);                       // [T,C,H,W]
        Var tokens = reshape(permute(xb, {0, 2, 3, 1}), {frames * HW, C});  // [T*HW, C]
        // queries ordered [heads, T, HW, dh] so the rhs repeats per frame
        Var qh = reshape(q.forward(tokens), {frames, HW, heads, dh});
        qh = reshape(permute(qh, {2, 0, 1, 3}), {heads * frames, HW, dh});
        const Var& emb = text[static_cast<size_t>(b)];  // [S, text_dim]
        int64_t S = emb.dims()[0];
        Var kh = reshape(k.forward(emb), {S, heads, dh});
        Var vh = reshape(v.forward(emb), {S, heads, dh});
        Var kt = permute(kh, {1, 2, 0});  // [heads, dh, S]
        Var vt = permute(vh, {1, 0, 2});  // [heads, S, dh]
        Var attn = softmax_lastdim(bmm(qh, kt, frames, 1.0 / std::sqrt(static_cast<double>(dh))));
        Var ctx = bmm(attn, vt, frames);  // [heads*T, HW, dh]
        Var merged = reshape(permute(reshape(ctx, {heads, frames, HW, dh}), {1, 2, 0, 3}), {frames * HW, C});
        Var ob = proj.forward(merged);
        outs.push_back(permute(reshape(ob, {frames, H, W, C}), {0, 3, 1, 2}));
    }
    return add(x, concat_axis0(outs));
}

TempConv::TempConv(ParamStore& ps, const std::string& name, int64_t channels, int kernel, RandomStream& rng) {
    w = ps.add(name + ".w", init_tensor({channels, channels, kernel}, InitKind::Dirac, rng));
    b = ps.add(name + ".b", Tensor::zeros({channels}));
}

Var TempConv::forward(const Var& x, int64_t batch, int64_t frames) const {
    return conv1d_time(x, w, b, batch, frames);
}

TempAttn::TempAttn(ParamStore& ps, const std::string& name, int64_t channels, int heads_, int norm_groups,
                   RandomStream& rng)
    : heads(heads_) {
    norm = GroupNormLayer(ps, name + ".norm", channels, norm_groups);
    q = Linear(ps, name + ".q", channels, channels, rng, InitKind::Normal, false);
    k = Linear(ps, name + ".k", channels, channels, rng, InitKind::Normal, false);
    v = Linear(ps, name + ".v", channels, channels, rng, InitKind::Normal, false);
    proj = Linear(ps, name + ".proj", channels, channels, rng, InitKind::Zeros, true);
}

Var TempAttn::forward(const Var& x, int64_t batch, int64_t frames) const {
    const Shape& d = x.dims();
    int64_t C = d[1], H = d[2], W = d[3], HW = H * W;
    if (d[0] != batch * frames) throw invalid_argument("temp_attention: N != batch*frames");
    int64_t dh = C / heads;
    Var h = norm.forward(x);
    // [B*T,C,H,W] -> [B, T, HW, C] -> [B, HW, T, C] -> [B*HW, T, C]
    Var seq = permute(h, {0, 2, 3, 1});
    seq = reshape(seq, {batch, frames, HW, C});
    seq = permute(seq, {0, 2, 1, 3});
    seq = reshape(seq, {batch * HW, frames, C});
    // frame-position encoding distinguishes frame order
    Tensor pe({frames, C});
    for (int64_t t = 0; t < frames; ++t) {
        Tensor row = sinusoidal_embedding(static_cast<double>(t), C);
        std::copy(row.data(), row.data() + C, pe.data() + t * C);
    }
    seq = add_broadcast0(seq, Var::constant(std::move(pe)));
    Var tokens = reshape(seq, {batch * HW * frames, C});
    Var qh = split_heads(q.forward(tokens), batch * HW, frames, heads);
    Var kh = split_heads(k.forward(tokens), batch * HW, frames, heads);
    Var vh = split_heads(v.forward(tokens), batch * HW, frames, heads);
    Var ctx = bmm(softmax_lastdim(bmm(qh, permute(kh, {0, 2, 1}), 1, 1.0 / std::sqrt(static_cast<double>(dh)))), vh);
    Var merged = merge_heads(ctx, batch * HW, frames, heads);  // [B*HW*T, C]
    Var out = proj.forward(merged);
    out = reshape(out, {batch, HW, frames, C});
    out = permute(out, {0, 2, 3, 1});        // [B, T, C, HW]
    out = reshape(out, {batch * frames, C, H, W});
    return add(x, out);
}

ResBlock::ResBlock(ParamStore& ps, const std::string& name, int64_t cin_, int64_t cout_, int64_t time_dim,
                   int norm_groups, RandomStream& rng)
    : cin(cin_), cout(cout_) {
    gn1 = GroupNormLayer(ps, name + ".gn1", cin, norm_groups);
    conv1 = Conv2dLayer(ps, name + ".conv1", cin, cout, 3, 1, 1, rng);
    emb = Linear(ps, name + ".emb", time_dim, 2 * cout, rng);
    gn2 = GroupNormLayer(ps, name + ".gn2", cout, norm_groups);
    conv2 = Conv2dLayer(ps, name + ".conv2", cout, cout, 3, 1, 1, rng, InitKind::Zeros);
    if (cin != cout) skip = Conv2dLayer(ps, name + ".skip", cin, cout, 1, 1, 0, rng);
}

Var ResBlock::forward(const Var& x, const Var& temb_frames) const {
    Var h = conv1.forward(silu(gn1.forward(x)));
    Var e = emb.forward(silu(temb_frames));  // [N, 2*cout]
    Var sc = slice_cols(e, 0, cout);
    Var sh = slice_cols(e, cout, cout);
    h = film(gn2.forward(h), sc, sh);
    h = conv2.forward(silu(h));
    Var s = skip ? skip->forward(x) : x;
    return add(s, h);
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.dims()));
        v_.push_back(Tensor::zeros(p.dims()));
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (p.node()->grad.empty()) continue;  // parameter unused this step
        double* th = p.mutable_value().data();
        const double* g = p.node()->grad.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (int64_t j = 0; j < p.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mh = m[j] / bc1;
            double vh = v[j] / bc2;
            th[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    dv::zero_grad(params_);
}

}  // namespace dv
