#include <doctest.h>

#include <cmath>
#include <set>

#include "dv/unet.hpp"
#include "helpers.hpp"

using namespace dv;
using namespace dvtest;

TEST_SUITE_BEGIN("text_backbone");

TEST_CASE("text_encode: null embedding, shapes, determinism, OOV") {
    ParamStore ps;
    RandomStream rng(1);
    TextEncoder enc(ps, "text", 64, rng);

    TextEmbedding null_emb = enc.encode(std::nullopt);
    CHECK(null_emb.is_null);
    CHECK(null_emb.emb.dims() == Shape{1, 64});
    CHECK(null_emb.emb.value().bitwise_equal(ps.get("text.null").value()));

    TextEmbedding e = enc.encode(std::vector<std::string>{"red", "circle", "moves", "right"});
    CHECK_FALSE(e.is_null);
    CHECK(e.emb.dims() == Shape{4, 64});

    TextEmbedding e2 = enc.encode(std::vector<std::string>{"red", "circle", "moves", "right"});
    CHECK(e.emb.value().bitwise_equal(e2.emb.value()));

    try {
        enc.encode(std::vector<std::string>{"red", "pentagon"});
        FAIL("expected invalid_argument");
    } catch (const invalid_argument& err) {
        CHECK(std::string(err.what()).find("pentagon") != std::string::npos);
    }
}

TEST_CASE("time embedding: sinusoid range, distinctness, injectivity") {
    Tensor base = sinusoidal_embedding(123.0, 64);
    for (int64_t i = 0; i < 64; ++i) {
        CHECK(base[i] <= 1.0);
        CHECK(base[i] >= -1.0);
    }

    DreamVideoModel model(tiny_model_config(3));
    Tensor e0 = time_embed(model.unet(), 0);
    Tensor e1 = time_embed(model.unet(), 1);
    CHECK_FALSE(e0.bitwise_equal(e1));

    // pairwise distinctness of the sinusoidal base over t in [0, 1000]
    std::set<std::vector<double>> seen;
    for (int t = 0; t <= 1000; ++t) {
        Tensor e = sinusoidal_embedding(static_cast<double>(t), 64);
        std::vector<double> v(e.data(), e.data() + e.size());
        CHECK(seen.insert(std::move(v)).second);
    }
}

TEST_CASE("unet_forward: shape preservation and zero-control identity") {
    ModelConfig mc = tiny_model_config(7);
    DreamVideoModel model(mc);
    RandomStream rng(2);
    const int64_t B = 1, T = 2, c = 12, h = 4, w = 4;
    Tensor z = random_latent_batch(rng, B, T, c, h, w);
    CondPair cond{std::vector<std::string>{"red", "circle"}, random_image(rng, 8, 8)};

    Tensor eps = model.predict_eps(z, {5}, {cond});
    CHECK(eps.dims() == z.dims());
    CHECK(eps.all_finite());

    // all-zero control signals equal no controls at all
    Var z_flat = Var::constant(z.reshaped({B * T, c, h, w}));
    NoGradGuard ng;
    Var temb = model.unet().time_mlp.forward({5});
    TextBatch text;
    text.emb.push_back(model.text_encoder().encode(cond.text).emb);
    std::vector<Var> zeros;
    for (int i = 0; i < 2; ++i) zeros.push_back(Var::constant(Tensor::zeros({B * T, mc.unet.level_channels(i), h / (1 << i), w / (1 << i)})));
    zeros.push_back(Var::constant(Tensor::zeros({B * T, mc.unet.level_channels(1), h / 2, w / 2})));
    Var with_zero = model.unet().forward(z_flat, temb, text, &zeros, B, T);
    Var without = model.unet().forward(z_flat, temb, text, nullptr, B, T);
    CHECK(with_zero.value().bitwise_equal(without.value()));
}

TEST_CASE("unet_forward errors: wrong control count, step out of range") {
    ModelConfig mc = tiny_model_config(8);
    DreamVideoModel model(mc);
    RandomStream rng(3);
    Tensor z = random_latent_batch(rng, 1, 2, 12, 4, 4);
    CondPair cond{std::nullopt, ConditionImage::white(8, 8)};
    CHECK_THROWS_AS(model.predict_eps(z, {51}, {cond}), invalid_argument);
    CHECK_THROWS_AS(model.predict_eps(z, {-1}, {cond}), invalid_argument);

    NoGradGuard ng;
    Var z_flat = Var::constant(z.reshaped({2, 12, 4, 4}));
    Var temb = model.unet().time_mlp.forward({5});
    TextBatch text;
    text.emb.push_back(model.text_encoder().encode(cond.text).emb);
    std::vector<Var> bad = {Var::constant(Tensor::zeros({2, 8, 4, 4}))};
    CHECK_THROWS_AS(model.unet().forward(z_flat, temb, text, &bad, 1, 2), invalid_argument);
}

TEST_CASE("temporal layers are exact identities at init (T=1 and T>1)") {
    ModelConfig mc = tiny_model_config(9);
    DreamVideoModel model(mc);
    RandomStream rng(4);
    for (int64_t T : {1, 3}) {
        Tensor z = random_latent_batch(rng, 1, T, 12, 4, 4);
        CondPair cond{std::vector<std::string>{"blue", "square"}, random_image(rng, 8, 8)};
        Tensor with_temporal = model.backbone_eps(z, {7}, {cond});
        model.unet().temporal_enabled = false;  // the purely spatial clone
        Tensor spatial_only = model.backbone_eps(z, {7}, {cond});
        model.unet().temporal_enabled = true;
        CHECK(with_temporal.max_abs_diff(spatial_only) < 1e-12);
    }
}

TEST_CASE("spatial sublayers are frame-equivariant with temporal disabled") {
    ModelConfig mc = tiny_model_config(10);
    DreamVideoModel model(mc);
    randomize_params(model.params(), 99);  // make every layer active
    model.unet().temporal_enabled = false;
    RandomStream rng(5);
    const int64_t T = 4, c = 12, h = 4, w = 4;
    Tensor z = random_latent_batch(rng, 1, T, c, h, w);
    CondPair cond{std::vector<std::string>{"green", "triangle"}, random_image(rng, 8, 8)};

    Tensor out = model.backbone_eps(z, {3}, {cond});

    // permute frames, run, inverse-permute: must match
    std::vector<int64_t> perm = {2, 0, 3, 1};
    int64_t fsz = c * h * w;
    Tensor zp({1, T, c, h, w});
    for (int64_t t = 0; t < T; ++t)
        std::copy(z.data() + perm[static_cast<size_t>(t)] * fsz, z.data() + (perm[static_cast<size_t>(t)] + 1) * fsz,
                  zp.data() + t * fsz);
    Tensor outp = model.backbone_eps(zp, {3}, {cond});
    Tensor recovered({1, T, c, h, w});
    for (int64_t t = 0; t < T; ++t)
        std::copy(outp.data() + t * fsz, outp.data() + (t + 1) * fsz,
                  recovered.data() + perm[static_cast<size_t>(t)] * fsz);
    CHECK(recovered.max_abs_diff(out) < 1e-10);
    model.unet().temporal_enabled = true;
}

TEST_CASE("analytic gradients match central differences on the tiny model") {
    ModelConfig mc = tiny_model_config(11);
    DreamVideoModel model(mc);
    randomize_params(model.params(), 1234);

    RandomStream rng(6);
    const int64_t B = 1, T = 2, c = 12, h = 4, w = 4;
    Tensor z = random_latent_batch(rng, B, T, c, h, w);
    Tensor target = random_latent_batch(rng, B, T, c, h, w);
    CondPair cond{std::vector<std::string>{"red", "square", "grows"}, random_image(rng, 8, 8)};

    auto loss_value = [&] {
        NoGradGuard ng;
        Var z_flat = Var::constant(z.reshaped({B * T, c, h, w}));
        Var eps = model.predict_eps_var(z_flat, {9}, {cond}, B, T);
        Var loss = ops::mse(eps, Var::constant(target.reshaped({B * T, c, h, w})));
        return loss.value()[0];
    };

    zero_grad(model.params().vars());
    Var z_flat = Var::constant(z.reshaped({B * T, c, h, w}));
    Var eps = model.predict_eps_var(z_flat, {9}, {cond}, B, T);
    Var loss = ops::mse(eps, Var::constant(target.reshaped({B * T, c, h, w})));
    backward(loss);

    // sample parameters uniformly across the whole index space
    std::vector<std::pair<std::string, Var>> all(model.params().all().begin(), model.params().all().end());
    RandomStream pick(77);
    int checked = 0, bad = 0;
    const double fd_h = 1e-5;
    while (checked < 120) {
        auto& [name, var] = all[static_cast<size_t>(pick.uniform_int(static_cast<int64_t>(all.size())))];
        int64_t idx = pick.uniform_int(var.size());
        double analytic = var.node()->grad.empty() ? 0.0 : var.node()->grad[idx];
        Var v = var;
        double orig = v.value()[idx];
        v.mutable_value()[idx] = orig + fd_h;
        double up = loss_value();
        v.mutable_value()[idx] = orig - fd_h;
        double dn = loss_value();
        v.mutable_value()[idx] = orig;
        double numeric = (up - dn) / (2.0 * fd_h);
        double rel = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        if (rel > 1e-3 && std::fabs(analytic - numeric) > 1e-9) {
            ++bad;
            MESSAGE("grad mismatch at " << name << "[" << idx << "]: analytic " << analytic << " numeric " << numeric);
        }
        ++checked;
    }
    CHECK(bad == 0);
}

TEST_SUITE_END();
