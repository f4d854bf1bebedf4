#include <doctest.h>

#include <cmath>

#include "helpers.hpp"

using namespace dv;
using namespace dvtest;

TEST_SUITE_BEGIN("retention");

TEST_CASE("condition image null convention") {
    ConditionImage white = ConditionImage::white(8, 8);
    CHECK(white.is_null);
    CHECK_NOTHROW(validate_condition_image(white));
    ConditionImage bad = white;
    bad.data[3] = 0.5;
    CHECK_THROWS_AS(validate_condition_image(bad), invalid_argument);
}

TEST_CASE("embed_image: leading axis 1 per video, determinism, linearity") {
    ModelConfig mc = tiny_model_config(21);
    DreamVideoModel model(mc);
    RandomStream rng(1);
    ConditionImage img = random_image(rng, 8, 8);

    NoGradGuard ng;
    Tensor batch({1, 3, 8, 8});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 64; ++i) batch[c * 64 + i] = img.data[i * 3 + c];
    Var z_s = model.retention().embed_image(Var::constant(batch.clone()));
    CHECK(z_s.dims() == Shape{1, 8, 4, 4});  // [1, c0, h0, w0] regardless of video length

    Var z_s2 = model.retention().embed_image(Var::constant(batch.clone()));
    CHECK(z_s.value().bitwise_equal(z_s2.value()));

    // zero conv_s weights -> zero image latent, for any image
    Var w = model.params().get("retention.conv_s.w");
    Tensor saved = w.value().clone();
    w.mutable_value().fill(0.0);
    Var z_s3 = model.retention().embed_image(Var::constant(batch.clone()));
    CHECK(z_s3.value().max_abs() == 0.0);
    w.mutable_value() = saved;

    CHECK_THROWS_AS(model.retention().embed_image(Var::constant(Tensor::zeros({1, 4, 8, 8}))), invalid_argument);
}

TEST_CASE("fuse broadcasts the image latent across frames") {
    RandomStream rng(2);
    Tensor zd({4, 3, 2, 2});  // B=2, T=2
    rng.fill_normal(zd);
    Tensor zs({2, 3, 2, 2});
    rng.fill_normal(zs);
    NoGradGuard ng;
    Var fused = RetentionBranch::fuse(Var::constant(zd.clone()), Var::constant(zs.clone()), 2);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t t = 0; t < 2; ++t)
            for (int64_t i = 0; i < 12; ++i)
                CHECK(fused.value()[(b * 2 + t) * 12 + i] == zd[(b * 2 + t) * 12 + i] + zs[b * 12 + i]);

    // identities
    Var zd_only = RetentionBranch::fuse(Var::constant(zd.clone()), Var::constant(Tensor::zeros({2, 3, 2, 2})), 2);
    CHECK(zd_only.value().bitwise_equal(zd));
    Var zs_only = RetentionBranch::fuse(Var::constant(Tensor::zeros({4, 3, 2, 2})), Var::constant(zs.clone()), 2);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t t = 0; t < 2; ++t)
            for (int64_t i = 0; i < 12; ++i) CHECK(zs_only.value()[(b * 2 + t) * 12 + i] == zs[b * 12 + i]);

    // scalar case: ones(2x1x1x1) + 3*ones(1x1x1x1) -> all 4.0
    Var four = RetentionBranch::fuse(Var::constant(Tensor::full({2, 1, 1, 1}, 1.0)),
                                     Var::constant(Tensor::full({1, 1, 1, 1}, 3.0)), 2);
    CHECK(four.value()[0] == 4.0);
    CHECK(four.value()[1] == 4.0);

    CHECK_THROWS_AS(RetentionBranch::fuse(Var::constant(Tensor::zeros({4, 3, 2, 2})),
                                          Var::constant(Tensor::zeros({2, 3, 2, 3})), 2),
                    invalid_argument);
}

TEST_CASE("retention_forward: zero controls at init, list length L+1") {
    ModelConfig mc = tiny_model_config(22);
    DreamVideoModel model(mc);
    RandomStream rng(3);
    const int64_t B = 1, T = 2;
    Tensor z = random_latent_batch(rng, B, T, 12, 4, 4);
    CondPair cond{std::vector<std::string>{"red", "circle"}, random_image(rng, 8, 8)};

    NoGradGuard ng;
    Var z_flat = Var::constant(z.reshaped({B * T, 12, 4, 4}));
    Var temb = model.unet().time_mlp.forward({5});
    TextBatch text;
    text.emb.push_back(model.text_encoder().encode(cond.text).emb);
    Tensor img({1, 3, 8, 8});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 64; ++i) img[c * 64 + i] = cond.image.data[i * 3 + c];
    auto controls = model.retention().forward(z_flat, temb, text, Var::constant(std::move(img)), B, T, true);
    CHECK(controls.size() == 3);  // L + 1 with L = 2
    for (const auto& c : controls) CHECK(c.value().max_abs() == 0.0);
}

TEST_CASE("zero-init transparency of the full model") {
    ModelConfig mc = tiny_model_config(23);
    DreamVideoModel model(mc);
    RandomStream rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor z = random_latent_batch(rng, 1, 2, 12, 4, 4);
        CondPair cond{std::vector<std::string>{"blue", "square", "shrinks"}, random_image(rng, 8, 8)};
        Tensor full = model.predict_eps(z, {trial * 7 % 50}, {cond});
        Tensor backbone = model.backbone_eps(z, {trial * 7 % 50}, {cond});
        CHECK(full.max_abs_diff(backbone) <= 1e-6);
    }
}

TEST_CASE("clone_from_backbone: copy semantics") {
    ModelConfig mc = tiny_model_config(24);
    DreamVideoModel model(mc);
    auto& ps = model.params();

    // cloned at construction: mid-block weights equal the backbone's bitwise
    CHECK(ps.get("retention.mid.res.conv1.w").value().bitwise_equal(ps.get("unet.mid.res.conv1.w").value()));
    CHECK(ps.get("retention.down1.tattn.q.w").value().bitwise_equal(ps.get("unet.down1.tattn.q.w").value()));
    CHECK(ps.get("retention.downsample1.w").value().bitwise_equal(ps.get("unet.downsample1.w").value()));

    // zero-convolutions stay zero after cloning
    CHECK(ps.get("retention.zc1.w").value().max_abs() == 0.0);
    CHECK(ps.get("retention.zc_mid.w").value().max_abs() == 0.0);
    CHECK(ps.get("retention.zc1.b").value().max_abs() == 0.0);

    // deep copy: mutating the retention copy leaves the backbone unchanged
    Tensor before = ps.get("unet.mid.res.conv1.w").value().clone();
    Var rv = ps.get("retention.mid.res.conv1.w");
    rv.mutable_value().fill(7.0);
    CHECK(ps.get("unet.mid.res.conv1.w").value().bitwise_equal(before));
    // re-cloning restores equality
    model.clone_retention_from_backbone();
    CHECK(ps.get("retention.mid.res.conv1.w").value().bitwise_equal(before));
}

TEST_CASE("broadcast correctness: equal per-frame inputs give equal controls") {
    ModelConfig mc = tiny_model_config(25);
    DreamVideoModel model(mc);
    randomize_params(model.params(), 55, 0.05);
    RandomStream rng(5);
    // one frame replicated T times: every control row over t must be equal
    Tensor frame({1, 1, 12, 4, 4});
    rng.fill_normal(frame);
    const int64_t T = 3;
    Tensor z({1, T, 12, 4, 4});
    for (int64_t t = 0; t < T; ++t)
        std::copy(frame.data(), frame.data() + 12 * 16, z.data() + t * 12 * 16);
    CondPair cond{std::nullopt, random_image(rng, 8, 8)};

    NoGradGuard ng;
    Var z_flat = Var::constant(z.reshaped({T, 12, 4, 4}));
    Var temb = model.unet().time_mlp.forward({5});
    TextBatch text;
    text.emb.push_back(model.text_encoder().encode(cond.text).emb);
    Tensor img({1, 3, 8, 8});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 64; ++i) img[c * 64 + i] = cond.image.data[i * 3 + c];
    // temporal mixing off isolates the per-frame pathway
    auto controls = model.retention().forward(z_flat, temb, text, Var::constant(std::move(img)), 1, T, false);
    for (const auto& ctl : controls) {
        int64_t fsz = ctl.value().size() / T;
        for (int64_t t = 1; t < T; ++t)
            for (int64_t i = 0; i < fsz; ++i) CHECK(ctl.value()[t * fsz + i] == doctest::Approx(ctl.value()[i]).epsilon(1e-12));
    }
}

TEST_CASE("a training step wakes the zero-convolutions") {
    ModelConfig mc = tiny_model_config(26);
    DreamVideoModel model(mc);
    RandomStream rng(6);
    Tensor z = random_latent_batch(rng, 1, 2, 12, 4, 4);
    Tensor target = random_latent_batch(rng, 1, 2, 12, 4, 4);
    CondPair cond{std::vector<std::string>{"green", "circle", "moves", "left"}, random_image(rng, 8, 8)};

    auto named = trainable_parameters(model);
    std::vector<Var> params;
    for (auto& [n, v] : named) params.push_back(v);
    Adam opt(params, AdamConfig{.lr = 1e-2});

    Var z_flat = Var::constant(z.reshaped({2, 12, 4, 4}));
    Var eps = model.predict_eps_var(z_flat, {9}, {cond}, 1, 2);
    Var loss = ops::mse(eps, Var::constant(target.reshaped({2, 12, 4, 4})));
    CHECK(loss.value()[0] > 0.0);
    opt.zero_grad();
    backward(loss);
    opt.step();

    double total = 0.0;
    for (int i = 1; i <= 2; ++i) total += model.params().get("retention.zc" + std::to_string(i) + ".w").value().max_abs();
    total += model.params().get("retention.zc_mid.w").value().max_abs();
    CHECK(total > 0.0);

    // control signals are now nonzero somewhere
    Tensor full = model.predict_eps(z, {9}, {cond});
    Tensor backbone = model.backbone_eps(z, {9}, {cond});
    CHECK(full.max_abs_diff(backbone) > 0.0);
}

TEST_SUITE_END();
