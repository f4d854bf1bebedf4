#include <doctest.h>

#include <cmath>
#include <functional>

#include "dv/autograd.hpp"
#include "dv/nn.hpp"
#include "dv/random.hpp"

using namespace dv;

namespace {

// central-difference check of d(loss)/d(leaf) for every element of `leaf`
void check_grad(const std::function<Var()>& loss_fn, Var leaf, double h = 1e-6, double tol = 1e-6) {
    zero_grad({leaf});  // earlier backward passes may have touched this leaf
    Var loss = loss_fn();
    REQUIRE(loss.size() == 1);
    backward(loss);
    Tensor analytic = leaf.grad().clone();
    for (int64_t i = 0; i < leaf.size(); ++i) {
        double orig = leaf.value()[i];
        leaf.mutable_value()[i] = orig + h;
        double up = loss_fn().value()[0];
        leaf.mutable_value()[i] = orig - h;
        double dn = loss_fn().value()[0];
        leaf.mutable_value()[i] = orig;
        double numeric = (up - dn) / (2.0 * h);
        double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-4});
        double abs_err = std::fabs(numeric - analytic[i]);
        // 1e-8 floor absorbs central-difference rounding noise
        CHECK_MESSAGE((abs_err < 1e-8 || abs_err / denom < tol),
                      "elem " << i << ": analytic " << analytic[i] << " numeric " << numeric);
    }
    zero_grad({leaf});
}

Tensor randn(RandomStream& rng, Shape dims, double scale = 1.0) {
    Tensor t(std::move(dims));
    rng.fill_normal(t);
    t.scale_(scale);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("autograd");

TEST_CASE("random stream is deterministic and platform-pinned") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    RandomStream c(42), d(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(c.uniform() == d.uniform());
        CHECK(c.normal() == d.normal());
    }
    // mt19937_64 sequence is fixed by the standard
    std::mt19937_64 ref(7);
    RandomStream e(7);
    CHECK(e.next_u64() == ref());
}

TEST_CASE("normal moments") {
    RandomStream rng(3);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sq / n - 1.0) < 0.02);
}

TEST_CASE("elementwise op gradients") {
    RandomStream rng(1);
    Var x = Var::leaf(randn(rng, {3, 4}), true);
    Var y = Var::leaf(randn(rng, {3, 4}), true);

    check_grad([&] { return ops::mean_all(ops::mul(ops::add(x, y), ops::sub(x, y))); }, x);
    check_grad([&] { return ops::mean_all(ops::silu(x)); }, x);
    check_grad([&] { return ops::mean_all(ops::scale(x, 2.5)); }, x);
    check_grad([&] { return ops::mse(x, y); }, x);
    check_grad([&] { return ops::mse(x, y); }, y);
    check_grad([&] { return ops::mean_all(ops::abs_val(x)); }, x);
}

TEST_CASE("shape op gradients") {
    RandomStream rng(2);
    Var x = Var::leaf(randn(rng, {2, 3, 4}), true);
    check_grad([&] { return ops::mean_all(ops::mul(ops::reshape(x, {6, 4}), ops::reshape(x, {6, 4}))); }, x);
    check_grad([&] { return ops::mse(ops::permute(x, {2, 0, 1}), Var::constant(Tensor::full({4, 2, 3}, 0.3))); }, x);
    check_grad([&] { return ops::mean_all(ops::mul(ops::slice_axis0(x, 1, 1), ops::slice_axis0(x, 0, 1))); }, x);
    Var m = Var::leaf(randn(rng, {3, 6}), true);
    check_grad([&] { return ops::mean_all(ops::mul(ops::slice_cols(m, 1, 3), ops::slice_cols(m, 3, 3))); }, m);
    check_grad([&] { return ops::mean_all(ops::mul(ops::repeat_interleave0(m, 3), ops::repeat_interleave0(m, 3))); }, m);
    Var a = Var::leaf(randn(rng, {2, 2, 3, 3}), true);
    Var b = Var::leaf(randn(rng, {2, 1, 3, 3}), true);
    check_grad([&] { return ops::mean_all(ops::mul(ops::concat_channel(a, b), ops::concat_channel(a, b))); }, a);
    check_grad([&] { return ops::mean_all(ops::mul(ops::concat_channel(a, b), ops::concat_channel(a, b))); }, b);
    check_grad([&] { return ops::mean_all(ops::mul(ops::concat_axis0({a, a}), ops::concat_axis0({a, a}))); }, a);
    Var c = Var::leaf(randn(rng, {3, 3}), true);
    check_grad([&] { return ops::mean_all(ops::mul(ops::add_broadcast0(a, c), ops::add_broadcast0(a, c))); }, c);
}

TEST_CASE("linear and bmm gradients") {
    RandomStream rng(3);
    Var x = Var::leaf(randn(rng, {4, 5}), true);
    Var w = Var::leaf(randn(rng, {3, 5}), true);
    Var b = Var::leaf(randn(rng, {3}), true);
    auto f = [&] { return ops::mean_all(ops::mul(ops::linear(x, w, b), ops::linear(x, w, b))); };
    check_grad(f, x);
    check_grad(f, w);
    check_grad(f, b);

    Var p = Var::leaf(randn(rng, {4, 2, 3}), true);
    Var q = Var::leaf(randn(rng, {2, 3, 2}), true);
    auto g = [&] { return ops::mean_all(ops::mul(ops::bmm(p, q, 2), ops::bmm(p, q, 2))); };
    check_grad(g, p);
    check_grad(g, q);
}

TEST_CASE("softmax gradient and values") {
    RandomStream rng(4);
    Var x = Var::leaf(randn(rng, {5, 7}), true);
    Var t = Var::constant(randn(rng, {5, 7}));
    check_grad([&] { return ops::mse(ops::softmax_lastdim(x), t); }, x);
    Var s = ops::softmax_lastdim(x);
    for (int64_t r = 0; r < 5; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < 7; ++c) sum += s.value()[r * 7 + c];
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("conv2d gradients (stride and padding variants)") {
    RandomStream rng(5);
    for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, std::tuple{2, 1, 3}, std::tuple{4, 1, 3}, std::tuple{1, 0, 1}}) {
        Var x = Var::leaf(randn(rng, {2, 3, 8, 8}), true);
        Var w = Var::leaf(randn(rng, {4, 3, k, k}, 0.5), true);
        Var b = Var::leaf(randn(rng, {4}), true);
        auto f = [&] {
            return ops::mean_all(ops::mul(ops::conv2d(x, w, b, stride, pad), ops::conv2d(x, w, b, stride, pad)));
        };
        check_grad(f, x, 1e-6, 2e-6);
        check_grad(f, w, 1e-6, 2e-6);
        check_grad(f, b, 1e-6, 2e-6);
    }
}

TEST_CASE("conv1d_time gradients and identity init") {
    RandomStream rng(6);
    const int64_t B = 2, T = 4;
    Var x = Var::leaf(randn(rng, {B * T, 3, 2, 2}), true);
    Var w = Var::leaf(randn(rng, {3, 3, 3}, 0.5), true);
    Var b = Var::leaf(randn(rng, {3}), true);
    auto f = [&] {
        return ops::mean_all(ops::mul(ops::conv1d_time(x, w, b, B, T), ops::conv1d_time(x, w, b, B, T)));
    };
    check_grad(f, x, 1e-6, 2e-6);
    check_grad(f, w, 1e-6, 2e-6);
    check_grad(f, b, 1e-6, 2e-6);

    // dirac kernel with zero bias is an exact identity for any T
    RandomStream r2(7);
    Tensor dirac = init_tensor({3, 3, 3}, InitKind::Dirac, r2);
    Var wd = Var::constant(dirac);
    Var bz = Var::constant(Tensor::zeros({3}));
    Var y = ops::conv1d_time(x, wd, bz, B, T);
    CHECK(y.value().bitwise_equal(x.value()));
}

TEST_CASE("group_norm gradients") {
    RandomStream rng(8);
    Var x = Var::leaf(randn(rng, {2, 4, 3, 3}), true);
    Var g = Var::leaf(randn(rng, {4}, 0.3), true);
    Var b = Var::leaf(randn(rng, {4}), true);
    for (int groups : {1, 2, 4}) {
        auto f = [&] {
            Var y = ops::group_norm(x, g, b, groups);
            return ops::mean_all(ops::mul(y, y));
        };
        check_grad(f, x, 1e-6, 5e-6);
        check_grad(f, g, 1e-6, 5e-6);
        check_grad(f, b, 1e-6, 5e-6);
    }
}

TEST_CASE("film, upsample, gap, frame broadcast gradients") {
    RandomStream rng(9);
    Var x = Var::leaf(randn(rng, {2, 3, 2, 2}), true);
    Var s = Var::leaf(randn(rng, {2, 3}, 0.3), true);
    Var t = Var::leaf(randn(rng, {2, 3}), true);
    auto f = [&] { return ops::mean_all(ops::mul(ops::film(x, s, t), ops::film(x, s, t))); };
    check_grad(f, x);
    check_grad(f, s);
    check_grad(f, t);

    check_grad([&] { return ops::mean_all(ops::mul(ops::upsample_nearest2x(x), ops::upsample_nearest2x(x))); }, x);
    check_grad([&] { return ops::mean_all(ops::mul(ops::gap2d(x), ops::gap2d(x))); }, x);

    Var zd = Var::leaf(randn(rng, {4, 3, 2, 2}), true);  // B=2, T=2
    Var zs = Var::leaf(randn(rng, {2, 3, 2, 2}), true);
    auto g = [&] {
        Var y = ops::add_frame_broadcast(zd, zs, 2);
        return ops::mean_all(ops::mul(y, y));
    };
    check_grad(g, zd);
    check_grad(g, zs);
}

TEST_CASE("embedding and reductions") {
    RandomStream rng(10);
    Var table = Var::leaf(randn(rng, {6, 4}), true);
    std::vector<int> ids = {1, 3, 1, 5};
    check_grad(
        [&] {
            Var e = ops::embedding_rows(table, ids);
            return ops::mean_all(ops::mul(e, e));
        },
        table);

    Var x = Var::leaf(randn(rng, {5, 3}), true);
    check_grad([&] { return ops::mean_all(ops::mul(ops::sum_axis0(x), ops::sum_axis0(x))); }, x);
    check_grad([&] { return ops::mean_all(ops::mul(ops::mean_axis0(x), ops::mean_axis0(x))); }, x);

    Var logits = Var::leaf(randn(rng, {4, 5}), true);
    std::vector<int> labels = {0, 2, 4, 1};
    check_grad([&] { return ops::cross_entropy(logits, labels); }, logits);
}

TEST_CASE("composite layer gradients") {
    RandomStream rng(11);
    ParamStore ps;
    const int64_t C = 8, B = 2, T = 2;

    SelfAttention2d sattn(ps, "sa", C, 2, 4, rng, InitKind::Normal);
    CrossAttention2d xattn(ps, "xa", C, 6, 2, 4, rng, InitKind::Normal);
    TempAttn tattn(ps, "ta", C, 2, 4, rng);
    // zero-initialized projections block gradient flow to q/k/v; randomize
    for (auto& [name, v] : ps.all())
        if (v.value().max_abs() == 0.0) {
            Var vv = v;
            vv.mutable_value() = randn(rng, v.dims(), 0.2);
        }

    Var x = Var::leaf(randn(rng, {B * T, C, 3, 3}), true);
    Var text0 = Var::leaf(randn(rng, {2, 6}), true);
    Var text1 = Var::leaf(randn(rng, {3, 6}), true);

    check_grad(
        [&] {
            Var y = sattn.forward(x);
            return ops::mean_all(ops::mul(y, y));
        },
        x, 1e-6, 5e-6);

    std::vector<Var> text = {text0, text1};
    check_grad(
        [&] {
            Var y = xattn.forward(x, text, B, T);
            return ops::mean_all(ops::mul(y, y));
        },
        x, 1e-6, 5e-6);
    check_grad(
        [&] {
            Var y = xattn.forward(x, text, B, T);
            return ops::mean_all(ops::mul(y, y));
        },
        text1, 1e-6, 5e-6);

    check_grad(
        [&] {
            Var y = tattn.forward(x, B, T);
            return ops::mean_all(ops::mul(y, y));
        },
        x, 1e-6, 5e-6);

    // parameter gradients through a full ResBlock
    ResBlock res(ps, "rb", C, C, 12, 4, rng);
    for (auto& [name, v] : ps.all())
        if (v.value().max_abs() == 0.0) {
            Var vv = v;
            vv.mutable_value() = randn(rng, v.dims(), 0.2);
        }
    Var temb = Var::leaf(randn(rng, {B * T, 12}), true);
    auto loss_fn = [&] {
        Var y = res.forward(x, temb);
        return ops::mean_all(ops::mul(y, y));
    };
    check_grad(loss_fn, x, 1e-6, 5e-6);
    check_grad(loss_fn, temb, 1e-6, 5e-6);
    check_grad(loss_fn, res.conv1.w, 1e-6, 5e-6);
    check_grad(loss_fn, res.conv2.w, 1e-6, 5e-6);
    check_grad(loss_fn, res.emb.w, 1e-6, 5e-6);
    check_grad(loss_fn, res.gn1.gamma, 1e-6, 5e-6);
}

TEST_CASE("no-grad mode builds no tape") {
    RandomStream rng(12);
    Var x = Var::leaf(randn(rng, {2, 2}), true);
    NoGradGuard ng;
    Var y = ops::mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("adam updates only given params and is deterministic") {
    auto run = [] {
        Var w = Var::leaf(Tensor::full({4}, 1.0), true);
        Adam opt({w}, AdamConfig{.lr = 0.1});
        for (int i = 0; i < 5; ++i) {
            Var loss = ops::mse(w, Var::constant(Tensor::zeros({4})));
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
        return w.value().clone();
    };
    Tensor a = run(), b = run();
    CHECK(a.bitwise_equal(b));
    CHECK(a[0] < 1.0);
}

TEST_SUITE_END();
