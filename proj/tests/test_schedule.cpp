#include <doctest.h>

#include <cmath>

#include "dv/random.hpp"
#include "dv/schedule.hpp"

using namespace dv;

namespace {

// independent recomputation of the linear-beta value
double beta_at(int t, int num_steps) {
    const double lo = 1e-4, hi = 2e-2;
    if (num_steps == 1) return lo;
    return lo + (hi - lo) * static_cast<double>(t - 1) / static_cast<double>(num_steps - 1);
}

LatentVideo make_latent(RandomStream& rng, Shape dims) {
    Tensor t(std::move(dims));
    rng.fill_normal(t);
    return {std::move(t)};
}

}  // namespace

TEST_SUITE_BEGIN("schedule");

TEST_CASE("alphas[0] is exactly 1 (empty product)") {
    for (auto kind : {ScheduleKind::LinearBeta, ScheduleKind::Cosine}) {
        NoiseSchedule s = make_schedule(1000, kind);
        CHECK(s.alphas[0] == 1.0);
        CHECK(s.sigmas[0] == 0.0);
    }
}

TEST_CASE("variance-preserving identity and monotonicity") {
    for (auto kind : {ScheduleKind::LinearBeta, ScheduleKind::Cosine}) {
        NoiseSchedule s = make_schedule(1000, kind);
        REQUIRE(s.alphas.size() == 1001);
        for (int t = 0; t <= 1000; ++t) {
            double a = s.alphas[static_cast<size_t>(t)], sg = s.sigmas[static_cast<size_t>(t)];
            CHECK(std::fabs(a * a + sg * sg - 1.0) < 1e-12);
            CHECK(a > 0.0);
            CHECK(a <= 1.0);
            CHECK(sg >= 0.0);
            CHECK(sg < 1.0);
            if (t > 0) {
                CHECK(a < s.alphas[static_cast<size_t>(t - 1)]);
                CHECK(sg > s.sigmas[static_cast<size_t>(t - 1)]);
            }
        }
        CHECK(s.alphas[0] >= 0.999);
    }
}

TEST_CASE("alphas[10] matches the independent product oracle") {
    NoiseSchedule s = make_schedule(10, ScheduleKind::LinearBeta);
    // brute-force product of sqrt(1 - beta) over the 10 beta values
    double prod = 1.0;
    for (int t = 1; t <= 10; ++t) prod *= std::sqrt(1.0 - beta_at(t, 10));
    CHECK(s.alphas[10] == doctest::Approx(prod).epsilon(1e-14));
}

TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(make_schedule(0, ScheduleKind::LinearBeta), invalid_argument);
    NoiseSchedule s = make_schedule(10, ScheduleKind::LinearBeta);
    RandomStream rng(0);
    LatentVideo z = make_latent(rng, {1, 1, 2, 2});
    LatentVideo eps = make_latent(rng, {1, 1, 2, 3});
    CHECK_THROWS_AS(diffuse(z, 5, eps, s), invalid_argument);
    LatentVideo eps2 = make_latent(rng, {1, 1, 2, 2});
    CHECK_THROWS_AS(diffuse(z, 11, eps2, s), invalid_argument);
    CHECK_THROWS_AS(ddim_step(z, eps2, 3, 3, s), invalid_argument);
    CHECK_THROWS_AS(ddim_step(z, eps2, 3, 5, s), invalid_argument);
}

TEST_CASE("diffuse: zero noise, t=0 identity, constant oracle") {
    NoiseSchedule s = make_schedule(10, ScheduleKind::LinearBeta);
    RandomStream rng(1);
    LatentVideo z = make_latent(rng, {2, 3, 4, 4});
    LatentVideo zero{Tensor::zeros(z.data.dims())};
    LatentVideo out = diffuse(z, 7, zero, s);
    for (int64_t i = 0; i < z.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(s.alphas[7] * z.data[i]).epsilon(1e-15));

    LatentVideo eps = make_latent(rng, {2, 3, 4, 4});
    LatentVideo at0 = diffuse(z, 0, eps, s);
    CHECK(at0.data.max_abs_diff(z.data) == 0.0);  // alpha_0 = 1, sigma_0 = 0 exactly

    // all-ones latent and noise at t=5: every entry equals alpha_5 + sigma_5
    LatentVideo ones{Tensor::full({1, 1, 2, 2}, 1.0)};
    LatentVideo onesn{Tensor::full({1, 1, 2, 2}, 1.0)};
    LatentVideo c = diffuse(ones, 5, onesn, s);
    double beta_prod = 1.0;
    for (int t = 1; t <= 5; ++t) beta_prod *= 1.0 - beta_at(t, 10);
    double expect = std::sqrt(beta_prod) + std::sqrt(1.0 - beta_prod);
    for (int64_t i = 0; i < 4; ++i) CHECK(c.data[i] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("ddim inversion recovers the clean latent from exact noise") {
    NoiseSchedule s = make_schedule(1000, ScheduleKind::LinearBeta);
    RandomStream rng(2);
    LatentVideo z = make_latent(rng, {2, 4, 3, 3});
    for (int t : {1, 10, 400, 999, 1000}) {
        LatentVideo eps = make_latent(rng, {2, 4, 3, 3});
        LatentVideo zt = diffuse(z, t, eps, s);
        LatentVideo x0 = predict_x0(zt, eps, t, s);
        CHECK(x0.data.max_abs_diff(z.data) < 1e-5);
        // a full step to t_prev = 0 with the exact noise lands on z
        LatentVideo stepped = ddim_step(zt, eps, t, 0, s);
        CHECK(stepped.data.max_abs_diff(z.data) < 1e-5);
        // and to an intermediate step equals diffuse(z, t_prev, eps)
        int t_prev = t / 2;
        if (t_prev > 0) {
            LatentVideo mid = ddim_step(zt, eps, t, t_prev, s);
            LatentVideo expect = diffuse(z, t_prev, eps, s);
            CHECK(mid.data.max_abs_diff(expect.data) < 1e-8);
        }
    }
}

TEST_CASE("stochastic ddim step matches a scalar recomputation") {
    NoiseSchedule s = make_schedule(10, ScheduleKind::LinearBeta);
    LatentVideo z{Tensor::full({1, 1, 1, 1}, 0.7)};
    LatentVideo eps{Tensor::full({1, 1, 1, 1}, -0.3)};
    LatentVideo noise{Tensor::full({1, 1, 1, 1}, 1.25)};
    int t = 8, t_prev = 4;
    double eta = 1.0;
    LatentVideo out = ddim_step(z, eps, t, t_prev, s, eta, &noise);

    double a_t = s.alphas[8], s_t = s.sigmas[8], a_p = s.alphas[4], s_p = s.sigmas[4];
    double x0 = (0.7 - s_t * (-0.3)) / a_t;
    double tau = eta * (s_p / s_t) * std::sqrt(1.0 - (a_t * a_t) / (a_p * a_p));
    double expect = a_p * x0 + std::sqrt(std::max(s_p * s_p - tau * tau, 0.0)) * (-0.3) + tau * 1.25;
    CHECK(out.data[0] == doctest::Approx(expect).epsilon(1e-14));
    // eta=0 must not require noise
    CHECK_NOTHROW(ddim_step(z, eps, t, t_prev, s, 0.0, nullptr));
    CHECK_THROWS_AS(ddim_step(z, eps, t, t_prev, s, 1.0, nullptr), invalid_argument);
}

TEST_CASE("variance preservation over 1e5 samples at every t") {
    NoiseSchedule s = make_schedule(1000, ScheduleKind::LinearBeta);
    RandomStream rng(3);
    const int64_t n = 100000;
    Tensor z({n}), eps({n});
    rng.fill_normal(z);
    rng.fill_normal(eps);
    for (int t : {0, 1, 100, 500, 900, 1000}) {
        double a = s.alphas[static_cast<size_t>(t)], sg = s.sigmas[static_cast<size_t>(t)];
        double sq = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double v = a * z[i] + sg * eps[i];
            sq += v * v;
        }
        double var = sq / static_cast<double>(n);
        CHECK(std::fabs(var - 1.0) < 0.05);
    }
}

TEST_CASE("sampling timesteps descend from num_steps to 0") {
    NoiseSchedule s = make_schedule(1000, ScheduleKind::LinearBeta);
    auto ts = sampling_timesteps(s, 50);
    CHECK(ts.front() == 1000);
    CHECK(ts.back() == 0);
    for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK(ts.size() == 51);
    CHECK_THROWS_AS(sampling_timesteps(s, 1001), invalid_argument);
}

TEST_SUITE_END();
