#include "dv/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace dv {

NoiseSchedule make_schedule(int num_steps, ScheduleKind kind) {
    if (num_steps < 1) throw invalid_argument("make_schedule: num_steps must be >= 1");
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.alphas.resize(static_cast<size_t>(num_steps) + 1);
    s.sigmas.resize(static_cast<size_t>(num_steps) + 1);
    s.alphas[0] = 1.0;
    s.sigmas[0] = 0.0;

    if (kind == ScheduleKind::LinearBeta) {
        const double beta_lo = 1e-4, beta_hi = 2e-2;
        double cum = 1.0;
        for (int t = 1; t <= num_steps; ++t) {
            double beta = num_steps == 1
                              ? beta_lo
                              : beta_lo + (beta_hi - beta_lo) * static_cast<double>(t - 1) /
                                    static_cast<double>(num_steps - 1);
            cum *= 1.0 - beta;
            s.alphas[static_cast<size_t>(t)] = std::sqrt(cum);
            s.sigmas[static_cast<size_t>(t)] = std::sqrt(1.0 - cum);
        }
    } else {
        // squared-cosine cumulative-alpha profile, offset 0.008, beta clipped
        const double off = 0.008;
        auto f = [&](double t) {
            double v = std::cos((t / num_steps + off) / (1.0 + off) * M_PI / 2.0);
            return v * v;
        };
        double f0 = f(0.0);
        double cum = 1.0;
        double prev_bar = 1.0;
        for (int t = 1; t <= num_steps; ++t) {
            double bar = f(static_cast<double>(t)) / f0;
            double beta = std::min(1.0 - bar / prev_bar, 0.999);
            prev_bar = bar;
            cum *= 1.0 - beta;
            s.alphas[static_cast<size_t>(t)] = std::sqrt(cum);
            s.sigmas[static_cast<size_t>(t)] = std::sqrt(1.0 - cum);
        }
    }
    return s;
}

namespace {
void check_step(const NoiseSchedule& sched, int t, const char* who) {
    if (t < 0 || t > sched.num_steps)
        throw invalid_argument(std::string(who) + ": step " + std::to_string(t) + " outside [0, " +
                               std::to_string(sched.num_steps) + "]");
}
}  // namespace

LatentVideo diffuse(const LatentVideo& z, int t, const LatentVideo& eps, const NoiseSchedule& sched) {
    if (!z.data.same_shape(eps.data))
        throw invalid_argument("diffuse: z shape " + shape_str(z.data.dims()) + " != eps shape " +
                               shape_str(eps.data.dims()));
    check_step(sched, t, "diffuse");
    double a = sched.alphas[static_cast<size_t>(t)];
    double sg = sched.sigmas[static_cast<size_t>(t)];
    Tensor out(z.data.dims());
    const double* pz = z.data.data();
    const double* pe = eps.data.data();
    double* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = a * pz[i] + sg * pe[i];
    return {std::move(out)};
}

LatentVideo predict_x0(const LatentVideo& z_t, const LatentVideo& eps_hat, int t, const NoiseSchedule& sched) {
    if (!z_t.data.same_shape(eps_hat.data)) throw invalid_argument("predict_x0: shape mismatch");
    check_step(sched, t, "predict_x0");
    double a = sched.alphas[static_cast<size_t>(t)];
    double sg = sched.sigmas[static_cast<size_t>(t)];
    Tensor out(z_t.data.dims());
    const double* pz = z_t.data.data();
    const double* pe = eps_hat.data.data();
    double* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = (pz[i] - sg * pe[i]) / a;
    return {std::move(out)};
}

LatentVideo ddim_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t, int t_prev,
                      const NoiseSchedule& sched, double eta, const LatentVideo* noise) {
    if (!z_t.data.same_shape(eps_hat.data)) throw invalid_argument("ddim_step: shape mismatch");
    check_step(sched, t, "ddim_step");
    check_step(sched, t_prev, "ddim_step");
    if (t_prev >= t)
        throw invalid_argument("ddim_step: t_prev " + std::to_string(t_prev) + " must be < t " + std::to_string(t));
    double a_t = sched.alphas[static_cast<size_t>(t)];
    double s_t = sched.sigmas[static_cast<size_t>(t)];
    double a_p = sched.alphas[static_cast<size_t>(t_prev)];
    double s_p = sched.sigmas[static_cast<size_t>(t_prev)];
    double tau = 0.0;
    if (eta > 0.0 && s_t > 0.0) {
        double ratio2 = 1.0 - (a_t * a_t) / (a_p * a_p);
        tau = eta * (s_p / s_t) * std::sqrt(std::max(ratio2, 0.0));
    }
    double dir = std::sqrt(std::max(s_p * s_p - tau * tau, 0.0));
    if (tau > 0.0 && noise == nullptr) throw invalid_argument("ddim_step: stochastic step requires noise");
    Tensor out(z_t.data.dims());
    const double* pz = z_t.data.data();
    const double* pe = eps_hat.data.data();
    const double* pn = noise ? noise->data.data() : nullptr;
    double* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        double x0 = (pz[i] - s_t * pe[i]) / a_t;
        double v = a_p * x0 + dir * pe[i];
        if (tau > 0.0) v += tau * pn[i];
        po[i] = v;
    }
    return {std::move(out)};
}

std::vector<int> sampling_timesteps(const NoiseSchedule& sched, int num_points) {
    if (num_points < 1) throw invalid_argument("sampling_timesteps: need at least one step");
    if (num_points > sched.num_steps) throw invalid_argument("sampling_timesteps: steps exceed schedule length");
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(num_points) + 1);
    for (int k = num_points; k >= 0; --k) {
        int t = static_cast<int>(std::llround(static_cast<double>(sched.num_steps) * k / num_points));
        if (ts.empty() || t != ts.back()) ts.push_back(t);
    }
    return ts;
}

}  // namespace dv
