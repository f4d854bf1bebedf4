#pragma once

#include <vector>

#include "dv/tensor.hpp"

namespace dv {

// Latent-space video, shape [T, c, h, w].
struct LatentVideo {
    Tensor data;
    int64_t frames() const { return data.dim(0); }
    int64_t channels() const { return data.dim(1); }
    int64_t height() const { return data.dim(2); }
    int64_t width() const { return data.dim(3); }
};

enum class ScheduleKind { LinearBeta, Cosine };

// Variance-preserving schedule: alpha_t^2 + sigma_t^2 = 1, t = 0 is clean
// data, t = num_steps is maximal noise. Arrays have num_steps + 1 entries.
struct NoiseSchedule {
    int num_steps = 0;
    std::vector<double> alphas;
    std::vector<double> sigmas;
};

NoiseSchedule make_schedule(int num_steps, ScheduleKind kind);

// z_t = alpha_t * z + sigma_t * eps
LatentVideo diffuse(const LatentVideo& z, int t, const LatentVideo& eps, const NoiseSchedule& sched);

// Deterministic (eta = 0) or stochastic reverse step from t to t_prev < t.
LatentVideo ddim_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t, int t_prev,
                      const NoiseSchedule& sched, double eta = 0.0, const LatentVideo* noise = nullptr);

// x0_hat = (z_t - sigma_t * eps_hat) / alpha_t
LatentVideo predict_x0(const LatentVideo& z_t, const LatentVideo& eps_hat, int t, const NoiseSchedule& sched);

// Descending timestep sequence for sampling: num_points+1 values from
// num_steps down to 0, evenly spaced with rounding.
std::vector<int> sampling_timesteps(const NoiseSchedule& sched, int num_points);

}  // namespace dv
