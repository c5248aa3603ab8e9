#pragma once

#include <string>
#include <vector>

#include "recat/grid.hpp"

// Timesteps are 0-based throughout: index t in [0, T) corresponds to the
// conventional 1-based step t + 1.
namespace recat {

enum class ScheduleKind { linear, scaled_linear };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind k);

struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::scaled_linear;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    int steps() const noexcept { return static_cast<int>(beta.size()); }
    /// alpha_bar at t, with alpha_bar(-1) = 1 (the clean end of the chain).
    double alpha_bar_at(int t) const;
};

NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_start, double beta_end);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps,
                           const NoiseSchedule& s);

/// Inverse of forward_diffuse given a noise estimate.
LatentGrid predict_z0(const LatentGrid& zt, const LatentGrid& eps_hat, int t,
                      const NoiseSchedule& s);

/// Coefficients of one ancestral step between alpha_bar levels.
struct DdpmCoefficients {
    double alpha;           // abar_t / abar_prev
    double beta;            // 1 - alpha
    double alpha_bar;       // abar_t
    double alpha_bar_prev;  // abar_prev (1 at the end of the chain)
    double sigma() const;   // sqrt of the lower-bound posterior variance
};

/// z_prev = (z_t - beta / sqrt(1 - abar_t) * eps) / sqrt(alpha) + sigma * xi.
LatentGrid ddpm_update(const LatentGrid& zt, const LatentGrid& eps_hat, const LatentGrid& xi,
                       const DdpmCoefficients& k);

/// Consecutive ancestral step t -> t-1; at t = 0 no noise is added.
LatentGrid ddpm_step(const LatentGrid& zt, const LatentGrid& eps_hat, int t,
                     const LatentGrid& xi, const NoiseSchedule& s);

/// Strided ancestral step t -> t_prev (t_prev = -1 ends the chain).
LatentGrid ddpm_step_between(const LatentGrid& zt, const LatentGrid& eps_hat, int t, int t_prev,
                             const LatentGrid& xi, const NoiseSchedule& s);

/// Deterministic (eta = 0) step; t_prev = -1 returns the z0 estimate.
LatentGrid ddim_step(const LatentGrid& zt, const LatentGrid& eps_hat, int t, int t_prev,
                     const NoiseSchedule& s);

/// Evenly strided descending timesteps, e.g. T=1000, n=50 -> 980, 960, ..., 0.
std::vector<int> inference_timesteps(int T, int n);

}  // namespace recat
