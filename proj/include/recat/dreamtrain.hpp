#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "recat/denoiser.hpp"
#include "recat/guidance.hpp"
#include "recat/rng.hpp"
#include "recat/schedule.hpp"
#include "recat/toydata.hpp"

namespace recat {

/// Which rows the noise-prediction loss (and the DREAM rectification) covers.
/// `person` excludes the garment region entirely; `full` is the baseline
/// objective over the whole duo.
enum class LossRegion { person, full };

LossRegion parse_loss_region(const std::string& s);
std::string to_string(LossRegion r);

struct TrainConfig {
    double lambda = 10.0;
    double lr = 1e-5;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 1.0;
    std::size_t batch_size = 8;
    std::size_t grad_accum = 2;
    std::int64_t steps = 16000;
    double dropout_p = 0.1;
    ConditioningVariant variant = ConditioningVariant::ReCatVTON;
    std::uint64_t seed = 0;
    /// false skips the frozen pass and uses the plain target (weight 0).
    bool dream = true;
    LossRegion loss_region = LossRegion::person;
    /// Parameter-name prefixes excluded from updates (e.g. "stem", "rb1").
    std::vector<std::string> frozen_prefixes;

    void validate() const;  // throws ValidationError naming the key
};

struct AdamWState {
    ParamSet m;
    ParamSet v;
    std::int64_t step = 0;

    static AdamWState zeros_like(const ParamSet& params);
    friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

struct LossBreakdown {
    double loss = 0.0;        // optimized objective
    double person_mse = 0.0;  // person-region noise MSE against the (rectified) target
    double omega_t_value = 0.0;
    int t_sampled = 0;
};

/// (1 - abar_t)^(lambda / 2).
double omega_t(double lambda, int t, const NoiseSchedule& s);

/// eps_bar + w (eps_bar - eps_sg).
LatentGrid dream_target(const LatentGrid& eps_bar_p, const LatentGrid& eps_sg_p, double w);

/// Person rows shifted by sqrt(1 - abar_t) w (eps_bar - eps_sg); garment rows copied.
DuoGrid rectify_input(const DuoGrid& z_bar, const LatentGrid& eps_bar_p, const LatentGrid& eps_sg_p,
                      double w, int t, const NoiseSchedule& s);

struct RegionLoss {
    double value = 0.0;
    DuoGrid grad;  // d value / d prediction
};

/// Mean squared error over the person rows only; the gradient is exactly zero
/// on every garment row.
RegionLoss outfit_only_loss(const DuoGrid& eps_pred, const LatentGrid& dream_target_p);
/// Mean squared error over the whole duo.
RegionLoss full_region_loss(const DuoGrid& eps_pred, const DuoGrid& target);

/// With probability p the unconditional input of `variant`, else the
/// conditional one.
ModelInput cond_dropout(CounterRng& rng, double p, ConditioningVariant variant, const DuoGrid& zt_duo,
                        const RegionMask& mask, const LatentGrid& zp0_masked, const LatentGrid& zg0,
                        bool* dropped = nullptr);

/// Decoupled-weight-decay Adam; frozen tensors are left untouched.
void adamw_step(AdamWState& state, ParamSet& params, const ParamSet& grads, const TrainConfig& cfg);

/// Scales grads to global L2 norm max_norm when above it; returns the
/// pre-clip norm.
double clip_grad_norm(ParamSet& grads, double max_norm);

struct SampleOptions {
    /// Model used for the stop-gradient pass; defaults to the trained model.
    const EpsModel* frozen = nullptr;
    /// Applied to the trainable prediction before the loss (instrumentation).
    std::function<void(DuoGrid&)> prediction_hook;
};

struct SampleGradient {
    LossBreakdown loss;
    ParamSet grad;
};

/// Loss and parameter gradient for one scene at (step, sample_index); every
/// random draw comes from counter streams keyed by those indices.
SampleGradient sample_gradient(const TinyUNet& model, const ToyScene& scene, const TrainConfig& cfg,
                               const NoiseSchedule& s, std::uint64_t step,
                               std::uint64_t sample_index, const SampleOptions& opts = {});

struct StepReport {
    std::int64_t step = 0;  // completed step count after this update
    double loss = 0.0;
    double person_mse = 0.0;
    double omega_t_mean = 0.0;
    double grad_norm = 0.0;  // before clipping
};

/// Training-set indices used by optimizer step `step` (batch_size * grad_accum).
std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::uint64_t step, std::size_t n_train);

/// One optimizer step over `batch` (batch_size * grad_accum scenes, consumed
/// as grad_accum micro-batches). Uses `state.step` as the step index.
StepReport train_step(TinyUNet& model, AdamWState& state, const std::vector<const ToyScene*>& batch,
                      const TrainConfig& cfg, const NoiseSchedule& s, int threads = 1);

/// Runs steps until state.step == until_step.
void train(TinyUNet& model, AdamWState& state, const std::vector<ToyScene>& train_set,
           const TrainConfig& cfg, const NoiseSchedule& s, std::int64_t until_step, int threads = 1,
           const std::function<void(const StepReport&)>& on_step = {});

}  // namespace recat
