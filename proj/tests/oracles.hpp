#pragma once

#include "recat/dreamtrain.hpp"

namespace recat::test {

/// Gradient applied by one train_step. With beta1 = beta2 = 0, no decay and
/// adam_eps = lr = 1e8, the first AdamW update is -g / (1 + |g| 1e-8).
inline ParamSet train_step_gradient(const TinyUNet& model, const std::vector<const ToyScene*>& batch,
                                    TrainConfig cfg, const NoiseSchedule& s, int threads = 1) {
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    cfg.adam_eps = 1e8;
    cfg.lr = 1e8;
    cfg.grad_clip_norm = 1e300;
    TinyUNet work(model.params());
    AdamWState st;
    train_step(work, st, batch, cfg, s, threads);
    ParamSet g = model.params().tensors;
    for (std::size_t ti = 0; ti < g.size(); ++ti)
        for (std::size_t i = 0; i < g[ti].values.size(); ++i) {
            const double d = model.params().tensors[ti].values[i] - work.params().tensors[ti].values[i];
            g[ti].values[i] = d / (1.0 - std::abs(d) * 1e-8);
        }
    return g;
}

/// Batch loss as train_step sees it, with the stop-gradient pass pinned to `frozen`.
inline double batch_loss(const TinyUNet& model, const std::vector<const ToyScene*>& batch, const TrainConfig& cfg,
                         const NoiseSchedule& s, const EpsModel& frozen, std::uint64_t step = 0) {
    SampleOptions opts;
    opts.frozen = &frozen;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += sample_gradient(model, *batch[i], cfg, s, step, i, opts).loss.loss;
    return total / static_cast<double>(batch.size());
}

}  // namespace recat::test
