#include "recat/dreamtrain.hpp"

#include <cmath>

#include "recat/error.hpp"
#include "recat/parallel.hpp"

namespace recat {

namespace {

// Stream ids of the counter RNG; (step, sample) follow.
constexpr std::uint64_t kStreamTimestep = 11;
constexpr std::uint64_t kStreamNoise = 12;
constexpr std::uint64_t kStreamDropout = 13;
constexpr std::uint64_t kStreamBatch = 14;

void require_same(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeMismatch(std::string(what) + ": grid shapes differ");
}

bool is_frozen(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (name.compare(0, p.size(), p) == 0) return true;
    return false;
}

}  // namespace

LossRegion parse_loss_region(const std::string& s) {
    if (s == "person") return LossRegion::person;
    if (s == "full") return LossRegion::full;
    throw InvalidConfig("unknown loss region '" + s + "'");
}

std::string to_string(LossRegion r) { return r == LossRegion::person ? "person" : "full"; }

void TrainConfig::validate() const {
    auto check = [](bool ok, const char* key, const char* what) {
        if (!ok) throw ValidationError(key, what);
    };
    check(std::isfinite(lambda) && lambda >= 0.0, "train.lambda", "must be >= 0");
    check(std::isfinite(lr) && lr > 0.0, "train.lr", "must be > 0");
    check(std::isfinite(weight_decay) && weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
    check(beta1 >= 0.0 && beta1 < 1.0, "train.beta1", "must be in [0, 1)");
    check(beta2 >= 0.0 && beta2 < 1.0, "train.beta2", "must be in [0, 1)");
    check(std::isfinite(adam_eps) && adam_eps > 0.0, "train.adam_eps", "must be > 0");
    check(std::isfinite(grad_clip_norm) && grad_clip_norm > 0.0, "train.grad_clip", "must be > 0");
    check(batch_size > 0, "train.batch", "must be > 0");
    check(grad_accum > 0, "train.grad_accum", "must be > 0");
    check(steps >= 0, "train.steps", "must be >= 0");
    check(dropout_p >= 0.0 && dropout_p <= 1.0, "train.dropout_p", "must be in [0, 1]");
}

AdamWState AdamWState::zeros_like(const ParamSet& params) {
    return AdamWState{params.zeros_like(), params.zeros_like(), 0};
}

double omega_t(double lambda, int t, const NoiseSchedule& s) {
    if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be >= 0");
    if (lambda == 0.0) return 1.0;
    return std::pow(1.0 - s.alpha_bar_at(t), lambda / 2.0);
}

LatentGrid dream_target(const LatentGrid& eps_bar_p, const LatentGrid& eps_sg_p, double w) {
    require_same(eps_bar_p, eps_sg_p, "dream_target");
    LatentGrid out = eps_bar_p;
    auto o = out.data();
    auto sg = eps_sg_p.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] + w * (o[i] - sg[i]);
    return out;
}

DuoGrid rectify_input(const DuoGrid& z_bar, const LatentGrid& eps_bar_p, const LatentGrid& eps_sg_p,
                      double w, int t, const NoiseSchedule& s) {
    require_same(eps_bar_p, eps_sg_p, "rectify_input");
    if (eps_bar_p.channels() != z_bar.channels() || eps_bar_p.height() != z_bar.region_height() ||
        eps_bar_p.width() != z_bar.width())
        throw ShapeMismatch("rectify_input: person noise does not match the duo's person region");
    const double k = std::sqrt(1.0 - s.alpha_bar_at(t)) * w;
    DuoGrid out = z_bar;
    for (std::size_t c = 0; c < out.channels(); ++c) {
        auto rows = out.person_rows(c);
        auto eb = eps_bar_p.channel(c);
        auto es = eps_sg_p.channel(c);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] += k * (eb[i] - es[i]);
    }
    return out;
}

RegionLoss outfit_only_loss(const DuoGrid& eps_pred, const LatentGrid& dream_target_p) {
    if (dream_target_p.channels() != eps_pred.channels() ||
        dream_target_p.height() != eps_pred.region_height() || dream_target_p.width() != eps_pred.width())
        throw ShapeMismatch("outfit_only_loss: target does not match the person region");
    const double n = static_cast<double>(dream_target_p.size());
    RegionLoss out{0.0, DuoGrid(LatentGrid(eps_pred.channels(), eps_pred.grid().height(), eps_pred.width()),
                                eps_pred.region_height())};
    double sum = 0.0;
    for (std::size_t c = 0; c < eps_pred.channels(); ++c) {
        auto p = eps_pred.person_rows(c);
        auto y = dream_target_p.channel(c);
        auto g = out.grad.person_rows(c);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double e = p[i] - y[i];
            sum += e * e;
            g[i] = 2.0 * e / n;
        }
    }
    out.value = sum / n;
    return out;
}

RegionLoss full_region_loss(const DuoGrid& eps_pred, const DuoGrid& target) {
    require_same(eps_pred.grid(), target.grid(), "full_region_loss");
    const auto p = eps_pred.grid().data();
    const auto y = target.grid().data();
    const double n = static_cast<double>(p.size());
    RegionLoss out{0.0, DuoGrid(LatentGrid(eps_pred.channels(), eps_pred.grid().height(), eps_pred.width()),
                                eps_pred.region_height())};
    auto g = out.grad.grid().data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - y[i];
        sum += e * e;
        g[i] = 2.0 * e / n;
    }
    out.value = sum / n;
    return out;
}

ModelInput cond_dropout(CounterRng& rng, double p, ConditioningVariant variant, const DuoGrid& zt_duo,
                        const RegionMask& mask, const LatentGrid& zp0_masked, const LatentGrid& zg0,
                        bool* dropped) {
    const bool drop = rng.uniform() < p;
    if (dropped) *dropped = drop;
    if (drop) return assemble_unconditional_input(variant, zt_duo, mask, zp0_masked);
    return assemble_conditional_input(zt_duo, mask, zp0_masked, zg0);
}

void adamw_step(AdamWState& state, ParamSet& params, const ParamSet& grads, const TrainConfig& cfg) {
    if (!params.same_layout(grads)) throw ShapeMismatch("adamw_step: gradient layout differs from parameters");
    if (state.m.size() == 0 && state.v.size() == 0) {
        state.m = params.zeros_like();
        state.v = params.zeros_like();
    }
    if (!params.same_layout(state.m) || !params.same_layout(state.v))
        throw ShapeMismatch("adamw_step: moment layout differs from parameters");
    state.step += 1;
    const double k = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        if (is_frozen(params[ti].name, cfg.frozen_prefixes)) continue;
        auto& theta = params[ti].values;
        const auto& g = grads[ti].values;
        auto& m = state.m[ti].values;
        auto& v = state.v[ti].values;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * theta[i]);
        }
    }
}

double clip_grad_norm(ParamSet& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw InvalidConfig("clip_grad_norm: max_norm must be > 0");
    double sq = 0.0;
    for (const auto& t : grads.tensors())
        for (double g : t.values) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) grads.scale(max_norm / norm);
    return norm;
}

SampleGradient sample_gradient(const TinyUNet& model, const ToyScene& scene, const TrainConfig& cfg,
                               const NoiseSchedule& s, std::uint64_t step, std::uint64_t sample_index,
                               const SampleOptions& opts) {
    const EpsModel& frozen = opts.frozen ? *opts.frozen : static_cast<const EpsModel&>(model);
    const std::size_t rh = scene.person_full.height();

    CounterRng t_rng(cfg.seed, {kStreamTimestep, step, sample_index});
    const int t = static_cast<int>(t_rng.below(static_cast<std::uint64_t>(s.steps())));

    const DuoGrid z0 = spatial_concat(scene.person_full, scene.garment);
    LatentGrid eps_bar(z0.channels(), 2 * rh, z0.width());
    CounterRng noise_rng(cfg.seed, {kStreamNoise, step, sample_index});
    noise_rng.fill_normal(eps_bar.data());
    const DuoGrid eps_duo(eps_bar, rh);
    const DuoGrid z_bar(forward_diffuse(z0.grid(), t, eps_bar, s), rh);

    CounterRng drop_rng(cfg.seed, {kStreamDropout, step, sample_index});
    bool dropped = false;
    cond_dropout(drop_rng, cfg.dropout_p, cfg.variant, z_bar, scene.mask, scene.person_masked,
                 scene.garment, &dropped);
    auto build = [&](const DuoGrid& zt) {
        return dropped ? assemble_unconditional_input(cfg.variant, zt, scene.mask, scene.person_masked)
                       : assemble_conditional_input(zt, scene.mask, scene.person_masked, scene.garment);
    };

    const double w = cfg.dream ? omega_t(cfg.lambda, t, s) : 0.0;
    DuoGrid z_in = z_bar;
    DuoGrid target = eps_duo;
    if (cfg.dream) {
        const DuoGrid eps_sg = frozen.predict(build(z_bar), t);
        if (cfg.loss_region == LossRegion::person) {
            const LatentGrid eb = person_region(eps_duo);
            const LatentGrid es = person_region(eps_sg);
            z_in = rectify_input(z_bar, eb, es, w, t, s);
            target = spatial_concat(dream_target(eb, es, w), garment_region(eps_duo));
        } else {
            const double k = std::sqrt(1.0 - s.alpha_bar_at(t)) * w;
            auto zi = z_in.grid().data();
            auto tg = target.grid().data();
            const auto es = eps_sg.grid().data();
            const auto eb = eps_duo.grid().data();
            for (std::size_t i = 0; i < zi.size(); ++i) {
                const double d = eb[i] - es[i];
                zi[i] += k * d;
                tg[i] = eb[i] + w * d;
            }
        }
    }

    ForwardTape tape;
    DuoGrid pred = model.forward(build(z_in), t, &tape);
    if (opts.prediction_hook) opts.prediction_hook(pred);

    const RegionLoss person = outfit_only_loss(pred, person_region(target));
    SampleGradient out;
    out.loss.person_mse = person.value;
    out.loss.omega_t_value = w;
    out.loss.t_sampled = t;
    if (cfg.loss_region == LossRegion::person) {
        out.loss.loss = person.value;
        out.grad = model.backward(tape, person.grad);
    } else {
        const RegionLoss full = full_region_loss(pred, target);
        out.loss.loss = full.value;
        out.grad = model.backward(tape, full.grad);
    }
    return out;
}

std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::uint64_t step, std::size_t n_train) {
    if (n_train == 0) throw InvalidConfig("training set is empty");
    CounterRng rng(cfg.seed, {kStreamBatch, step});
    std::vector<std::size_t> idx(cfg.batch_size * cfg.grad_accum);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n_train));
    return idx;
}

StepReport train_step(TinyUNet& model, AdamWState& state, const std::vector<const ToyScene*>& batch,
                      const TrainConfig& cfg, const NoiseSchedule& s, int threads) {
    if (batch.empty() || batch.size() % cfg.grad_accum != 0)
        throw InvalidConfig("batch size must be a positive multiple of grad_accum");
    const std::uint64_t step = static_cast<std::uint64_t>(state.step);
    std::vector<SampleGradient> per(batch.size());
    parallel_for(batch.size(), threads,
                 [&](std::size_t i) { per[i] = sample_gradient(model, *batch[i], cfg, s, step, i); });

    const std::size_t micro = batch.size() / cfg.grad_accum;
    ParamSet total = model.params().tensors.zeros_like();
    StepReport report;
    for (std::size_t m = 0; m < cfg.grad_accum; ++m) {
        ParamSet acc = total.zeros_like();
        for (std::size_t i = m * micro; i < (m + 1) * micro; ++i) acc.accumulate(per[i].grad);
        acc.scale(1.0 / static_cast<double>(micro));
        total.accumulate(acc);
    }
    total.scale(1.0 / static_cast<double>(cfg.grad_accum));
    for (const auto& p : per) {
        report.loss += p.loss.loss;
        report.person_mse += p.loss.person_mse;
        report.omega_t_mean += p.loss.omega_t_value;
    }
    const double n = static_cast<double>(per.size());
    report.loss /= n;
    report.person_mse /= n;
    report.omega_t_mean /= n;

    for (auto& t : total.tensors())
        if (is_frozen(t.name, cfg.frozen_prefixes)) std::fill(t.values.begin(), t.values.end(), 0.0);
    report.grad_norm = clip_grad_norm(total, cfg.grad_clip_norm);
    adamw_step(state, model.mutable_params().tensors, total, cfg);
    report.step = state.step;
    return report;
}

void train(TinyUNet& model, AdamWState& state, const std::vector<ToyScene>& train_set,
           const TrainConfig& cfg, const NoiseSchedule& s, std::int64_t until_step, int threads,
           const std::function<void(const StepReport&)>& on_step) {
    cfg.validate();
    std::vector<const ToyScene*> batch;
    while (state.step < until_step) {
        const auto idx = batch_indices(cfg, static_cast<std::uint64_t>(state.step), train_set.size());
        batch.clear();
        for (auto i : idx) batch.push_back(&train_set[i]);
        const StepReport r = train_step(model, state, batch, cfg, s, threads);
        if (on_step) on_step(r);
    }
}

}  // namespace recat
