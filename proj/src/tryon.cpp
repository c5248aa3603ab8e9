#include "recat/tryon.hpp"

#include <algorithm>
#include <cmath>

#include "recat/error.hpp"
#include "recat/rng.hpp"

namespace recat {

namespace {

enum Role : std::uint64_t {
    kInitPerson = 1,
    kInitGarment = 2,
    kGarmentNoise = 3,
    kStepNoise = 4,
};

LatentGrid normal_grid(std::uint64_t seed, std::initializer_list<std::uint64_t> stream,
                       std::size_t c, std::size_t h, std::size_t w) {
    LatentGrid g(c, h, w);
    CounterRng rng(seed, stream);
    rng.fill_normal(g.data());
    return g;
}

}  // namespace

SamplerKind parse_sampler_kind(const std::string& s) {
    if (s == "ddpm") return SamplerKind::ddpm;
    if (s == "ddim") return SamplerKind::ddim;
    throw InvalidConfig("unknown sampler '" + s + "'");
}

std::string to_string(SamplerKind k) { return k == SamplerKind::ddpm ? "ddpm" : "ddim"; }

TrajectoryState inject_garment_gt(TrajectoryState state, const LatentGrid& zg0,
                                  const NoiseSchedule& s) {
    const std::size_t C = state.z.channels();
    if (zg0.channels() != C || zg0.height() != state.z.region_height() ||
        zg0.width() != state.z.width() || !zg0.same_shape(state.fixed_garment_noise))
        throw ShapeMismatch("inject_garment_gt: garment shape does not match the garment region");
    const LatentGrid noisy = forward_diffuse(zg0, state.t, state.fixed_garment_noise, s);
    for (std::size_t c = 0; c < C; ++c) std::ranges::copy(noisy.channel(c), state.z.garment_rows(c).begin());
    return state;
}

TryOnInputs tryon_inputs(const ToyScene& scene) {
    return {scene.person_masked, scene.garment, scene.mask};
}

TryOnInputs tryon_inputs(const UnpairedSample& sample) {
    return {sample.person.person_masked, sample.garment, sample.person.mask};
}

LatentGrid sample_tryon(const EpsModel& model, const TryOnInputs& in, const SamplerConfig& cfg,
                        const NoiseSchedule& s, const StepObserver& observer) {
    if (cfg.steps < 1 || cfg.steps > s.steps())
        throw InvalidConfig("sampler steps must lie in [1, T]");
    if (!(cfg.guidance.omega >= 0.0) || !std::isfinite(cfg.guidance.omega))
        throw InvalidConfig("guidance scale must be finite and >= 0");
    const std::size_t C = in.person_masked.channels();
    const std::size_t H = in.person_masked.height();
    const std::size_t W = in.person_masked.width();
    if (!in.garment.same_shape(in.person_masked) || in.mask.height() != H || in.mask.width() != W)
        throw ShapeMismatch("try-on inputs disagree in shape");

    const std::uint64_t seed = cfg.seed;
    TrajectoryState state;
    state.z = spatial_concat(normal_grid(seed, {kInitPerson}, C, H, W),
                             normal_grid(seed, {kInitGarment}, C, H, W));
    state.fixed_garment_noise = normal_grid(seed, {kGarmentNoise}, C, H, W);

    const std::vector<int> ts = inference_timesteps(s.steps(), cfg.steps);
    const double omega = cfg.guidance.omega;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        state.t = ts[i];
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        if (cfg.gt_injection) state = inject_garment_gt(std::move(state), in.garment, s);

        const ModelInput cond = assemble_conditional_input(state.z, in.mask, in.person_masked, in.garment);
        // omega = 1 skips the unconditional pass.
        const bool need_uncond = omega != 1.0;
        ModelInput uncond;
        if (need_uncond)
            uncond = assemble_unconditional_input(cfg.guidance.variant, state.z, in.mask, in.person_masked);
        if (observer) observer({static_cast<int>(i), state.t, &state, &cond, need_uncond ? &uncond : nullptr});

        DuoGrid eps = model.predict(cond, state.t);
        if (need_uncond) eps = cfg_combine(eps, model.predict(uncond, state.t), omega);

        LatentGrid next;
        if (cfg.sampler == SamplerKind::ddpm) {
            const LatentGrid xi = normal_grid(seed, {kStepNoise, static_cast<std::uint64_t>(i)}, C, 2 * H, W);
            next = ddpm_step_between(state.z.grid(), eps.grid(), state.t, t_prev, xi, s);
        } else {
            next = ddim_step(state.z.grid(), eps.grid(), state.t, t_prev, s);
        }
        state.z = DuoGrid(std::move(next), H);
    }

    LatentGrid out = person_region(state.z);
    const auto m = in.mask.grid().data();
    for (std::size_t c = 0; c < C; ++c) {
        auto o = out.channel(c);
        const auto keep = in.person_masked.channel(c);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = m[i] == 1.0 ? o[i] : keep[i];
    }
    return out;
}

}  // namespace recat
