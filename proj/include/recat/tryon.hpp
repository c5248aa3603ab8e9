#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "recat/denoiser.hpp"
#include "recat/guidance.hpp"
#include "recat/schedule.hpp"
#include "recat/toydata.hpp"

namespace recat {

enum class SamplerKind { ddpm, ddim };

SamplerKind parse_sampler_kind(const std::string& s);
std::string to_string(SamplerKind k);

struct SamplerConfig {
    int steps = 50;
    SamplerKind sampler = SamplerKind::ddpm;
    GuidanceConfig guidance;
    bool gt_injection = true;
    std::uint64_t seed = 0;
};

struct TrajectoryState {
    DuoGrid z;
    int t = 0;
    /// Drawn once per trajectory; reused at every injection.
    LatentGrid fixed_garment_noise;
};

/// Overwrites the garment rows with sqrt(abar_t) zg0 + sqrt(1 - abar_t) eps_g;
/// the person rows are left untouched.
TrajectoryState inject_garment_gt(TrajectoryState state, const LatentGrid& zg0,
                                  const NoiseSchedule& s);

/// What the sampler conditions on: the masked person, the garment to wear and
/// the inpainting mask.
struct TryOnInputs {
    LatentGrid person_masked;
    LatentGrid garment;
    RegionMask mask;
};

TryOnInputs tryon_inputs(const ToyScene& scene);
TryOnInputs tryon_inputs(const UnpairedSample& sample);

/// Per-step view of the denoiser inputs, for instrumentation.
struct StepTrace {
    int step = 0;
    int t = 0;
    const TrajectoryState* state = nullptr;
    const ModelInput* cond = nullptr;
    const ModelInput* uncond = nullptr;  // null when omega = 1 skips the pass
};
using StepObserver = std::function<void(const StepTrace&)>;

/// Runs the guided reverse chain and returns the person region, composited
/// so that pixels outside the mask equal `person_masked` exactly.
LatentGrid sample_tryon(const EpsModel& model, const TryOnInputs& in, const SamplerConfig& cfg,
                        const NoiseSchedule& s, const StepObserver& observer = {});

inline LatentGrid sample_tryon(const EpsModel& model, const ToyScene& scene,
                               const SamplerConfig& cfg, const NoiseSchedule& s) {
    return sample_tryon(model, tryon_inputs(scene), cfg, s);
}

}  // namespace recat
