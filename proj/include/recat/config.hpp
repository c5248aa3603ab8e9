#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recat/denoiser.hpp"
#include "recat/dreamtrain.hpp"
#include "recat/evalmetrics.hpp"
#include "recat/schedule.hpp"
#include "recat/toydata.hpp"
#include "recat/tryon.hpp"

namespace recat {

/// Every tunable of a run. JSON documents may nest objects or use dotted keys
/// ("train.lr"); both flatten to the same key set.
struct RunConfig {
    ScheduleKind schedule_kind = ScheduleKind::scaled_linear;
    int schedule_T = 1000;
    double beta_start = 8.5e-4;
    double beta_end = 1.2e-2;

    TinyUNetConfig model;  // timesteps mirrors schedule_T
    std::size_t height = 32;
    std::size_t width = 24;

    TrainConfig train;
    std::int64_t checkpoint_every = 0;  // 0: final checkpoint only

    SamplerConfig sampler;  // guidance holds cfg.variant / cfg.omega

    std::size_t n_train = 512;
    std::size_t n_test = 128;
    std::uint32_t n_patterns = 6;
    std::uint64_t data_seed = 0;

    std::uint64_t embed_seed = 0;
    std::size_t embed_dim = 64;

    NoiseSchedule schedule() const;
    ToyDataParams data_params() const;
    EmbeddingSpec embedding() const;
    DenoiserInputSpec input_spec() const;

    /// Throws ValidationError naming the first offending key.
    void validate() const;
};

/// Accepted keys, sorted.
const std::vector<std::string>& config_keys();

/// Missing keys keep defaults; unknown keys and bad values throw
/// ValidationError; malformed JSON throws FormatError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Flat, sorted dotted-key JSON of the fully resolved configuration.
std::string config_to_json(const RunConfig& cfg);

}  // namespace recat
