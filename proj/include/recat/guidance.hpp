#pragma once

#include <string>

#include "recat/grid.hpp"

namespace recat {

/// Channel-stacked denoiser input of shape (2C+1) x 2H x W:
///   [0, C)        noisy duo latent (person over garment)
///   [C]           inpainting mask over person rows, zeros over garment rows
///   [C+1, 2C+1)   condition duo (masked person over clean garment)
class ModelInput {
public:
    ModelInput() = default;
    /// Validates the layout; throws ShapeMismatch or NonBinaryMask.
    ModelInput(LatentGrid grid, std::size_t latent_channels);

    const LatentGrid& grid() const noexcept { return grid_; }
    std::size_t latent_channels() const noexcept { return latent_channels_; }
    std::size_t region_height() const noexcept { return grid_.height() / 2; }
    std::size_t width() const noexcept { return grid_.width(); }

    friend bool operator==(const ModelInput&, const ModelInput&) = default;

private:
    LatentGrid grid_;
    std::size_t latent_channels_ = 0;
};

enum class ConditioningVariant {
    CatVTON,    // unconditional input drops only the clean garment latent
    ReCatVTON,  // unconditional input drops every garment latent
};

ConditioningVariant parse_variant(const std::string& s);
std::string to_string(ConditioningVariant v);

struct GuidanceConfig {
    double omega = 2.5;
    ConditioningVariant variant = ConditioningVariant::ReCatVTON;
};

/// `zp0_masked` must already have its garment area zeroed (mask_zero_region).
ModelInput assemble_conditional_input(const DuoGrid& zt_duo, const RegionMask& mask,
                                      const LatentGrid& zp0_masked, const LatentGrid& zg0);

/// The clean garment latent is deliberately not a parameter: neither variant's
/// unconditional input may depend on it.
ModelInput assemble_unconditional_input(ConditioningVariant variant, const DuoGrid& zt_duo,
                                        const RegionMask& mask, const LatentGrid& zp0_masked);

/// eps_u + omega * (eps_c - eps_u); omega = 1 and omega = 0 return an exact copy.
DuoGrid cfg_combine(const DuoGrid& eps_cond, const DuoGrid& eps_uncond, double omega);

}  // namespace recat
