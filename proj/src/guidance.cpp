#include "recat/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "recat/error.hpp"

namespace recat {

ModelInput::ModelInput(LatentGrid grid, std::size_t latent_channels)
    : grid_(std::move(grid)), latent_channels_(latent_channels) {
    if (grid_.channels() != 2 * latent_channels_ + 1)
        throw ShapeMismatch("model input needs 2C+1 channels");
    if (grid_.height() % 2 != 0) throw ShapeMismatch("model input height must be even");
    const std::size_t half = (grid_.height() / 2) * grid_.width();
    const auto mask = grid_.channel(latent_channels_);
    if (std::any_of(mask.begin() + static_cast<std::ptrdiff_t>(half), mask.end(),
                    [](double v) { return v != 0.0; }))
        throw NonBinaryMask("mask channel must be zero over the garment rows");
}

ConditioningVariant parse_variant(const std::string& s) {
    if (s == "catvton") return ConditioningVariant::CatVTON;
    if (s == "recatvton") return ConditioningVariant::ReCatVTON;
    throw InvalidConfig("unknown conditioning variant '" + s + "'");
}

std::string to_string(ConditioningVariant v) {
    return v == ConditioningVariant::CatVTON ? "catvton" : "recatvton";
}

namespace {

void check_inputs(const DuoGrid& zt, const RegionMask& mask, const LatentGrid& zp0) {
    const std::size_t H = zt.region_height();
    const std::size_t W = zt.width();
    if (mask.height() != H || mask.width() != W)
        throw ShapeMismatch("mask does not match the region shape");
    if (zp0.channels() != zt.channels() || zp0.height() != H || zp0.width() != W)
        throw ShapeMismatch("person latent does not match the region shape");
}

// Builds the layout with the garment slots filled from the given sources;
// null sources leave zeros.
ModelInput build(const DuoGrid& zt, const RegionMask& mask, const LatentGrid& zp0,
                 bool noisy_garment, const LatentGrid* zg0) {
    const std::size_t C = zt.channels();
    const std::size_t H = zt.region_height();
    const std::size_t W = zt.width();
    const std::size_t region = H * W;
    LatentGrid out(2 * C + 1, 2 * H, W);
    for (std::size_t c = 0; c < C; ++c) {
        auto dst = out.channel(c);
        std::ranges::copy(zt.person_rows(c), dst.begin());
        if (noisy_garment)
            std::ranges::copy(zt.garment_rows(c), dst.begin() + static_cast<std::ptrdiff_t>(region));
    }
    std::ranges::copy(mask.grid().data(), out.channel(C).begin());
    for (std::size_t c = 0; c < C; ++c) {
        auto dst = out.channel(C + 1 + c);
        std::ranges::copy(zp0.channel(c), dst.begin());
        if (zg0 != nullptr)
            std::ranges::copy(zg0->channel(c), dst.begin() + static_cast<std::ptrdiff_t>(region));
    }
    return ModelInput(std::move(out), C);
}

}  // namespace

ModelInput assemble_conditional_input(const DuoGrid& zt_duo, const RegionMask& mask,
                                      const LatentGrid& zp0_masked, const LatentGrid& zg0) {
    check_inputs(zt_duo, mask, zp0_masked);
    if (!zg0.same_shape(zp0_masked)) throw ShapeMismatch("garment latent shape mismatch");
    return build(zt_duo, mask, zp0_masked, true, &zg0);
}

ModelInput assemble_unconditional_input(ConditioningVariant variant, const DuoGrid& zt_duo,
                                        const RegionMask& mask, const LatentGrid& zp0_masked) {
    check_inputs(zt_duo, mask, zp0_masked);
    return build(zt_duo, mask, zp0_masked, variant == ConditioningVariant::CatVTON, nullptr);
}

DuoGrid cfg_combine(const DuoGrid& eps_cond, const DuoGrid& eps_uncond, double omega) {
    if (!eps_cond.grid().same_shape(eps_uncond.grid()) ||
        eps_cond.region_height() != eps_uncond.region_height())
        throw ShapeMismatch("cfg_combine: prediction shapes differ");
    if (!std::isfinite(omega)) throw InvalidConfig("guidance scale must be finite");
    if (omega == 1.0) return eps_cond;
    if (omega == 0.0) return eps_uncond;
    DuoGrid out = eps_uncond;
    auto o = out.grid().data();
    auto c = eps_cond.grid().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] + omega * (c[i] - o[i]);
    return out;
}

}  // namespace recat
