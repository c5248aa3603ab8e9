#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace recat {

/// C x H x W grid of doubles stored row-major in (c, h, w) order. Carries
/// latents, noises, masks and gradients alike.
class LatentGrid {
public:
    LatentGrid() = default;
    LatentGrid(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
    /// Throws ShapeMismatch if data.size() != channels * height * width.
    LatentGrid(std::size_t channels, std::size_t height, std::size_t width,
               std::vector<double> data);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * height_ + h) * width_ + w];
    }
    double at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * height_ + h) * width_ + w];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> channel(std::size_t c) { return std::span(data_).subspan(c * plane(), plane()); }
    std::span<const double> channel(std::size_t c) const {
        return std::span(data_).subspan(c * plane(), plane());
    }
    std::vector<double>& storage() noexcept { return data_; }

    bool same_shape(const LatentGrid& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }
    bool all_finite() const noexcept;

    /// Elementwise equality; bit-exact for finite values.
    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

/// A grid whose rows [0, region_height) are the person region and rows
/// [region_height, 2 * region_height) the garment region.
class DuoGrid {
public:
    DuoGrid() = default;
    DuoGrid(LatentGrid grid, std::size_t region_height);

    const LatentGrid& grid() const noexcept { return grid_; }
    LatentGrid& grid() noexcept { return grid_; }
    std::size_t region_height() const noexcept { return region_height_; }
    std::size_t channels() const noexcept { return grid_.channels(); }
    std::size_t width() const noexcept { return grid_.width(); }

    /// Contiguous rows of one region within channel c.
    std::span<double> person_rows(std::size_t c);
    std::span<const double> person_rows(std::size_t c) const;
    std::span<double> garment_rows(std::size_t c);
    std::span<const double> garment_rows(std::size_t c) const;

    friend bool operator==(const DuoGrid&, const DuoGrid&) = default;

private:
    LatentGrid grid_;
    std::size_t region_height_ = 0;
};

/// Single-channel binary mask; 1.0 marks the area to inpaint.
class RegionMask {
public:
    RegionMask() = default;
    /// Throws NonBinaryMask for values other than 0.0/1.0 and ShapeMismatch
    /// for channels != 1.
    explicit RegionMask(LatentGrid grid);

    const LatentGrid& grid() const noexcept { return grid_; }
    std::size_t height() const noexcept { return grid_.height(); }
    std::size_t width() const noexcept { return grid_.width(); }
    double at(std::size_t h, std::size_t w) const { return grid_.at(0, h, w); }
    double coverage() const;

    friend bool operator==(const RegionMask&, const RegionMask&) = default;

private:
    LatentGrid grid_;
};

DuoGrid spatial_concat(const LatentGrid& top, const LatentGrid& bottom);
std::pair<LatentGrid, LatentGrid> split_regions(const DuoGrid& x);
LatentGrid person_region(const DuoGrid& x);
LatentGrid garment_region(const DuoGrid& x);

/// (1 - m) * z, with m broadcast over channels.
LatentGrid mask_zero_region(const LatentGrid& z, const RegionMask& m);

/// Area-pool by `factor`, then threshold: mean >= 0.5 maps to 1.
RegionMask downsample_mask(const RegionMask& m, std::size_t factor);

// Binary layout: "LGRD", u32 version, u32 C/H/W, f64 payload; little-endian.
void write_grid(std::ostream& os, const LatentGrid& g);
LatentGrid read_grid(std::istream& is);

}  // namespace recat
