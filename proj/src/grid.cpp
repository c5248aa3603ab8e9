#include "recat/grid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "recat/binary_io.hpp"
#include "recat/error.hpp"

namespace recat {

namespace {

constexpr char kGridMagic[4] = {'L', 'G', 'R', 'D'};
constexpr std::uint32_t kGridVersion = 1;
// Guards against absurd allocations when reading corrupt headers.
constexpr std::uint64_t kMaxGridElements = std::uint64_t{1} << 32;

std::string shape_str(const LatentGrid& g) {
    return std::to_string(g.channels()) + "x" + std::to_string(g.height()) + "x" +
           std::to_string(g.width());
}

}  // namespace

LatentGrid::LatentGrid(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : channels_(channels), height_(height), width_(width),
      data_(channels * height * width, fill) {}

LatentGrid::LatentGrid(std::size_t channels, std::size_t height, std::size_t width,
                       std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != channels * height * width)
        throw ShapeMismatch("grid data length " + std::to_string(data_.size()) +
                            " does not match " + shape_str(*this));
}

bool LatentGrid::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DuoGrid::DuoGrid(LatentGrid grid, std::size_t region_height)
    : grid_(std::move(grid)), region_height_(region_height) {
    if (grid_.height() != 2 * region_height_)
        throw ShapeMismatch("duo grid height " + std::to_string(grid_.height()) +
                            " != 2 * region height " + std::to_string(region_height_));
}

std::span<double> DuoGrid::person_rows(std::size_t c) {
    return grid_.channel(c).first(region_height_ * grid_.width());
}
std::span<const double> DuoGrid::person_rows(std::size_t c) const {
    return grid_.channel(c).first(region_height_ * grid_.width());
}
std::span<double> DuoGrid::garment_rows(std::size_t c) {
    return grid_.channel(c).last(region_height_ * grid_.width());
}
std::span<const double> DuoGrid::garment_rows(std::size_t c) const {
    return grid_.channel(c).last(region_height_ * grid_.width());
}

RegionMask::RegionMask(LatentGrid grid) : grid_(std::move(grid)) {
    if (grid_.channels() != 1)
        throw ShapeMismatch("mask must have one channel, got " + std::to_string(grid_.channels()));
    for (double v : grid_.data())
        if (v != 0.0 && v != 1.0) throw NonBinaryMask("mask value " + std::to_string(v));
}

double RegionMask::coverage() const {
    double s = 0.0;
    for (double v : grid_.data()) s += v;
    return grid_.size() == 0 ? 0.0 : s / static_cast<double>(grid_.size());
}

DuoGrid spatial_concat(const LatentGrid& top, const LatentGrid& bottom) {
    if (!top.same_shape(bottom))
        throw ShapeMismatch("spatial_concat: " + shape_str(top) + " vs " + shape_str(bottom));
    const std::size_t plane = top.plane();
    LatentGrid out(top.channels(), 2 * top.height(), top.width());
    for (std::size_t c = 0; c < top.channels(); ++c) {
        auto dst = out.channel(c);
        std::copy_n(top.channel(c).begin(), plane, dst.begin());
        std::copy_n(bottom.channel(c).begin(), plane, dst.begin() + static_cast<std::ptrdiff_t>(plane));
    }
    return DuoGrid(std::move(out), top.height());
}

std::pair<LatentGrid, LatentGrid> split_regions(const DuoGrid& x) {
    return {person_region(x), garment_region(x)};
}

LatentGrid person_region(const DuoGrid& x) {
    LatentGrid out(x.channels(), x.region_height(), x.width());
    for (std::size_t c = 0; c < x.channels(); ++c)
        std::ranges::copy(x.person_rows(c), out.channel(c).begin());
    return out;
}

LatentGrid garment_region(const DuoGrid& x) {
    LatentGrid out(x.channels(), x.region_height(), x.width());
    for (std::size_t c = 0; c < x.channels(); ++c)
        std::ranges::copy(x.garment_rows(c), out.channel(c).begin());
    return out;
}

LatentGrid mask_zero_region(const LatentGrid& z, const RegionMask& m) {
    if (z.height() != m.height() || z.width() != m.width())
        throw ShapeMismatch("mask_zero_region: grid " + shape_str(z) + " vs mask " +
                            shape_str(m.grid()));
    LatentGrid out = z;
    const auto mask = m.grid().data();
    for (std::size_t c = 0; c < z.channels(); ++c) {
        auto ch = out.channel(c);
        for (std::size_t i = 0; i < ch.size(); ++i) ch[i] *= (1.0 - mask[i]);
    }
    return out;
}

RegionMask downsample_mask(const RegionMask& m, std::size_t factor) {
    if (factor == 0 || m.height() % factor != 0 || m.width() % factor != 0)
        throw ShapeMismatch("downsample_mask: " + shape_str(m.grid()) +
                            " not divisible by factor " + std::to_string(factor));
    const std::size_t oh = m.height() / factor;
    const std::size_t ow = m.width() / factor;
    const double area = static_cast<double>(factor * factor);
    LatentGrid out(1, oh, ow);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
            double s = 0.0;
            for (std::size_t di = 0; di < factor; ++di)
                for (std::size_t dj = 0; dj < factor; ++dj)
                    s += m.at(i * factor + di, j * factor + dj);
            // Ties round up.
            out.at(0, i, j) = (s / area >= 0.5) ? 1.0 : 0.0;
        }
    return RegionMask(std::move(out));
}

void write_grid(std::ostream& os, const LatentGrid& g) {
    os.write(kGridMagic, 4);
    bin::put_u32(os, kGridVersion);
    bin::put_u32(os, static_cast<std::uint32_t>(g.channels()));
    bin::put_u32(os, static_cast<std::uint32_t>(g.height()));
    bin::put_u32(os, static_cast<std::uint32_t>(g.width()));
    for (double v : g.data()) bin::put_f64(os, v);
}

LatentGrid read_grid(std::istream& is) {
    const std::string magic = bin::get_bytes(is, 4, "grid magic");
    if (magic != std::string(kGridMagic, 4)) throw FormatError("bad grid magic");
    const auto version = bin::get_u32(is, "grid version");
    if (version != kGridVersion)
        throw FormatError("unsupported grid version " + std::to_string(version));
    const std::size_t c = bin::get_u32(is, "grid channels");
    const std::size_t h = bin::get_u32(is, "grid height");
    const std::size_t w = bin::get_u32(is, "grid width");
    const std::uint64_t n = static_cast<std::uint64_t>(c) * h * w;
    if (n > kMaxGridElements) throw FormatError("grid too large");
    std::vector<double> data(n);
    for (double& v : data) {
        v = bin::get_f64(is, "grid payload");
        if (!std::isfinite(v)) throw FormatError("non-finite grid value");
    }
    return LatentGrid(c, h, w, std::move(data));
}

}  // namespace recat
