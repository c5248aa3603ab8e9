#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recat/grid.hpp"

namespace recat {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Image() = default;
    Image(std::size_t w, std::size_t h, Rgb fill = {255, 255, 255});
    void set(std::size_t x, std::size_t y, Rgb c);
};

/// 8-bit RGB PNG via libpng; throws IoError.
void write_png(const std::string& path, const Image& img);

/// Channels 0-2 (grayscale when C < 3) mapped linearly from [-1, 1] to
/// [0, 255] and clamped.
Rgb latent_pixel(const LatentGrid& g, std::size_t h, std::size_t w);

/// Rows of equally shaped latents tiled with a 1-pixel gap, each pixel
/// magnified `scale` times.
Image tile_grids(const std::vector<std::vector<LatentGrid>>& rows, std::size_t scale = 4);

struct LineSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Line chart with labeled axes and a legend; labels use a small built-in
/// uppercase bitmap font.
Image line_chart(const std::vector<LineSeries>& series, const std::string& x_label,
                 const std::string& y_label);

}  // namespace recat
