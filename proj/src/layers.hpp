#pragma once

// Dense kernels for the toy denoiser. Activations are (channels, height, width)
// row-major buffers; every backward routine accumulates (+=) into parameter
// gradients and overwrites input gradients.

#include <cstddef>
#include <span>
#include <vector>

namespace recat::nn {

struct ConvShape {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t height = 0;  // input height
    std::size_t width = 0;   // input width
    std::size_t stride = 1;  // 3x3 kernel, zero padding 1

    std::size_t out_height() const { return (height + 2 - 3) / stride + 1; }
    std::size_t out_width() const { return (width + 2 - 3) / stride + 1; }
};

void conv3x3_forward(std::span<const double> in, std::span<const double> weight,
                     std::span<const double> bias, const ConvShape& shape,
                     std::span<double> out, std::vector<double>& scratch);

/// din may be empty when the input gradient is not needed.
void conv3x3_backward(std::span<const double> in, std::span<const double> weight,
                      std::span<const double> dout, const ConvShape& shape,
                      std::span<double> din, std::span<double> dweight,
                      std::span<double> dbias, std::vector<double>& scratch);

struct GroupNormCache {
    std::vector<double> xhat;
    std::vector<double> inv_std;  // one per group
};

inline constexpr double kGroupNormEps = 1e-5;

void group_norm_forward(std::span<const double> x, std::size_t channels, std::size_t groups,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> y, GroupNormCache& cache);

void group_norm_backward(std::span<const double> dy, std::size_t channels, std::size_t groups,
                         std::span<const double> gamma, const GroupNormCache& cache,
                         std::span<double> dx, std::span<double> dgamma,
                         std::span<double> dbeta);

void silu_forward(std::span<const double> x, std::span<double> y);
void silu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

void upsample2x_forward(std::span<const double> x, std::size_t channels, std::size_t height,
                        std::size_t width, std::span<double> y);
void upsample2x_backward(std::span<const double> dy, std::size_t channels, std::size_t height,
                         std::size_t width, std::span<double> dx);

}  // namespace recat::nn
