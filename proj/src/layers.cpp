#include "layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace recat::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// col[(ci * 9 + kh * 3 + kw), oh * ow + ow_i] = in[ci, oh*s + kh - 1, ow*s + kw - 1]
void im2col(std::span<const double> in, const ConvShape& sh, std::vector<double>& col) {
    const std::size_t oh = sh.out_height(), ow = sh.out_width();
    col.assign(sh.cin * 9 * oh * ow, 0.0);
    const auto H = static_cast<std::ptrdiff_t>(sh.height);
    const auto W = static_cast<std::ptrdiff_t>(sh.width);
    const auto s = static_cast<std::ptrdiff_t>(sh.stride);
    for (std::size_t ci = 0; ci < sh.cin; ++ci) {
        const double* src = in.data() + ci * sh.height * sh.width;
        for (std::ptrdiff_t kh = 0; kh < 3; ++kh)
            for (std::ptrdiff_t kw = 0; kw < 3; ++kw) {
                double* dst = col.data() + ((ci * 9) + static_cast<std::size_t>(kh * 3 + kw)) * oh * ow;
                for (std::size_t i = 0; i < oh; ++i) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i) * s + kh - 1;
                    if (y < 0 || y >= H) continue;
                    const double* row = src + y * W;
                    double* drow = dst + i * ow;
                    for (std::size_t j = 0; j < ow; ++j) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j) * s + kw - 1;
                        if (x >= 0 && x < W) drow[j] = row[x];
                    }
                }
            }
    }
}

void col2im(const std::vector<double>& col, const ConvShape& sh, std::span<double> out) {
    const std::size_t oh = sh.out_height(), ow = sh.out_width();
    std::fill(out.begin(), out.end(), 0.0);
    const auto H = static_cast<std::ptrdiff_t>(sh.height);
    const auto W = static_cast<std::ptrdiff_t>(sh.width);
    const auto s = static_cast<std::ptrdiff_t>(sh.stride);
    for (std::size_t ci = 0; ci < sh.cin; ++ci) {
        double* dst = out.data() + ci * sh.height * sh.width;
        for (std::ptrdiff_t kh = 0; kh < 3; ++kh)
            for (std::ptrdiff_t kw = 0; kw < 3; ++kw) {
                const double* src = col.data() + ((ci * 9) + static_cast<std::size_t>(kh * 3 + kw)) * oh * ow;
                for (std::size_t i = 0; i < oh; ++i) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i) * s + kh - 1;
                    if (y < 0 || y >= H) continue;
                    double* row = dst + y * W;
                    const double* srow = src + i * ow;
                    for (std::size_t j = 0; j < ow; ++j) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j) * s + kw - 1;
                        if (x >= 0 && x < W) row[x] += srow[j];
                    }
                }
            }
    }
}

}  // namespace

void conv3x3_forward(std::span<const double> in, std::span<const double> weight,
                     std::span<const double> bias, const ConvShape& sh,
                     std::span<double> out, std::vector<double>& scratch) {
    const auto K = static_cast<Eigen::Index>(sh.cin * 9);
    const auto N = static_cast<Eigen::Index>(sh.out_height() * sh.out_width());
    const auto M = static_cast<Eigen::Index>(sh.cout);
    im2col(in, sh, scratch);
    ConstMap w(weight.data(), M, K);
    ConstMap col(scratch.data(), K, N);
    Map o(out.data(), M, N);
    o.noalias() = w * col;
    for (Eigen::Index m = 0; m < M; ++m) o.row(m).array() += bias[static_cast<std::size_t>(m)];
}

void conv3x3_backward(std::span<const double> in, std::span<const double> weight,
                      std::span<const double> dout, const ConvShape& sh,
                      std::span<double> din, std::span<double> dweight,
                      std::span<double> dbias, std::vector<double>& scratch) {
    const auto K = static_cast<Eigen::Index>(sh.cin * 9);
    const auto N = static_cast<Eigen::Index>(sh.out_height() * sh.out_width());
    const auto M = static_cast<Eigen::Index>(sh.cout);
    ConstMap g(dout.data(), M, N);
    // Fixed left-to-right summation order.
    for (Eigen::Index m = 0; m < M; ++m) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < N; ++j) s += g(m, j);
        dbias[static_cast<std::size_t>(m)] += s;
    }
    im2col(in, sh, scratch);
    {
        ConstMap col(scratch.data(), K, N);
        Map dw(dweight.data(), M, K);
        dw.noalias() += g * col.transpose();
    }
    if (din.empty()) return;
    ConstMap w(weight.data(), M, K);
    Map dcol(scratch.data(), K, N);
    dcol.noalias() = w.transpose() * g;
    col2im(scratch, sh, din);
}

void group_norm_forward(std::span<const double> x, std::size_t channels, std::size_t groups,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> y, GroupNormCache& cache) {
    const std::size_t hw = x.size() / channels;
    const std::size_t per_group = channels / groups;
    const std::size_t n = per_group * hw;
    cache.xhat.resize(x.size());
    cache.inv_std.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t off = g * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[off + i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[off + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kGroupNormEps);
        cache.inv_std[g] = inv;
        for (std::size_t i = 0; i < n; ++i) cache.xhat[off + i] = (x[off + i] - mean) * inv;
    }
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            y[c * hw + i] = gamma[c] * cache.xhat[c * hw + i] + beta[c];
}

void group_norm_backward(std::span<const double> dy, std::size_t channels, std::size_t groups,
                         std::span<const double> gamma, const GroupNormCache& cache,
                         std::span<double> dx, std::span<double> dgamma,
                         std::span<double> dbeta) {
    const std::size_t hw = dy.size() / channels;
    const std::size_t per_group = channels / groups;
    const std::size_t n = per_group * hw;
    for (std::size_t c = 0; c < channels; ++c) {
        double sg = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            sg += dy[c * hw + i] * cache.xhat[c * hw + i];
            sb += dy[c * hw + i];
        }
        dgamma[c] += sg;
        dbeta[c] += sb;
    }
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t off = g * n;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = dy[off + i] * gamma[(off + i) / hw];
            sum_d += d;
            sum_dx += d * cache.xhat[off + i];
        }
        const double inv = cache.inv_std[g];
        const double nn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = dy[off + i] * gamma[(off + i) / hw];
            dx[off + i] = inv / nn * (nn * d - sum_d - cache.xhat[off + i] * sum_dx);
        }
    }
}

void silu_forward(std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0 + std::exp(-x[i]));
}

void silu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        dx[i] = dy[i] * s * (1.0 + x[i] * (1.0 - s));
    }
}

void upsample2x_forward(std::span<const double> x, std::size_t channels, std::size_t height,
                        std::size_t width, std::span<double> y) {
    const std::size_t ow = 2 * width;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < 2 * height; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                y[(c * 2 * height + i) * ow + j] = x[(c * height + i / 2) * width + j / 2];
}

void upsample2x_backward(std::span<const double> dy, std::size_t channels, std::size_t height,
                         std::size_t width, std::span<double> dx) {
    const std::size_t ow = 2 * width;
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < 2 * height; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                dx[(c * height + i / 2) * width + j / 2] += dy[(c * 2 * height + i) * ow + j];
}

}  // namespace recat::nn
