#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "recat/grid.hpp"
#include "recat/rng.hpp"

namespace recat::test {

inline LatentGrid random_grid(CounterRng& rng, std::size_t c, std::size_t h, std::size_t w,
                              double scale = 1.0) {
    LatentGrid g(c, h, w);
    for (auto& v : g.data()) v = scale * rng.normal();
    return g;
}

inline LatentGrid random_grid(std::uint64_t seed, std::size_t c, std::size_t h, std::size_t w,
                              double scale = 1.0) {
    CounterRng rng(seed, {0x7e57});
    return random_grid(rng, c, h, w, scale);
}

inline RegionMask random_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
    CounterRng rng(seed, {0x3a5c});
    LatentGrid g(1, h, w);
    for (auto& v : g.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    return RegionMask(g);
}

inline DuoGrid random_duo(std::uint64_t seed, std::size_t c, std::size_t rh, std::size_t w) {
    return DuoGrid(random_grid(seed, c, 2 * rh, w), rh);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

/// Central difference of f at x along coordinate `value`.
inline double central_diff(double& value, double h, const std::function<double()>& f) {
    const double x0 = value;
    value = x0 + h;
    const double fp = f();
    value = x0 - h;
    const double fm = f();
    value = x0;
    return (fp - fm) / (2.0 * h);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace recat::test
