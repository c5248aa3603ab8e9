#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace recat {

/// Philox4x32-10 block function. Stateless: output depends only on (key, counter).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer, used to fold stream identifiers into keys.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic stream addressed by (seed, stream ids). Two streams with
/// different ids are independent; the same ids always replay the same values,
/// regardless of which thread draws them or in which order streams are created.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

    std::uint64_t next_u64();
    std::uint32_t next_u32();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();
    void fill_normal(std::span<double> out);

private:
    void refill();

    std::array<std::uint32_t, 2> key_{};
    std::uint64_t stream_hi_ = 0;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace recat
