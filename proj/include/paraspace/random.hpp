#pragma once

#include <cstdint>

namespace paraspace {

/// Counter-based generator: the k-th draw of a stream is the SplitMix64
/// finalizer applied to seed + (k + 1) * golden gamma. Streams are split by
/// deriving a child seed, so results depend only on (seed, draw index).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() noexcept {
        ++counter_;
        return mix(seed_ + counter_ * kGamma);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform();
    }

    /// Independent stream keyed by `stream`.
    CounterRng split(std::uint64_t stream) const noexcept {
        return CounterRng(mix(seed_ ^ mix(stream + kGamma)));
    }

    std::uint64_t draws() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace paraspace
