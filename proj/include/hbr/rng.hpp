#pragma once

#include <cstdint>

namespace hbr {

/// SplitMix64 (Steele, Lea and Flood). The stream is fixed by the seed on
/// every platform; seed 0 starts 0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4,
/// 0x06c45d188009454f.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    /// Top 53 bits scaled to [0, 1).
    double uniform();
    double uniform(double a, double b);
    /// exp of a uniform draw on [log a, log b].
    double log_uniform(double a, double b);

private:
    std::uint64_t state_;
};

} // namespace hbr
