#include "hbr/rng.hpp"

#include <cmath>

namespace hbr {

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::uniform(double a, double b) { return a + (b - a) * uniform(); }

double SplitMix64::log_uniform(double a, double b) { return std::exp(uniform(std::log(a), std::log(b))); }

} // namespace hbr
