#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace vidfill {

// splitmix64 step, used to derive independent seeds from a root seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t n = 0) {
    return mix64(root ^ mix64(fnv1a(tag) ^ mix64(n)));
}

// Deterministic RNG. mt19937_64 is bit-portable; the distributions below are
// implemented explicitly so draws do not depend on the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(eng_() % span);
    }

    // Box-Muller; consumes exactly two engine draws per sample.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace vidfill
