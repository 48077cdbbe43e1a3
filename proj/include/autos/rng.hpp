#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace autos {

// FNV-1a, used to fan a master seed out into named streams so that
// ablation modes draw identical randomness where they share stages.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::mt19937_64 make_stream(std::uint64_t master_seed, std::string_view name) {
    std::uint64_t h = fnv1a(name);
    h ^= master_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return std::mt19937_64(h);
}

}  // namespace autos
