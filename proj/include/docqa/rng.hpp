#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace docqa {

// splitmix64 finalizer; used to derive independent, reproducible streams
// (per question, per epoch, per layer) from one master seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(master ^ mix64(a ^ mix64(b)));
}

inline std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace docqa
