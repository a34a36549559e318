#include "semf/rng.hpp"

namespace semf::rng {

std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t deriveSeed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix(mix(master ^ h) ^ index);
}

std::mt19937_64 makeStream(std::uint64_t master, std::string_view tag, std::uint64_t index) {
    return std::mt19937_64(deriveSeed(master, tag, index));
}

}  // namespace semf::rng
