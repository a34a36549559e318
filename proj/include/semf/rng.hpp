#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semf::rng {

// Splittable seeding: a master seed plus a (tag, index) pair maps to an
// independent substream, so adding a new stage never perturbs existing ones.

std::uint64_t mix(std::uint64_t x);
std::uint64_t deriveSeed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);
std::mt19937_64 makeStream(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);

}  // namespace semf::rng
