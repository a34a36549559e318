#include <set>
#include <vector>

#include "doctest.h"
#include "semf/rng.hpp"

using namespace semf;

TEST_CASE("derived seeds are deterministic") {
    CHECK(rng::deriveSeed(42, "train", 3) == rng::deriveSeed(42, "train", 3));
    CHECK(rng::deriveSeed(42, "train", 3) != rng::deriveSeed(42, "train", 4));
    CHECK(rng::deriveSeed(42, "train", 3) != rng::deriveSeed(43, "train", 3));
    CHECK(rng::deriveSeed(42, "train", 3) != rng::deriveSeed(42, "infer", 3));
}

TEST_CASE("streams with the same key replay the same draws") {
    auto a = rng::makeStream(7, "sample", 11);
    auto b = rng::makeStream(7, "sample", 11);
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("distinct tags give effectively independent streams") {
    std::set<std::uint64_t> first_draws;
    for (int i = 0; i < 64; ++i) first_draws.insert(rng::makeStream(0, "tag", i)());
    CHECK(first_draws.size() == 64);

    std::set<std::uint64_t> seeds;
    for (const char* tag : {"init", "sample", "monitor", "infer", "encoder", "decoder"})
        for (std::uint64_t idx = 0; idx < 8; ++idx) seeds.insert(rng::deriveSeed(5, tag, idx));
    CHECK(seeds.size() == 48);
}

TEST_CASE("empty and long tags both hash") {
    CHECK(rng::deriveSeed(1, "", 0) != rng::deriveSeed(1, "", 1));
    const std::string long_tag(10000, 'x');
    CHECK(rng::deriveSeed(1, long_tag, 0) != rng::deriveSeed(1, long_tag + "y", 0));
}
