#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "stance/common.hpp"

using namespace stance;

TEST(HashBytes, MatchesIndependentImplementation) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::string s(static_cast<std::size_t>(rng.below(40)), '\0');
        for (auto& ch : s) ch = static_cast<char>(rng.below(256));
        const std::uint64_t seed = rng.next();
        EXPECT_EQ(hash_bytes(s, seed), oracle::fnv_hash(s, seed));
    }
    EXPECT_NE(hash_bytes("abc", 1), hash_bytes("abc", 2));
}

TEST(Rng, SplitmixReferenceStream) {
    Rng rng(0);
    EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
}

TEST(DeriveSeed, DeterministicAndTagSensitive) {
    EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
    std::set<std::uint64_t> seen{derive_seed(7, {1, 2}), derive_seed(7, {2, 1}), derive_seed(8, {1, 2}),
                                 derive_seed(7, {1}), derive_seed(7, {1, 2, 0})};
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
    Rng rng(3);
    EXPECT_EQ(rng.below(1), 0u);
    std::vector<std::size_t> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++hist[v];
    }
    for (auto h : hist) EXPECT_NEAR(static_cast<double>(h), 10000.0, 500.0);
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.between(-2, 2);
        EXPECT_GE(v, -2);
        EXPECT_LE(v, 2);
    }
}

TEST(Rng, ShuffleIsPermutation) {
    Rng rng(5);
    auto v = iota_indices(50);
    const auto orig = v;
    rng.shuffle(v);
    EXPECT_NE(v, orig);
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, orig);
}

TEST(Rng, CategoricalFollowsWeights) {
    Rng rng(9);
    const std::vector<double> w{1.0, 0.0, 3.0};
    std::vector<std::size_t> hist(3, 0);
    for (int i = 0; i < 40000; ++i) ++hist[rng.categorical(w)];
    EXPECT_EQ(hist[1], 0u);
    EXPECT_NEAR(static_cast<double>(hist[2]) / static_cast<double>(hist[0]), 3.0, 0.15);
}

TEST(Hex64, ZeroPadded) {
    EXPECT_EQ(hex64(0), "0000000000000000");
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
    EXPECT_EQ(hex64(~0ULL), "ffffffffffffffff");
}

TEST(StanceName, Canonical) {
    EXPECT_EQ(stance_name(Stance::Favor), "FAVOR");
    EXPECT_EQ(stance_name(Stance::Against), "AGAINST");
    EXPECT_EQ(stance_name(Stance::None), "NONE");
}
