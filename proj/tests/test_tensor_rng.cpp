#include <gtest/gtest.h>

#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

using namespace anomaly;

TEST(Tensor, ShapeMatchesData) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, MismatchedShapeThrows) {
    EXPECT_THROW(Tensor({2, 3}, {1, 2, 3}), ValidationError);
    EXPECT_THROW(Tensor({0, 3}, {}), ValidationError);
}

TEST(Tensor, Rank3Indexing) {
    Tensor t({2, 2, 2});
    t.at(1, 0, 1) = 7.0;
    EXPECT_EQ(t.data[5], 7.0);
}

TEST(Tensor, FiniteCheck) {
    Tensor t({2}, {1.0, 2.0});
    EXPECT_TRUE(t.all_finite());
    t.data[1] = std::nan("");
    EXPECT_FALSE(t.all_finite());
    EXPECT_THROW(t.require_finite("probe"), ValidationError);
}

TEST(Rng, DeterministicStream) {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, Uniform01Bounds) {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double v = r.uniform01();
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(99);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal01();
        sum += v;
        sq += v * v;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, MixSeedSpreads) {
    // derived seeds must differ across indices
    EXPECT_NE(mix_seed(42, 0), mix_seed(42, 1));
    EXPECT_NE(mix_seed(42, 0), mix_seed(43, 0));
}
