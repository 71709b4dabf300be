#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "rsmppi/random.hpp"

using rsmppi::Stream;

TEST(Stream, SameSeedSameSequence)
{
    Stream a(7), b(7);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Stream, DifferentSeedsDiffer)
{
    Stream a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i) equal += a() == b() ? 1 : 0;
    EXPECT_EQ(equal, 0);
}

TEST(Stream, SplitDoesNotAdvanceParent)
{
    Stream a(3), b(3);
    (void)a.split(10);
    (void)a.split(11, 12);
    EXPECT_EQ(a(), b());
}

TEST(Stream, SplitIsOrderIndependent)
{
    const Stream root(5);
    Stream first = root.split(1);
    Stream second = root.split(2);
    const auto x2 = second();
    const auto x1 = first();
    EXPECT_EQ(root.split(1)(), x1);
    EXPECT_EQ(root.split(2)(), x2);
    EXPECT_NE(x1, x2);
}

TEST(Stream, VariadicSplitMatchesChain)
{
    const Stream root(9);
    EXPECT_EQ(root.split(4, 5, 6).key(), root.split(4).split(5).split(6).key());
}

TEST(Stream, UniformInUnitInterval)
{
    Stream s(11);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Stream, NormalMoments)
{
    Stream s(13);
    const int n = 200000;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m1 += z;
        m2 += z * z;
    }
    m1 /= n;
    m2 /= n;
    EXPECT_NEAR(m1, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(m2, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Fnv1a, KnownVectors)
{
    EXPECT_EQ(rsmppi::fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(rsmppi::fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(rsmppi::fnv1a("foobar"), 0x85944171f73967e8ull);
}
