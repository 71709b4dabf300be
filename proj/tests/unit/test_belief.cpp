#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "rsmppi/belief.hpp"

using namespace rsmppi;
using P1 = Eigen::Matrix<double, 1, 1>;
using B1 = ParticleBelief<P1>;

namespace {
P1 p1(double x)
{
    P1 p;
    p << x;
    return p;
}
double normal_pdf(double x, double m, double s)
{
    const double d = (x - m) / s;
    return std::exp(-0.5 * d * d) / (s * std::sqrt(2.0 * M_PI));
}
}  // namespace

TEST(ParticleBelief, Validation)
{
    EXPECT_THROW(B1({}, {}), std::invalid_argument);
    EXPECT_THROW(B1({p1(0)}, {0.5}), std::invalid_argument);
    EXPECT_THROW(B1({p1(0), p1(1)}, {1.0}), std::invalid_argument);
    EXPECT_NO_THROW(B1({p1(0), p1(1)}, {0.3, 0.7}));
}

TEST(Update, GaussianLikelihoodReweighting)
{
    const B1 b = B1::uniform({p1(-1), p1(0), p1(2)});
    const double z = 0.5, s = 1.0;
    const auto r = update(b, [&](const P1& th) { return normal_pdf(z, th[0], s); });
    ASSERT_FALSE(r.degenerate);
    const double l0 = normal_pdf(z, -1, s), l1 = normal_pdf(z, 0, s), l2 = normal_pdf(z, 2, s);
    const double eta = l0 + l1 + l2;
    EXPECT_NEAR(r.belief.weights()[0], l0 / eta, 1e-12);
    EXPECT_NEAR(r.belief.weights()[1], l1 / eta, 1e-12);
    EXPECT_NEAR(r.belief.weights()[2], l2 / eta, 1e-12);
    // Particles do not move.
    EXPECT_EQ(r.belief.particles()[2][0], 2.0);
}

TEST(Update, ZeroLikelihoodKeepsPrior)
{
    const B1 b({p1(0), p1(1)}, {0.25, 0.75});
    const auto r = update(b, [](const P1&) { return 0.0; });
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.belief.weights(), b.weights());
}

TEST(Ess, HandValues)
{
    EXPECT_NEAR(ess(B1({p1(0), p1(1), p1(2)}, {0.5, 0.25, 0.25})), 1.0 / 0.375, 1e-12);
    EXPECT_NEAR(ess(B1::uniform({p1(0), p1(1), p1(2), p1(3)})), 4.0, 1e-12);
    EXPECT_NEAR(ess(B1({p1(0), p1(1)}, {1.0, 0.0})), 1.0, 1e-12);
}

TEST(Resample, SystematicCountsAreFloorOrCeil)
{
    const B1 b({p1(0), p1(1)}, {0.75, 0.25});
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Stream rng(seed);
        const B1 r = resample_systematic(b, rng);
        ASSERT_EQ(r.size(), 2u);
        int zeros = 0;
        for (const auto& p : r.particles()) zeros += p[0] == 0.0 ? 1 : 0;
        // 2 * 0.75 = 1.5 copies: one or two.
        EXPECT_TRUE(zeros == 1 || zeros == 2);
        EXPECT_NEAR(r.weights()[0], 0.5, 1e-15);
    }
    const B1 big(std::vector<P1>{p1(0), p1(1), p1(2), p1(3)}, {0.75, 0.25, 0.0, 0.0});
    Stream rng(4);
    const B1 r = resample_systematic(big, rng);
    std::map<double, int> counts;
    for (const auto& p : r.particles()) ++counts[p[0]];
    EXPECT_EQ(counts[0.0], 3);
    EXPECT_EQ(counts[1.0], 1);
}

TEST(Resample, PreservesMeanInExpectation)
{
    std::vector<P1> parts;
    std::vector<double> w;
    for (int i = 0; i < 50; ++i) {
        parts.push_back(p1(i));
        w.push_back(static_cast<double>(i + 1));
    }
    double tot = 0.0;
    for (double x : w) tot += x;
    for (double& x : w) x /= tot;
    const B1 b(parts, w);
    const double m = posterior_mean(b)[0];
    double acc = 0.0;
    const int reps = 400;
    for (int s = 0; s < reps; ++s) {
        Stream rng(1000 + s);
        acc += posterior_mean(resample_systematic(b, rng))[0];
    }
    EXPECT_NEAR(acc / reps, m, 0.1);
}

TEST(Posterior, MeanAndStd)
{
    const B1 b({p1(1), p1(2), p1(3)}, {0.2, 0.3, 0.5});
    EXPECT_NEAR(posterior_mean(b)[0], 2.3, 1e-12);
    const double var = 0.2 * 1.69 + 0.3 * 0.09 + 0.5 * 0.49;
    EXPECT_NEAR(posterior_stddev(b)[0], std::sqrt(var), 1e-12);
}

TEST(Sample, SkipsZeroWeightAndMatchesFrequencies)
{
    const B1 b({p1(0), p1(1), p1(2)}, {0.2, 0.0, 0.8});
    Stream rng(3);
    const auto d = sample(b, 20000, rng);
    int twos = 0;
    for (const auto& p : d) {
        ASSERT_NE(p[0], 1.0);
        twos += p[0] == 2.0 ? 1 : 0;
    }
    EXPECT_NEAR(twos / 20000.0, 0.8, 0.02);
}

TEST(InitGaussian, MomentsAndProjection)
{
    Stream rng(8);
    const auto b = init_gaussian(p1(5.0), p1(2.0), 20000, rng);
    EXPECT_NEAR(posterior_mean(b)[0], 5.0, 0.06);
    EXPECT_NEAR(posterior_stddev(b)[0], 2.0, 0.06);
    Stream rng2(8);
    const auto c = init_gaussian(p1(0.0), p1(1.0), 1000, rng2, [](P1 p) {
        p[0] = std::max(p[0], 0.0);
        return p;
    });
    for (const auto& p : c.particles()) EXPECT_GE(p[0], 0.0);
    Stream rng3(1);
    EXPECT_THROW(init_gaussian(p1(0.0), p1(-1.0), 10, rng3), std::invalid_argument);
}

TEST(FilterStep, ResamplesBelowThreshold)
{
    const B1 b = B1::uniform({p1(-10), p1(0), p1(10), p1(20)});
    Stream rng(2);
    const auto sharp = filter_step(b, [](const P1& th) { return normal_pdf(0.0, th[0], 1.0); }, 2.0, rng);
    EXPECT_TRUE(sharp.resampled);
    EXPECT_LT(sharp.ess_after_update, 2.0);
    for (const auto& p : sharp.belief.particles()) EXPECT_EQ(p[0], 0.0);
    Stream rng2(2);
    const auto flat = filter_step(b, [](const P1&) { return 1.0; }, 2.0, rng2);
    EXPECT_FALSE(flat.resampled);
    EXPECT_NEAR(flat.ess_after_update, 4.0, 1e-12);
}
