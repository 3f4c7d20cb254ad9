#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include <netcusum/simgen.hpp>

using namespace netcusum;

namespace
{

Vector vec(std::initializer_list<double> v)
{
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v)
        out(i++) = x;
    return out;
}

double lag1_autocorr(const std::vector<double>& x)
{
    double mean = 0.0;
    for (double v : x)
        mean += v;
    mean /= static_cast<double>(x.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        if (i + 1 < x.size())
            num += (x[i] - mean) * (x[i + 1] - mean);
    }
    return num / den;
}

} // namespace

TEST(Multinomial, EmptyAndDegenerate)
{
    Rng rng(1);
    EXPECT_TRUE(multinomial_sample(0, vec({0.3, 0.7}), rng).isZero());
    const auto c = multinomial_sample(100, vec({1.0, 0.0}), rng);
    EXPECT_EQ(c(0), 100);
    EXPECT_EQ(c(1), 0);
}

TEST(Multinomial, Errors)
{
    Rng rng(1);
    EXPECT_THROW(multinomial_sample(-1, vec({0.5, 0.5}), rng), Error);
    EXPECT_THROW(multinomial_sample(5, vec({0.6, 0.6}), rng), Error);
    EXPECT_THROW(multinomial_sample(5, vec({1.2, -0.2}), rng), Error);
}

TEST(Multinomial, FirstMoment)
{
    Rng rng(7);
    const auto c = multinomial_sample(1000000, vec({0.45, 0.55}), rng);
    EXPECT_EQ(c.sum(), 1000000);
    EXPECT_LE(std::abs(static_cast<double>(c(0)) - 450000.0), 3.0 * std::sqrt(1e6 * 0.45 * 0.55));
}

TEST(Multinomial, ExactDistributionForTwoTrials)
{
    Rng rng(11);
    const int draws = 100000;
    std::map<std::int64_t, int> hits;
    for (int i = 0; i < draws; ++i)
        ++hits[multinomial_sample(2, vec({0.5, 0.5}), rng)(0)];
    const std::map<std::int64_t, double> exact{{0, 0.25}, {1, 0.5}, {2, 0.25}};
    for (const auto& [k, p] : exact) {
        const double sd = std::sqrt(draws * p * (1 - p));
        EXPECT_LE(std::abs(hits[k] - draws * p), 3.0 * sd) << k;
    }
}

TEST(Multinomial, ThreeCategoriesSumToTotal)
{
    Rng rng(3);
    for (int n : {1, 7, 50, 999}) {
        const auto c = multinomial_sample(n, vec({0.2, 0.3, 0.5}), rng);
        EXPECT_EQ(c.sum(), n);
        EXPECT_TRUE((c.array() >= 0).all());
    }
}

TEST(Generator, ProbabilityFixedPointWithoutNoise)
{
    for (auto cond : {Condition::II, Condition::Double}) {
        ScenarioConfig cfg;
        cfg.condition = cond;
        cfg.prob_noise_var = 0.0;
        cfg.total_noise_var = 0.0;
        Generator g(cfg, Rng(1));
        for (int t = 0; t < 100; ++t) {
            g.step();
            EXPECT_DOUBLE_EQ(g.state().p11, 0.45);
            EXPECT_DOUBLE_EQ(g.state().p22, 0.05);
            EXPECT_EQ(g.state().totals[0], 100);
        }
    }
}

TEST(Generator, TotalsFixedPointWithoutNoise)
{
    ScenarioConfig cfg;
    cfg.condition = Condition::III;
    cfg.initial_totals = {100, 500};
    cfg.total_noise_var = 0.0;
    Generator g(cfg, Rng(1));
    for (int t = 0; t < 100; ++t) {
        const auto s = g.step();
        EXPECT_EQ(s.row_total(0), 100);
        EXPECT_EQ(s.row_total(1), 500);
    }
}

TEST(Generator, ConditionOneNoiseMeanFollowsShift)
{
    ScenarioConfig cfg;
    cfg.condition = Condition::I;
    cfg.count_noise_var = 0.0;
    Generator g(inject_shift(cfg, 0.40), Rng(1));
    for (int t = 0; t < 60; ++t)
        g.step();
    // Noise-free recursion converges to the floor fixed point just below the noise mean.
    EXPECT_NEAR(g.state().counts[0][0], 40.0, 1.0);
    EXPECT_NEAR(g.state().counts[0][1], 60.0, 1.0);
}

TEST(Generator, Reproducible)
{
    for (auto cond : {Condition::I, Condition::II, Condition::III, Condition::Double, Condition::RowCorr}) {
        ScenarioConfig cfg;
        cfg.condition = cond;
        Generator a(cfg, make_stream(5, 3, 1));
        Generator b(cfg, make_stream(5, 3, 1));
        Generator c(cfg, make_stream(5, 4, 1));
        bool differs = false;
        for (int t = 0; t < 200; ++t) {
            const auto x = a.step();
            EXPECT_EQ(x, b.step());
            differs = differs || !(x == c.step());
        }
        EXPECT_TRUE(differs) << condition_name(cond);
    }
}

TEST(Generator, ClampsAndNonnegativeCounts)
{
    for (auto cond : {Condition::I, Condition::II, Condition::III, Condition::Double, Condition::RowCorr}) {
        ScenarioConfig cfg;
        cfg.condition = cond;
        cfg.prob_noise_var = 0.01;
        cfg.initial_totals = {100, 30};
        Generator g(cfg, Rng(9));
        for (int t = 0; t < 5000; ++t) {
            const auto s = g.step();
            ASSERT_TRUE((s.counts().array() >= 0).all());
            ASSERT_GE(g.state().p11, 0.0);
            ASSERT_LE(g.state().p11, 1.0);
            ASSERT_GE(g.state().p22, 0.0);
            ASSERT_LE(g.state().p22, 1.0);
        }
    }
}

TEST(Generator, StationaryVariantKeepsItsMean)
{
    ScenarioConfig cfg;
    cfg.noise_center = NoiseCenter::Stationary;
    Generator g(cfg, Rng(21));
    double sum = 0.0;
    for (int t = 0; t < 100000; ++t) {
        g.step();
        sum += g.state().p11;
    }
    EXPECT_NEAR(sum / 100000.0, 0.45, 0.02);
}

TEST(Generator, AsWrittenRecursionIsMeanPreservingAcrossReplications)
{
    ScenarioConfig cfg;
    double sum = 0.0;
    const int reps = 2000;
    for (int r = 0; r < reps; ++r) {
        Generator g(cfg, make_stream(1, static_cast<std::uint64_t>(r), 0));
        for (int t = 0; t < 200; ++t)
            g.step();
        sum += g.state().p11;
    }
    EXPECT_NEAR(sum / reps, 0.45, 0.02);
}

TEST(Generator, RowTwoMoreAutocorrelatedThanRowOne)
{
    ScenarioConfig cfg;
    cfg.noise_center = NoiseCenter::Stationary;
    Generator g(cfg, Rng(4));
    std::vector<double> p11, p22;
    for (int t = 0; t < 20000; ++t) {
        g.step();
        p11.push_back(g.state().p11);
        p22.push_back(g.state().p22);
    }
    const double r1 = lag1_autocorr(p11);
    const double r2 = lag1_autocorr(p22);
    EXPECT_GT(r2, r1);
    EXPECT_NEAR(r1, 0.5, 0.05);
    EXPECT_NEAR(r2, 0.9, 0.05);
}

TEST(Generator, CorrelatedRowsTrackRowOne)
{
    ScenarioConfig cfg;
    cfg.condition = Condition::RowCorr;
    cfg.prob_noise_var = 0.0;
    Generator g(cfg, Rng(2));
    g.step();
    EXPECT_NEAR(g.state().p22, 0.9 * 0.45 + 0.1 * 0.45, 1e-15);
}

TEST(Generator, RetargetMovesTheCurrentProbability)
{
    ScenarioConfig cfg;
    cfg.prob_noise_var = 0.0;
    Generator g(cfg, Rng(2));
    g.step();
    g.retarget(inject_shift(cfg, 0.40));
    EXPECT_NEAR(g.state().p11, 0.40, 1e-15);
    EXPECT_NEAR(g.state().p22, 0.05, 1e-15);
}

TEST(InjectShift, Examples)
{
    ScenarioConfig cfg;
    const auto same = inject_shift(cfg, 0.45);
    EXPECT_EQ(same.true_mu11, 0.45);
    EXPECT_EQ(same.true_mu22, cfg.true_mu22);
    EXPECT_EQ(inject_shift(cfg, 0.40).true_mu11, 0.40);
    EXPECT_THROW(inject_shift(cfg, 1.0), Error);
    EXPECT_THROW(inject_shift(cfg, 0.0), Error);
}

TEST(Scenario, LabelsAndConditions)
{
    ScenarioConfig cfg;
    cfg.initial_totals = {100, 30};
    EXPECT_EQ(cfg.label(), "II(100/30)");
    for (auto c : {Condition::I, Condition::II, Condition::III, Condition::Double, Condition::RowCorr})
        EXPECT_EQ(parse_condition(condition_name(c)), c);
    EXPECT_THROW(parse_condition("IV"), Error);
    cfg.initial_totals = {0, 10};
    EXPECT_THROW(cfg.validate(), Error);
}
