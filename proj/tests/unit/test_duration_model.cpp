#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "opera/duration_model.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace opera;
using opera::testing::oracle_allocate_grid;

namespace {

NoteSpan span_of(std::int64_t t, std::vector<std::pair<double, double>> mean_std) {
    NoteSpan s;
    s.total_frames = t;
    int i = 0;
    for (auto [m, sd] : mean_std) s.distributions.push_back(single_gaussian("p" + std::to_string(i++), m, sd));
    return s;
}

std::int64_t sum(const std::vector<std::int64_t>& v) { return std::accumulate(v.begin(), v.end(), std::int64_t{0}); }

}  // namespace

TEST(SelectMaxWeight, PicksHeaviestComponent) {
    PhonemeDurationDistribution d{"a", {{0.7, 10, 2}, {0.3, 30, 5}}};
    auto g = select_max_weight_component(d);
    EXPECT_EQ(g.mean, 10);
    EXPECT_EQ(g.std, 2);
}

TEST(SelectMaxWeight, TieGoesToLowestIndex) {
    PhonemeDurationDistribution d{"a", {{0.5, 8, 1.5}, {0.5, 12, 4}}};
    auto g = select_max_weight_component(d);
    EXPECT_EQ(g.mean, 8);
    EXPECT_EQ(g.std, 1.5);
}

TEST(SelectMaxWeight, SingleComponent) {
    auto g = select_max_weight_component(single_gaussian("a", 17, 3));
    EXPECT_EQ(g.mean, 17);
    EXPECT_EQ(g.std, 3);
}

TEST(MixtureLogLikelihood, StandardNormalPeak) {
    PhonemeDurationDistribution d{"a", {{1.0, 0.0, 1.0}}};
    EXPECT_NEAR(mixture_log_likelihood(d, 0.0), -0.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(mixture_log_likelihood(d, 0.0), -0.9189, 1e-4);
}

TEST(MixtureLogLikelihood, IdenticalComponentsCollapse) {
    PhonemeDurationDistribution one{"a", {{1.0, 12.0, 3.0}}};
    PhonemeDurationDistribution two{"a", {{0.5, 12.0, 3.0}, {0.5, 12.0, 3.0}}};
    for (double d : {0.0, 5.0, 12.0, 40.0}) EXPECT_NEAR(mixture_log_likelihood(two, d), mixture_log_likelihood(one, d), 1e-12);
}

TEST(MixtureLogLikelihood, MatchesNaiveDensitySum) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        auto dist = opera::testing::random_distribution(rng, {});
        // Keep d where a plain density sum does not underflow.
        double lo = 1e9, hi = -1e9;
        for (const auto& c : dist.components) {
            lo = std::min(lo, c.mean_frames - 4 * c.std_frames);
            hi = std::max(hi, c.mean_frames + 4 * c.std_frames);
        }
        const double d = std::uniform_real_distribution<double>(lo, hi)(rng);
        const double naive = std::log(opera::testing::naive_mixture_density(dist, d));
        EXPECT_NEAR(mixture_log_likelihood(dist, d), naive, 1e-9) << "case " << i;
    }
}

TEST(MixtureLogLikelihood, StableFarInTheTail) {
    PhonemeDurationDistribution d{"a", {{0.5, 10.0, 1.0}, {0.5, 20.0, 1.0}}};
    const double v = mixture_log_likelihood(d, 1000.0);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, std::log(0.5) + gaussian_log_pdf(1000.0, 20.0, 1.0), 1e-9);
}

TEST(MixtureLogLikelihood, ZeroStdIsDegenerate) {
    PhonemeDurationDistribution d{"a", {{1.0, 10.0, 0.0}}};
    EXPECT_THROW(mixture_log_likelihood(d, 10.0), DegenerateComponent);
}

TEST(Quantize, StandardRounding) {
    std::vector<double> r{12.4, 27.6};
    EXPECT_EQ(quantize_to_frames(r, 40), (std::vector<std::int64_t>{12, 28}));
}

TEST(Quantize, TieGoesToEarlierIndex) {
    std::vector<double> r{10.5, 10.5};
    EXPECT_EQ(quantize_to_frames(r, 21), (std::vector<std::int64_t>{11, 10}));
}

TEST(Quantize, Identity) {
    std::vector<double> r{1.0};
    EXPECT_EQ(quantize_to_frames(r, 1), (std::vector<std::int64_t>{1}));
}

TEST(Quantize, SumAndFloorProperty) {
    std::mt19937_64 rng(11);
    for (int c = 0; c < 2000; ++c) {
        std::uniform_int_distribution<int> nd(1, 8);
        const int n = nd(rng);
        std::uniform_int_distribution<int> td(n, 400);
        const int t = td(rng);
        std::vector<double> w(n);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& x : w) x = u(rng);
        const double ws = std::accumulate(w.begin(), w.end(), 0.0);
        std::vector<double> real(n);
        for (int i = 0; i < n; ++i) real[i] = 1.0 + (t - n) * w[i] / ws;
        auto q = quantize_to_frames(real, t);
        EXPECT_EQ(sum(q), t);
        for (int i = 0; i < n; ++i) {
            EXPECT_GE(q[i], 1);
            EXPECT_LT(std::abs(q[i] - real[i]), 1.0);
        }
    }
}

TEST(Lagrange, SinglePhonemeAbsorbsNote) {
    auto r = allocate_lagrange(span_of(50, {{30, 5}}));
    EXPECT_DOUBLE_EQ(r.alpha, 0.8);
    EXPECT_DOUBLE_EQ(r.durations_real[0], 50.0);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{50}));
}

TEST(Lagrange, TwoPhonemeClosedForm) {
    auto r = allocate_lagrange(span_of(40, {{10, 1}, {20, 2}}));
    EXPECT_DOUBLE_EQ(r.alpha, 2.0);
    EXPECT_DOUBLE_EQ(r.durations_real[0], 12.0);
    EXPECT_DOUBLE_EQ(r.durations_real[1], 28.0);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{12, 28}));
}

TEST(Lagrange, TwoPhonemeMatchesBruteForceLine) {
    // d1 over (0, 40) in steps of 0.001, d2 = 40 - d1.
    double best = -1e300, arg = 0.0;
    for (int k = 1; k < 40000; ++k) {
        const double d1 = k * 0.001;
        const double v = gaussian_log_pdf(d1, 10, 1) + gaussian_log_pdf(40 - d1, 20, 2);
        if (v > best) {
            best = v;
            arg = d1;
        }
    }
    auto r = allocate_lagrange(span_of(40, {{10, 1}, {20, 2}}));
    EXPECT_NEAR(r.durations_real[0], arg, 0.01);
    EXPECT_NEAR(r.durations_real[1], 40 - arg, 0.01);
}

TEST(Lagrange, ZeroResidual) {
    for (double sd : {0.5, 1.0, 3.0, 7.5}) {
        auto r = allocate_lagrange(span_of(30, {{10, sd}, {20, 2 * sd}}));
        EXPECT_EQ(r.alpha, 0.0);
        EXPECT_EQ(r.durations_real, (std::vector<double>{10.0, 20.0}));
        EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{10, 20}));
    }
}

TEST(Lagrange, InfeasibleNote) {
    EXPECT_THROW(allocate_lagrange(span_of(2, {{5, 1}, {5, 1}, {5, 1}})), InfeasibleNote);
    EXPECT_THROW(allocate_lagrange(NoteSpan{5, {}}), InfeasibleNote);
}

TEST(Lagrange, AllZeroStdFallsBackToProportional) {
    auto r = allocate_lagrange(span_of(60, {{10, 0}, {20, 0}}));
    EXPECT_TRUE(r.proportional_fallback);
    EXPECT_DOUBLE_EQ(r.durations_real[0], 20.0);
    EXPECT_DOUBLE_EQ(r.durations_real[1], 40.0);
}

TEST(Lagrange, ZeroStdPhonemeKeepsItsMean) {
    auto r = allocate_lagrange(span_of(50, {{10, 0}, {20, 3}}));
    EXPECT_FALSE(r.proportional_fallback);
    EXPECT_DOUBLE_EQ(r.durations_real[0], 10.0);
    EXPECT_DOUBLE_EQ(r.durations_real[1], 40.0);
}

TEST(ProportionalFit, UniformWhenWeightsAreZero) {
    std::vector<double> w{0.0, 0.0, 0.0};
    auto d = duration_detail::proportional_fit(w, 12.0);
    EXPECT_EQ(d, (std::vector<double>{4.0, 4.0, 4.0}));
}

TEST(Lagrange, ClampsAndRedistributes) {
    // Compressing a long note: the high-variance phoneme would go negative.
    auto r = allocate_lagrange(span_of(12, {{10, 1}, {40, 10}, {5, 1}}));
    ASSERT_EQ(r.clamped_indices, (std::vector<std::size_t>{1}));
    EXPECT_EQ(r.durations_real[1], 1.0);
    // Remaining 11 frames solved over the other two with equal variance.
    EXPECT_NEAR(r.durations_real[0], 8.0, 1e-12);
    EXPECT_NEAR(r.durations_real[2], 3.0, 1e-12);
    EXPECT_EQ(sum(r.durations_frames), 12);
    EXPECT_EQ(r.iterations, 2);
}

TEST(Lagrange, EqualVarianceSplitsResidualEqually) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> mean(5, 40), sd(1, 6);
    std::uniform_int_distribution<int> md(2, 6), res(-10, 40);
    for (int c = 0; c < 300; ++c) {
        const int m = md(rng);
        const double s = sd(rng);
        std::vector<std::pair<double, double>> ms;
        double mu = 0.0;
        for (int i = 0; i < m; ++i) {
            ms.push_back({mean(rng), s});
            mu += ms.back().first;
        }
        const auto t = std::llround(mu) + res(rng);
        auto span = span_of(t, ms);
        auto r = allocate_lagrange(span);
        if (!r.clamped_indices.empty()) continue;
        const double share = (t - mu) / m;
        for (int i = 0; i < m; ++i) EXPECT_NEAR(r.durations_real[i] - ms[i].first, share, 1e-9);
    }
}

TEST(Lagrange, PermutationEquivariance) {
    std::mt19937_64 rng(5);
    for (int c = 0; c < 300; ++c) {
        auto span = opera::testing::random_span(rng);
        auto base = allocate_lagrange(span);
        std::vector<std::size_t> perm(span.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        NoteSpan shuffled{span.total_frames, {}};
        for (auto p : perm) shuffled.distributions.push_back(span.distributions[p]);
        auto r = allocate_lagrange(shuffled);
        for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(r.durations_real[i], base.durations_real[perm[i]], 1e-9);
    }
}

TEST(Lagrange, VarianceMonotonicity) {
    std::mt19937_64 rng(9);
    for (int c = 0; c < 300; ++c) {
        auto span = opera::testing::random_unclamped_span(rng);
        if (span.size() < 2) continue;
        auto r = allocate_lagrange(span);
        if (r.alpha == 0.0 || !r.clamped_indices.empty()) continue;
        std::uniform_int_distribution<std::size_t> jd(0, span.size() - 1);
        const auto j = jd(rng);
        auto bigger = span;
        const auto g = select_max_weight_component(span.distributions[j]);
        bigger.distributions[j] = single_gaussian("p", g.mean, g.std * 1.5);
        auto r2 = allocate_lagrange(bigger);
        if (!r2.clamped_indices.empty()) continue;
        EXPECT_GT(std::abs(r2.durations_real[j] - g.mean), std::abs(r.durations_real[j] - g.mean)) << "case " << c;
    }
}

TEST(Lagrange, ClampTerminationAndFloor) {
    std::mt19937_64 rng(13);
    opera::testing::SpanGenOptions o;
    o.max_phonemes = 8;
    o.min_std = 0.0;
    o.max_std = 20.0;
    std::uniform_int_distribution<int> shrink(0, 3);
    for (int c = 0; c < 2000; ++c) {
        auto span = opera::testing::random_span(rng, o);
        // Frequently squeeze hard to force clamping.
        if (shrink(rng) == 0) span.total_frames = static_cast<std::int64_t>(span.size()) + shrink(rng);
        auto r = allocate_lagrange(span);
        EXPECT_LE(r.iterations, static_cast<int>(span.size()));
        EXPECT_EQ(sum(r.durations_frames), span.total_frames);
        for (std::size_t i = 0; i < span.size(); ++i) {
            EXPECT_GE(r.durations_frames[i], 1);
            EXPECT_GE(r.durations_real[i], 1.0 - 1e-9);
        }
        EXPECT_NEAR(std::accumulate(r.durations_real.begin(), r.durations_real.end(), 0.0),
                    static_cast<double>(span.total_frames), 1e-6);
    }
}

TEST(Lagrange, ConstraintExactnessAllAllocators) {
    std::mt19937_64 rng(17);
    for (int c = 0; c < 1000; ++c) {
        auto span = opera::testing::random_span(rng);
        const auto p = default_primary_index(span.size());
        EXPECT_EQ(sum(allocate_lagrange(span).durations_frames), span.total_frames);
        EXPECT_EQ(sum(allocate_fitting_heuristic(span, p).durations_frames), span.total_frames);
    }
}

TEST(GridOracle, TwoPhonemeCase) {
    auto o = oracle_allocate_grid(span_of(40, {{10, 1}, {20, 2}}), 0.001);
    EXPECT_NEAR(o.durations[0], 12.0, 0.001);
    EXPECT_NEAR(o.durations[1], 28.0, 0.001);
}

TEST(GridOracle, SinglePhoneme) {
    auto o = oracle_allocate_grid(span_of(33, {{20, 4}}), 0.001);
    EXPECT_EQ(o.durations, (std::vector<double>{33.0}));
}

TEST(GridOracle, ZeroResidualReturnsMeans) {
    auto o = oracle_allocate_grid(span_of(45, {{10, 2}, {20, 3}, {15, 1.5}}), 0.001);
    EXPECT_NEAR(o.durations[0], 10.0, 0.001);
    EXPECT_NEAR(o.durations[1], 20.0, 0.001);
    EXPECT_NEAR(o.durations[2], 15.0, 0.001);
}

TEST(GridOracle, RejectsInfeasible) {
    EXPECT_THROW(oracle_allocate_grid(span_of(1, {{5, 1}, {5, 1}}), 0.01), InfeasibleNote);
}

TEST(Lagrange, AgreesWithGridOracle) {
    std::mt19937_64 rng(21);
    constexpr double kStep = 0.001;
    for (int c = 0; c < 200; ++c) {
        auto span = opera::testing::random_unclamped_span(rng);
        auto r = allocate_lagrange(span);
        ASSERT_TRUE(r.clamped_indices.empty());
        auto o = oracle_allocate_grid(span, kStep);
        for (std::size_t i = 0; i < span.size(); ++i)
            EXPECT_NEAR(r.durations_real[i], o.durations[i], 2 * kStep) << "case " << c << " phoneme " << i;
        EXPECT_GE(constrained_log_likelihood(span, r.durations_real), o.log_likelihood - 1e-6);
    }
}

TEST(FittingHeuristic, ConsonantKeepsMeanVowelAbsorbs) {
    auto r = allocate_fitting_heuristic(span_of(40, {{5, 1}, {20, 4}}), 1);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{5, 35}));
    EXPECT_FALSE(r.proportional_fallback);
}

TEST(FittingHeuristic, ResidualEqualsMean) {
    auto r = allocate_fitting_heuristic(span_of(25, {{5, 1}, {20, 4}}), 1);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{5, 20}));
}

TEST(FittingHeuristic, ProportionalFallback) {
    auto r = allocate_fitting_heuristic(span_of(12, {{30, 1}, {10, 4}}), 1);
    EXPECT_TRUE(r.proportional_fallback);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{9, 3}));
}

TEST(FittingHeuristic, SinglePhonemeAbsorbs) {
    auto r = allocate_fitting_heuristic(span_of(77, {{30, 5}}), default_primary_index(1));
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{77}));
}

TEST(FittingHeuristic, StretchBoundAndReserve) {
    FittingHeuristicOptions o;
    o.r0 = 0.5;
    auto r = allocate_fitting_heuristic(span_of(40, {{10, 1}, {20, 4}}), 1, o);
    EXPECT_EQ(r.durations_frames, (std::vector<std::int64_t>{5, 35}));
    o.r0 = 1.0;
    o.reserve = 0.5;
    auto r2 = allocate_fitting_heuristic(span_of(20, {{16, 1}, {20, 4}, {8, 1}}), 1, o);
    EXPECT_NEAR(r2.durations_real[0], 20.0 / 3.0, 1e-12);
    EXPECT_NEAR(r2.durations_real[2], 10.0 / 3.0, 1e-12);
    EXPECT_NEAR(r2.durations_real[1], 10.0, 1e-12);
}

TEST(FittingHeuristic, PrimaryIndexOutOfRange) {
    EXPECT_THROW(allocate_fitting_heuristic(span_of(40, {{5, 1}, {20, 4}}), 2), InfeasibleNote);
}

TEST(FittingHeuristic, DefaultPrimaryIsSecondPhoneme) {
    EXPECT_EQ(default_primary_index(1), 0u);
    EXPECT_EQ(default_primary_index(2), 1u);
    EXPECT_EQ(default_primary_index(6), 1u);
}

TEST(Distribution, ValidateRejectsBadWeights) {
    PhonemeDurationDistribution d{"a", {{0.6, 10, 1}, {0.6, 12, 1}}};
    EXPECT_THROW(d.validate(), InvalidDistribution);
    PhonemeDurationDistribution e{"a", {}};
    EXPECT_THROW(e.validate(), InvalidDistribution);
    PhonemeDurationDistribution f{"a", {{1.0, 10, -1}}};
    EXPECT_THROW(f.validate(), InvalidDistribution);
}
