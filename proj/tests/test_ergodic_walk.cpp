#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gaplab/ergodic_walk.hpp"

using namespace gaplab;

namespace {

std::shared_ptr<const FiniteAction> share(FiniteAction a) { return std::make_shared<const FiniteAction>(std::move(a)); }

// f_n(x) by summing over all length-n words of atoms, weight prod mu(g_i),
// hit iff g_n^-1 ... g_1^-1 x lies in Omega.
double enumerate_hit(const DiscreteMeasure& mu, std::size_t n, std::size_t x, const std::vector<std::uint32_t>& target) {
  std::vector<std::pair<Permutation, double>> atoms;
  for (const auto& [g, w] : mu.atoms()) atoms.emplace_back(inverse(g.perm), w);
  std::vector<std::uint8_t> in(mu.degree(), 0);
  for (auto t : target) in[t] = 1;
  double total = 0.0;
  std::vector<std::size_t> word(n, 0);
  while (true) {
    double w = 1.0;
    std::size_t y = x;
    for (auto k : word) {
      w *= atoms[k].second;
      y = atoms[k].first[y];
    }
    if (in[y]) total += w;
    std::size_t i = 0;
    while (i < n && ++word[i] == atoms.size()) word[i++] = 0;
    if (i == n) break;
  }
  return total;
}

struct Torus8 {
  std::shared_ptr<const FiniteAction> a = share(build_sl2_torus_orbit(8));
  DiscreteMeasure mu = generator_measure(*a, true);
  ShrinkingTargetPlan plan;
  Torus8() {
    std::vector<std::uint32_t> odd{0, 5, 17, 30}, even{3, 11, 26, 40};
    for (std::size_t n = 1; n <= 20; ++n) plan.targets.push_back(n % 2 ? odd : even);
  }
};

}  // namespace

TEST(ErgodicCurve, ConstantFieldHasZeroError) {
  auto a = share(build_sl2_torus_orbit(16));
  for (double p : {1.5, 2.0, 3.0}) {
    Representation rep{a, p, 1};
    auto c = ergodic_error_curve(rep, Field(a->size(), 2.5), generator_measure(*a, true), 20);
    for (double e : c.errors) EXPECT_EQ(e, 0.0);
  }
}

TEST(ErgodicCurve, FourierModeOnZ4) {
  auto a = share(build_cyclic(4));
  Representation rep{a, 2.0, 1};
  const Field f{1.0, 0.0, -1.0, 0.0};
  auto c = ergodic_error_curve(rep, f, generator_measure(*a, true), 12);
  const double nf = norm(rep, f);
  for (std::size_t k = 0; k <= 12; ++k) EXPECT_NEAR(c.errors[k], std::pow(1.0 / 3, k) * nf, 1e-15);
  EXPECT_NEAR(c.lambda, 1.0 / 3, 1e-10);
  EXPECT_TRUE(c.bound_holds);
}

TEST(ErgodicCurve, TorusSlopesBelowLogLambda) {
  auto a = share(build_sl2_torus_orbit(16));
  auto mu = generator_measure(*a, true);
  for (double p : {1.5, 2.0, 3.0}) {
    Representation rep{a, p, 1};
    auto c = ergodic_error_curve(rep, random_field(rep, 11), mu, 150);
    EXPECT_LE(c.slope, std::log(c.lambda) + 0.01) << p;
    if (p == 2.0) {
      EXPECT_TRUE(c.bound_holds);
    }
  }
}

TEST(ErgodicCurve, NonErgodicWarns) {
  auto a = share(build_sl2_torus(4));
  Representation rep{a, 2.0, 1};
  auto c = ergodic_error_curve(rep, random_field(rep, 3), generator_measure(*a, true), 10);
  EXPECT_FALSE(c.warnings.empty());
  EXPECT_TRUE(c.bound_holds);
  EXPECT_THROW(ergodic_error_curve(rep, random_field(rep, 3), generator_measure(*a, true), 0), std::invalid_argument);
}

TEST(Shrinking, FullAndEmptyTargets) {
  auto a = share(build_sl2_torus_orbit(8));
  auto mu = generator_measure(*a, true);
  auto full = shrinking_series_exact(a, mu, constant_plan(all_points(*a), 15), {0, 7}, true);
  for (double s : full.sigma) EXPECT_NEAR(s, 15.0, 1e-12);
  EXPECT_NEAR(full.expectation(), 15.0, 1e-12);
  auto empty = shrinking_series_exact(a, mu, constant_plan({}, 15), {0}, true);
  for (double s : empty.sigma) EXPECT_EQ(s, 0.0);
}

TEST(Shrinking, WordEnumerationOracle) {
  Torus8 fx;
  auto st = shrinking_series_exact(fx.a, fx.mu, fx.plan, {0, 9, 47}, true);
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t x = 0; x < fx.a->size(); ++x)
      EXPECT_NEAR(st.fields[n - 1][x], enumerate_hit(fx.mu, n, x, fx.plan.targets[n - 1]), 1e-12);
}

TEST(Shrinking, FieldsBoundedAndMeanIdentity) {
  Torus8 fx;
  auto st = shrinking_series_exact(fx.a, fx.mu, fx.plan, {0, 9, 47}, true);
  EXPECT_LE(st.mean_identity_error, 1e-12);
  for (const auto& f : st.fields)
    for (double v : f) {
      EXPECT_GE(v, -1e-15);
      EXPECT_LE(v, 1.0 + 1e-15);
    }
  // Horner sum, forward distributions and full fields agree
  for (std::size_t s = 0; s < st.starts.size(); ++s) {
    double sum = 0.0;
    for (std::size_t n = 1; n <= 20; ++n) {
      EXPECT_NEAR(st.f_at_start[s][n - 1], st.fields[n - 1][st.starts[s]], 1e-13);
      sum += st.fields[n - 1][st.starts[s]];
    }
    EXPECT_NEAR(st.sigma[st.starts[s]], sum, 1e-12);
  }
  for (std::size_t n = 1; n < st.S.size(); ++n) EXPECT_GE(st.S[n], st.S[n - 1]);
}

TEST(Shrinking, MonotoneCoupling) {
  Torus8 fx;
  auto bigger = fx.plan;
  for (auto& t : bigger.targets) {
    t.push_back(44);
    std::sort(t.begin(), t.end());
  }
  auto small = shrinking_series_exact(fx.a, fx.mu, fx.plan, {});
  auto large = shrinking_series_exact(fx.a, fx.mu, bigger, {});
  for (std::size_t x = 0; x < fx.a->size(); ++x) EXPECT_GE(large.sigma[x], small.sigma[x] - 1e-14);
}

TEST(Shrinking, PlanValidation) {
  auto a = build_sl2_torus_orbit(8);
  ShrinkingTargetPlan bad{{{3, 2}}, {}, 0};
  EXPECT_THROW(bad.validate(a), std::invalid_argument);
  ShrinkingTargetPlan outside{{{1000}}, {}, 0};
  EXPECT_THROW(outside.validate(a), std::invalid_argument);
}

TEST(Shrinking, BallPlanUsesCountingMeasure) {
  auto a = build_sl2_torus(16);
  auto plan = ball_plan(a, 0, {0.0, 1.0 / 16, 2.0 / 16});
  EXPECT_EQ(plan.targets[0].size(), 1u);
  EXPECT_EQ(plan.targets[1].size(), 9u);
  EXPECT_EQ(plan.targets[2].size(), 25u);
  EXPECT_NEAR(plan.measures(a)[2], 25.0 / 256, 1e-15);
}

TEST(Moment, ConstantPlugIn) {
  EXPECT_NEAR(moment_constant(2.0, 0.5), 44.0 / 3, 1e-12);
  EXPECT_THROW(moment_constant(2.0, 1.0), std::invalid_argument);
}

TEST(Moment, FullTargetsGiveZero) {
  auto a = share(build_sl2_torus_orbit(8));
  auto st = shrinking_series_exact(a, generator_measure(*a, true), constant_plan(all_points(*a), 8), {}, true);
  auto r = moment_inequality_check(st, 2.0, 0.5);
  for (const auto& m : r.ranges) EXPECT_NEAR(m.lhs, 0.0, 1e-24);
}

TEST(Moment, HoldsOnTorusFixture) {
  Torus8 fx;
  auto st = shrinking_series_exact(fx.a, fx.mu, fx.plan, {}, true);
  const double lam = restricted_norm(MarkovOperator(Representation{fx.a, 2.0, 1}, fx.mu)).lambda;
  auto r = moment_inequality_check(st, 2.0, lam);
  EXPECT_EQ(r.ranges.size(), 190u);
  EXPECT_TRUE(r.holds);
  EXPECT_GT(r.min_slack, 0.0);
  // direct integration for one range
  double lhs = 0.0;
  for (std::size_t x = 0; x < fx.a->size(); ++x) {
    double s = 0.0;
    for (std::size_t i = 3; i <= 9; ++i) s += st.fields[i - 1][x] - fx.plan.measures(*fx.a)[i - 1];
    lhs += fx.a->weights[x] * s * s;
  }
  auto one = moment_inequality_check(st, 2.0, lam, {{3, 9}});
  EXPECT_NEAR(one.ranges[0].lhs, lhs, 1e-14);
  EXPECT_THROW(moment_inequality_check(st, 2.0, 1.0), std::invalid_argument);
}

TEST(MonteCarlo, FullTargetsAlwaysHit) {
  auto a = share(build_sl2_torus_orbit(8));
  auto mu = generator_measure(*a, true);
  auto plan = constant_plan(all_points(*a), 10);
  auto mc = shrinking_series_mc(*a, mu, plan, {0, 3}, {50, 9, 1});
  for (const auto& h : mc.hits)
    for (auto c : h) EXPECT_EQ(c, 50u);
  EXPECT_THROW(shrinking_series_mc(*a, mu, plan, {0}, {0, 9, 1}), std::invalid_argument);
}

TEST(MonteCarlo, DiracMeasureIsDeterministic) {
  auto a = share(build_sl2_torus_orbit(8));
  auto g = a->generator(0);
  auto mu = DiscreteMeasure::dirac(g);
  ShrinkingTargetPlan plan;
  for (int n = 0; n < 12; ++n) plan.targets.push_back({5});
  auto mc = shrinking_series_mc(*a, mu, plan, {5}, {20, 1, 1});
  auto ex = shrinking_series_exact(a, mu, plan, {5});
  // X_n = g^-n x: a hit at n iff g^n fixes 5
  Permutation p = identity_permutation(a->size());
  for (std::size_t n = 1; n <= 12; ++n) {
    p = compose(inverse(g.perm), p);
    EXPECT_EQ(mc.hits[0][n - 1], p[5] == 5 ? 20u : 0u);
  }
  EXPECT_EQ(mc.stderr_sigma[0], 0.0);
  EXPECT_TRUE(compare_bands(ex, mc).within);
}

TEST(MonteCarlo, AgreesWithExactWithinBands) {
  auto a = share(build_sl2_torus_orbit(64));
  auto mu = generator_measure(*a, true);
  auto plan = ball_plan(*a, 0, power_radii(1.0, 0.5, 200));
  std::vector<std::size_t> starts{0, 1, 517, 2000};
  auto ex = shrinking_series_exact(a, mu, plan, starts);
  auto mc = shrinking_series_mc(*a, mu, plan, starts, {10000, 42, 2});
  auto b = compare_bands(ex, mc);
  EXPECT_TRUE(b.within) << b.max_z;
}

TEST(MonteCarlo, ReproducibleAcrossJobCounts) {
  auto a = share(build_sl2_torus_orbit(16));
  auto mu = generator_measure(*a, true);
  auto plan = ball_plan(*a, 3, power_radii(0.5, 0.5, 40));
  auto one = shrinking_series_mc(*a, mu, plan, {1, 2}, {300, 5, 1});
  auto three = shrinking_series_mc(*a, mu, plan, {1, 2}, {300, 5, 3});
  EXPECT_EQ(one.hits, three.hits);
  EXPECT_EQ(one.mean_sigma, three.mean_sigma);
}

TEST(Envelope, DivergentCaseOnLargeTorus) {
  auto a = share(build_sl2_torus_orbit(64));
  auto mu = generator_measure(*a, true);
  auto plan = ball_plan(*a, 0, power_radii(0.5, 0.25, 4096));
  auto st = shrinking_series_exact(a, mu, plan, {});
  ASSERT_GE(st.expectation(), 100.0);
  EXPECT_LE(st.mean_identity_error, 1e-12);
  auto e = envelope_check(st.sigma, st.expectation(), sample_points(a->size(), 100, 2024));
  EXPECT_GE(e.fraction_within, 0.9);
}

TEST(Conditioned, TrivialGroupHasNoDrift) {
  auto a = build_cyclic(1);
  auto mu = generator_measure(a, true);
  auto c = conditioned_series(a, mu, constant_plan({0}, 16), 0.5, {0}, {100, 1, 1});
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.a, 0.0);
  for (double l : c.mean_length) EXPECT_EQ(l, 0.0);
  EXPECT_NEAR(c.joint_sigma[0], 16.0, 1e-12);
}

TEST(Conditioned, FreeGroupDriftOnTorus) {
  // lazy simple walk on F_2 with holding 1/5: drift (4/5)(1/2) = 2/5
  auto a = build_sl2_torus_orbit(64);
  auto mu = generator_measure(a, true);
  auto plan = ball_plan(a, 0, power_radii(0.5, 0.25, 400));
  std::vector<double> drifts;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto c = conditioned_series(a, mu, plan, 0.5, {10, 20}, {5000, seed, 1});
    EXPECT_FALSE(c.degenerate);
    drifts.push_back(c.drift);
  }
  for (double d : drifts) {
    EXPECT_NEAR(d, 0.4, 0.02);
    EXPECT_NEAR(d / drifts[0], 1.0, 0.05);
  }
  auto again = conditioned_series(a, mu, plan, 0.5, {10, 20}, {5000, 1, 1});
  EXPECT_EQ(again.drift, drifts[0]);
}

TEST(Conditioned, ZeroFractionMatchesPlainMonteCarlo) {
  auto a = build_sl2_torus_orbit(16);
  auto mu = generator_measure(a, true);
  auto plan = ball_plan(a, 0, power_radii(0.5, 0.25, 64));
  auto c = conditioned_series(a, mu, plan, 0.0, {4, 9}, {400, 8, 1});
  auto mc = shrinking_series_mc(a, mu, plan, {4, 9}, {400, 8, 1});
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_NEAR(c.joint_sigma[s], mc.mean_sigma[s], 1e-12);
    EXPECT_NEAR(c.eta_sigma[s], mc.mean_sigma[s], 1e-12);
  }
  for (double m : c.delta_mass) EXPECT_EQ(m, 1.0);
}

TEST(Conditioned, RejectsElementsOutsideGenerators) {
  auto a = build_sl2_torus_orbit(8);
  auto g = a.generator(0);
  auto mu = DiscreteMeasure::uniform({a.identity(), multiply(g, g)});
  EXPECT_THROW(conditioned_series(a, mu, constant_plan({0}, 8), 0.5, {0}, {10, 1, 1}), std::invalid_argument);
}
