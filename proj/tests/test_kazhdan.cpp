#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gaplab/kazhdan.hpp"

using namespace gaplab;

namespace {

Representation rep_of(FiniteAction a, double p = 2.0, std::size_t d = 1) {
  return {std::make_shared<const FiniteAction>(std::move(a)), p, d};
}

GroupElement elem(const FiniteAction& a, const std::string& label) { return a.generator(a.generator_index(label)); }

// Brute-force modulus of convexity of l_p^2 on a grid of unit-vector pairs.
double brute_modulus(double p, double t, int grid = 1500) {
  auto unit = [p](double a) {
    const double c = std::cos(a), s = std::sin(a);
    const double n = std::pow(std::pow(std::abs(c), p) + std::pow(std::abs(s), p), 1.0 / p);
    return std::array<double, 2>{c / n, s / n};
  };
  auto nrm = [p](double x, double y) { return std::pow(std::pow(std::abs(x), p) + std::pow(std::abs(y), p), 1.0 / p); };
  double best = 1.0;
  for (int i = 0; i < grid; ++i) {
    const auto v = unit(2 * std::numbers::pi * i / grid);
    for (int j = 0; j < grid; ++j) {
      const auto w = unit(2 * std::numbers::pi * j / grid);
      if (nrm(v[0] - w[0], v[1] - w[1]) < t) continue;
      best = std::min(best, 1.0 - nrm((v[0] + w[0]) / 2, (v[1] + w[1]) / 2));
    }
  }
  return best;
}

}  // namespace

TEST(Modulus, Examples) {
  EXPECT_DOUBLE_EQ(modulus(2, 2).value, 1.0);
  for (double p : {1.5, 2.0, 3.0}) EXPECT_EQ(modulus(p, 0).value, 0.0);
  EXPECT_NEAR(modulus(2, std::sqrt(2.0)).value, 0.2928932, 1e-7);
  EXPECT_NEAR(brute_modulus(2, std::sqrt(2.0)), 1 - std::sqrt(0.5), 2e-3);
  EXPECT_TRUE(modulus(2, 1).exact);
  EXPECT_FALSE(modulus(3, 1).exact);
  EXPECT_FALSE(modulus(1.5, 1).exact);
  EXPECT_THROW(modulus(2, 2.5), std::invalid_argument);
  EXPECT_THROW(modulus(2, -0.1), std::invalid_argument);
}

TEST(Modulus, MonotoneOnGrid) {
  for (double p : {1.25, 1.5, 2.0, 3.0, 6.0}) {
    double prev = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double v = modulus(p, i * 1e-3).value;
      EXPECT_GE(v, prev);
      if (i > 0) {
        EXPECT_GT(v, 0.0);
      }
      prev = v;
    }
  }
}

TEST(Modulus, FormulasAreLowerBoundsInThePlane) {
  for (double p : {1.5, 3.0})
    for (double t : {0.5, 1.0, 1.5})
      EXPECT_LE(modulus(p, t).value, brute_modulus(p, t, 700) + 1e-3) << p << " " << t;
}

TEST(Kazhdan, OracleZTwo) {
  auto r = rep_of(build_cyclic(2));
  auto est = kazhdan_constant_oracle(r, {elem(*r.action, "g")});
  EXPECT_NEAR(est.best_found, 2.0, 1e-9);
  EXPECT_LE(est.certified_lower, est.best_found + 1e-9);
}

TEST(Kazhdan, OracleCyclicFourier) {
  for (std::size_t n = 3; n <= 8; ++n) {
    auto r = rep_of(build_cyclic(n));
    auto est = kazhdan_constant_oracle(r, generator_elements(*r.action));
    const double exact = 2 * std::sin(std::numbers::pi / n);
    EXPECT_NEAR(est.best_found, exact, 1e-6) << n;
    EXPECT_LE(est.certified_lower, exact + 1e-9);
  }
  auto r4 = rep_of(build_cyclic(4));
  EXPECT_NEAR(kazhdan_constant_oracle(r4, generator_elements(*r4.action)).best_found, std::sqrt(2.0), 1e-6);
}

TEST(Kazhdan, OracleOnePointIsInfinite) {
  auto r = rep_of(build_cyclic(1));
  auto est = kazhdan_constant_oracle(r, {r.action->identity()});
  EXPECT_TRUE(std::isinf(est.best_found));
  EXPECT_THROW(kazhdan_constant_oracle(r, {}), std::invalid_argument);
}

TEST(Kazhdan, OracleBoundsNonHilbert) {
  for (double p : {1.5, 3.0}) {
    auto r = rep_of(build_cyclic(2), p);
    EXPECT_NEAR(kazhdan_constant_oracle(r, {elem(*r.action, "g")}).best_found, 2.0, 1e-9);
  }
}

TEST(Kazhdan, NormBoundExamples) {
  EXPECT_NEAR(norm_bound_from_kappa(2, 2, 2), 0.0, 1e-15);
  EXPECT_NEAR(norm_bound_from_kappa(3, 2, std::sqrt(2.0)), 1 - (2.0 / 3) * 0.2928932188, 1e-9);
  EXPECT_NEAR(norm_bound_from_kappa(3, 2, std::sqrt(2.0)), 0.8047, 1e-4);
  EXPECT_EQ(norm_bound_from_kappa(5, 2, 0), 1.0);
}

TEST(Kazhdan, DecayExamples) {
  auto d = kappa_from_decay(1.0 / 3);
  EXPECT_NEAR(d.S, 0.5, 1e-15);
  EXPECT_NEAR(d.kappa, 2.0 / 3, 1e-15);
  EXPECT_NEAR(kappa_from_decay(1e-12).kappa, 1.0, 1e-11);
  EXPECT_THROW(kappa_from_decay(1.0), std::invalid_argument);
}

TEST(Kazhdan, HilbertImprovementExamples) {
  EXPECT_NEAR(hilbert_improvement(0), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(hilbert_improvement(1), 0.0);
  EXPECT_NEAR(hilbert_improvement(1.0 / 3), std::sqrt(2.0) * std::sqrt(2.0 / 3), 1e-15);
  EXPECT_NEAR(hilbert_improvement(1.0 / 3), 1.1547, 1e-4);
  EXPECT_THROW(hilbert_improvement(0.5, 3.0), std::invalid_argument);
}

TEST(Kazhdan, BoostExamples) {
  auto b = boost_pair(1.0 / 3, 0.1);
  EXPECT_EQ(b.m, 3u);
  EXPECT_NEAR(b.kappa, 26.0 / 27, 1e-15);
  auto c = boost_pair(0.3, 0.5);
  EXPECT_EQ(c.m, 1u);
  EXPECT_NEAR(c.kappa, 0.7, 1e-15);
}

TEST(Kazhdan, BoostedSetOracleOnZFour) {
  auto r = rep_of(build_cyclic(4));
  auto b = boost_pair(1.0 / 3, 0.1);
  auto Qm = boost_set(generator_elements(*r.action), b.m);
  EXPECT_EQ(Qm.size(), 4u);
  auto est = kazhdan_constant_oracle(r, Qm);
  EXPECT_GE(est.best_found, 1 - std::pow(1.0 / 3, 3) - 1e-6);
  EXPECT_GE(est.certified_lower, 1 - std::pow(1.0 / 3, 3) - 1e-6);
  EXPECT_NEAR(est.best_found, std::sqrt(8.0 / 3), 1e-6);  // Fourier: modes 1 and 2 mixed 2:1
}

TEST(Kazhdan, BoostedSetOracleOnSl2) {
  auto r = rep_of(build_sl2_regular(3));
  auto A = markov_operator(r, generator_measure(*r.action, true));
  const double lam = restricted_norm(A).lambda;
  for (double eps : {0.5, 0.2}) {
    auto b = boost_pair(lam, eps);
    DiscreteMeasure mu = generator_measure(*r.action, true);
    // lambda of mu^m bounded by lam^m, so supp mu^m carries 1 - lam^m
    auto est = kazhdan_constant_oracle(r, boost_set(generator_elements(*r.action), b.m));
    EXPECT_GE(est.certified_lower, b.kappa - 1e-6);
    EXPECT_GE(est.best_found, b.kappa - 1e-6);
  }
}

TEST(Kazhdan, SandwichOnFourierFixtures) {
  // uniform on Qg u {g} with g = e and Q = generators
  for (std::size_t n : {2u, 3u, 4u, 5u, 6u}) {
    auto r = rep_of(build_cyclic(n));
    auto Q = generator_elements(*r.action);
    auto [mu, cert] = uniform_extended(Q, r.action->identity());
    auto lp = std::get<AdmissibilityCertificate>(certify_admissible(mu, Q));
    const double lam = restricted_norm(markov_operator(r, mu)).lambda;
    const double kappa = kazhdan_constant_oracle(r, Q).best_found;
    EXPECT_NEAR(kappa, 2 * std::sin(std::numbers::pi / n), 1e-6);
    EXPECT_LE(1 - kappa, lam + 1e-6) << n;
    EXPECT_LE(lam, norm_bound_from_kappa(lp.M, 2, kappa) + 1e-6) << n;
    EXPECT_LE(lam, norm_bound_from_kappa(cert.M, 2, kappa) + 1e-6) << n;
    EXPECT_LE(hilbert_improvement(lam), kappa + 1e-6) << n;
    EXPECT_LE(kappa_from_decay(lam).kappa, kappa + 1e-6) << n;
  }
}

TEST(Kazhdan, ZTwoAttainsUpperBound) {
  auto r = rep_of(build_cyclic(2));
  auto Q = generator_elements(*r.action);
  auto [mu, cert] = uniform_extended(Q, r.action->identity());
  const double lam = restricted_norm(markov_operator(r, mu)).lambda;
  const double kappa = kazhdan_constant_oracle(r, Q).best_found;
  EXPECT_NEAR(lam, 0.0, 1e-12);
  EXPECT_NEAR(norm_bound_from_kappa(cert.M, 2, kappa), 0.0, 1e-12);
}

TEST(Kazhdan, ProductSingleStepReducesToNormBound) {
  auto a = build_cyclic(4);
  auto X = generator_elements(a);
  auto step = build_product_step(X, {a.identity()}, ProductVariant::A);
  auto b = product_average_bound({step}, std::sqrt(2.0), 2.0, X.size());
  EXPECT_NEAR(b.bound, norm_bound_from_kappa(step.M, 2, std::sqrt(2.0)), 1e-15);
  EXPECT_EQ(product_average_bound({}, std::sqrt(2.0), 2.0, X.size()).bound, 1.0);
  auto r = rep_of(a);
  EXPECT_EQ(product_defect(r, {}), 1.0);
}

TEST(Kazhdan, ProductVariantsMeasuredBelowBound) {
  auto r = rep_of(build_sl2_regular(3));
  const auto& a = *r.action;
  auto X = generator_elements(a);
  const double kappa = kazhdan_constant_oracle(r, X, {.starts = 4}).certified_lower;
  ASSERT_GT(kappa, 0.0);
  auto u = elem(a, "u"), l = elem(a, "l");
  std::vector<std::vector<GroupElement>> Ys{{a.identity(), u, l, multiply(u, l)},
                                            {a.identity(), l, multiply(l, l), u},
                                            {a.identity(), multiply(u, u), l, multiply(l, u)}};
  for (auto variant : {ProductVariant::A, ProductVariant::B}) {
    std::vector<ProductStep> steps;
    for (const auto& Y : Ys) {
      steps.push_back(build_product_step(X, Y, variant));
      auto b = product_average_bound(steps, kappa, 2.0, X.size());
      EXPECT_LE(product_defect(r, steps), b.bound + 1e-9);
    }
  }
  std::vector<ProductStep> mixed{build_product_step(X, Ys[0], ProductVariant::A),
                                 build_product_step(X, Ys[1], ProductVariant::B)};
  EXPECT_THROW(product_average_bound(mixed, kappa, 2.0, X.size()), std::invalid_argument);
}

TEST(Kazhdan, ProductVariantBOnZFour) {
  auto r = rep_of(build_cyclic(4));
  auto X = generator_elements(*r.action);
  auto g = elem(*r.action, "g");
  std::vector<ProductStep> steps;
  for (int n = 0; n < 4; ++n) {
    steps.push_back(build_product_step(X, {r.action->identity(), n % 2 ? g : inverse(g)}, ProductVariant::B));
    auto b = product_average_bound(steps, std::sqrt(2.0), 2.0, X.size());
    EXPECT_NEAR(b.kappa_eff, std::sqrt(2.0) / 3, 1e-15);
    EXPECT_LE(product_defect(r, steps), b.bound + 1e-9);
  }
}

TEST(Hecke, Examples) {
  EXPECT_NEAR(hecke_gap_to_kappa(2, 1), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(hecke_kappa_to_gap(5, 2), 8.0, 1e-15);
  const double k = hecke_gap_to_kappa(2, 1);
  EXPECT_NEAR(hecke_kappa_to_gap(2, k), 2 + std::sqrt(3.5), 1e-12);
  EXPECT_GE(hecke_kappa_to_gap(2, k), 1.0);
  EXPECT_THROW(hecke_gap_to_kappa(2, 5), std::invalid_argument);
  EXPECT_THROW(hecke_gap_to_kappa(0.5, 0.1), std::invalid_argument);
  EXPECT_THROW(hecke_kappa_to_gap(2, 0), std::invalid_argument);
}

TEST(Hecke, GapToPairIsValidOnCycles) {
  // Hecke operator 2mA with m = 1 on Z/n: ||z|| on L_2^0 = 2 max |cos|; kappa <= oracle
  for (std::size_t n : {5u, 7u, 9u}) {
    auto r = rep_of(build_cyclic(n));
    auto A = markov_operator(r, generator_measure(*r.action, false));
    const double zeta = 2.0 - 2.0 * restricted_norm(A).lambda;
    const double kappa = hecke_gap_to_kappa(1, zeta);
    EXPECT_LE(kappa, kazhdan_constant_oracle(r, generator_elements(*r.action)).best_found + 1e-6);
  }
}
