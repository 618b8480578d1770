#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "gaplab/expanders.hpp"

using namespace gaplab;

namespace {

std::shared_ptr<const FiniteAction> share(FiniteAction a) { return std::make_shared<const FiniteAction>(std::move(a)); }

// Dense oracle: second largest eigenvalue of the symmetric averaging matrix.
double dense_lambda2(const CayleyGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.vertices);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (const auto& m : g.out)
    for (Eigen::Index x = 0; x < n; ++x) B(x, m[x]) += 1.0 / static_cast<double>(g.degree());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (B + B.transpose()));
  return es.eigenvalues()(n - 2);
}

// Z/3 with Q = {g, g^2} (the complete graph K3).
CayleyGraph complete_k3() { return cayley_graph(build_cyclic(3)); }

}  // namespace

TEST(Poincare, CompleteGraphOnThree) {
  auto r = poincare_scalar(complete_k3());
  EXPECT_NEAR(r.lambda2, -0.5, 1e-10);
  EXPECT_NEAR(r.kappa, 1.0 / 6, 1e-10);
}

TEST(Poincare, FourCycle) {
  auto r = poincare_scalar(cayley_graph(build_cyclic(4)));
  EXPECT_NEAR(r.lambda2, 0.0, 1e-10);
  EXPECT_NEAR(r.kappa, 0.25, 1e-10);
}

TEST(Poincare, SingleVertex) { EXPECT_EQ(poincare_scalar(cayley_graph(build_cyclic(1))).kappa, 0.0); }

TEST(Poincare, DisconnectedIsInfinite) {
  auto a = build_sl2_torus(4);  // several orbits
  auto r = poincare_scalar(cayley_graph(a));
  EXPECT_FALSE(r.connected);
  EXPECT_TRUE(std::isinf(r.kappa));
}

TEST(Poincare, DirectQuadraticFormOnK3) {
  // ordered-pair identity: sum_{u != v} |f(u)-f(v)|^2 = 2n sum |f - Mf|^2
  const Field f{1.0, -2.0, 1.0};
  const double num = 1 + 4 + 1;
  double den = 0;
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 3; ++v) den += (f[u] - f[v]) * (f[u] - f[v]);
  EXPECT_NEAR(num / den, 1.0 / 6, 1e-15);
}

TEST(Poincare, MatchesDenseOracleAndRelation) {
  for (const auto& a : {build_cyclic(7), build_sl2_regular(3), build_sl2_regular(5), build_sl2_torus_orbit(8)}) {
    auto g = cayley_graph(a);
    auto r = poincare_scalar(g);
    EXPECT_NEAR(r.lambda2, dense_lambda2(g), 1e-9) << a.name;
    EXPECT_NEAR(r.kappa * 2.0 * g.degree() * (1 - r.lambda2), 1.0, 1e-9);
  }
}

TEST(Poincare, CycleEigenvalues) {
  for (std::size_t n : {8u, 16u, 32u}) {
    auto r = poincare_scalar(cayley_graph(build_cyclic(n)));
    EXPECT_NEAR(r.lambda2, std::cos(2 * std::numbers::pi / n), 1e-9);
  }
}

TEST(Poincare, AddingGeneratorsNeverIncreasesKappa) {
  auto a = build_cyclic(12);
  auto g = cayley_graph(a);
  const double base = poincare_scalar(g).kappa;
  // add g^2 and g^-2
  Permutation two = compose(a.maps[0], a.maps[0]);
  g.out.push_back(two);
  g.out.push_back(inverse(two));
  EXPECT_LE(poincare_scalar(g).kappa, base + 1e-12);
}

TEST(PoincareVector, ScalarAgreement) {
  for (const auto& a : {build_cyclic(9), build_sl2_regular(3), build_sl2_regular(5)}) {
    auto g = cayley_graph(a);
    auto s = poincare_scalar(g);
    auto v1 = poincare_vector_lower(g, 2.0, 1, 300);
    EXPECT_NEAR(v1.lower_bound, s.kappa, 1e-6) << a.name;
    EXPECT_LE(v1.lower_bound, s.kappa + 1e-9);
    auto v3 = poincare_vector_lower(g, 2.0, 3, 300);
    EXPECT_NEAR(v3.lower_bound, s.kappa, 1e-6) << a.name;
  }
}

TEST(PoincareVector, RandomStartsApproachScalar) {
  // without the spectral start the ascent should still climb to the optimum on a small graph
  auto g = cayley_graph(build_cyclic(6));
  PoincareScalar fake = poincare_scalar(g);
  fake.eigenvector.assign(6, 0.0);
  fake.eigenvector[0] = 1.0;
  fake.eigenvector[1] = -1.0;
  auto v = poincare_vector_lower(g, 2.0, 2, 4000, 3, &fake);
  EXPECT_NEAR(v.lower_bound, poincare_scalar(g).kappa, 1e-6);
}

TEST(PoincareVector, BudgetZeroRejected) {
  EXPECT_THROW(poincare_vector_lower(complete_k3(), 2.0, 1, 0), std::invalid_argument);
}

TEST(PoincareVector, NonHilbertBelowMirho) {
  auto a = build_sl2_regular(3);
  auto g = cayley_graph(a);
  auto rho = generator_measure(a, true);
  const MarkovOperator A{Representation{share(a), 2.0, 1}, rho};
  std::size_t k = 1;
  while (restricted_norm(A, k).lambda > 0.5) ++k;
  auto mb = mirho_upper_bound(a, rho, k, restricted_norm(A, k).lambda);
  for (double p : {1.5, 3.0}) {
    auto v = poincare_vector_lower(g, p, 2, 300);
    EXPECT_GT(v.lower_bound, 0.0);
    EXPECT_LE(v.lower_bound, mb.bound);
  }
}

TEST(Mirho, ZTwoDefectZero) {
  auto a = build_cyclic(2);
  auto rho = generator_measure(a, true);  // uniform {e, g}: rho = Haar
  auto mb = mirho_upper_bound(a, rho, 1, 0.0);
  EXPECT_TRUE(std::isfinite(mb.bound));
  EXPECT_GE(mb.bound, poincare_scalar(cayley_graph(a)).kappa);
  EXPECT_NEAR(mb.bound, 0.25, 1e-15);
}

TEST(Mirho, DefectAboveHalfRejected) {
  auto a = build_cyclic(4);
  EXPECT_THROW(mirho_upper_bound(a, generator_measure(a, true), 1, 0.6), std::invalid_argument);
}

TEST(Mirho, Sl2FiveWithBoostPairK) {
  auto a = build_sl2_regular(5);
  auto rho = generator_measure(a, true);
  const MarkovOperator A{Representation{share(a), 2.0, 1}, rho};
  const double lam = restricted_norm(A).lambda;
  const auto k = boost_pair(lam, 0.5).m;
  const double defect = restricted_norm(A, k).lambda;
  ASSERT_LE(defect, 0.5);
  auto mb = mirho_upper_bound(a, rho, k, defect);
  EXPECT_GE(mb.bound, poincare_scalar(cayley_graph(a)).kappa);
  EXPECT_GE(mb.spec_form, mb.bound);
}

TEST(Mirho, MeanLengthMatchesConvolutionPower) {
  auto a = build_sl2_regular(3);
  auto rho = generator_measure(a, true);
  auto rk = power(rho, 4);
  auto ball = word_ball(a, 10);
  double mean = 0;
  for (const auto& [g, w] : rk.atoms()) {
    auto it = std::find(ball.begin(), ball.end(), g);
    ASSERT_NE(it, ball.end());
    mean += w * it->word_length;
  }
  EXPECT_NEAR(mirho_upper_bound(a, rho, 4, 0.0).mean_length, mean, 1e-12);
}

TEST(Sequence, ConstantSequenceIsUniform) {
  QuotientSequence s{{share(build_sl2_regular(3)), share(build_sl2_regular(3))}};
  auto r = certify_sequence(s);
  EXPECT_TRUE(r.uniform);
  EXPECT_NEAR(r.growth_exponent, 0.0, 1e-12);
}

TEST(Sequence, CyclesNotUniform) {
  QuotientSequence s{{share(build_cyclic(4)), share(build_cyclic(8)), share(build_cyclic(16))}};
  auto r = certify_sequence(s);
  EXPECT_FALSE(r.uniform);
  EXPECT_GT(r.growth_exponent, 1.5);
}

TEST(Sequence, CycleKappaOverNSquaredConverges) {
  const double k32 = poincare_scalar(cayley_graph(build_cyclic(32))).kappa / (32.0 * 32.0);
  const double k64 = poincare_scalar(cayley_graph(build_cyclic(64))).kappa / (64.0 * 64.0);
  EXPECT_LE(std::abs(k64 - k32) / k32, 0.10);
  EXPECT_NEAR(k64, 1.0 / (8 * std::numbers::pi * std::numbers::pi), 2e-4);
}

TEST(Sequence, Sl2SmallFamilyUniform) {
  QuotientSequence s{{share(build_sl2_regular(3)), share(build_sl2_regular(5)), share(build_sl2_regular(7))}};
  auto r = certify_sequence(s);
  EXPECT_GT(r.epsilon0, 0.1);
  EXPECT_TRUE(r.uniform) << r.growth_exponent;
  ASSERT_GT(r.mirho_k, 0u);
  for (const auto& q : r.quotients) {
    EXPECT_NEAR(q.relation, 1.0, 1e-9);
    ASSERT_TRUE(q.mirho.has_value());
    EXPECT_LE(q.scalar.kappa, q.mirho->bound);
    EXPECT_LE(q.vector_bounds[0].lower_bound, q.mirho->bound);
  }
}

TEST(Sequence, MismatchedLabelsRejected) {
  QuotientSequence s{{share(build_cyclic(4)), share(build_sl2_regular(3))}};
  EXPECT_THROW(certify_sequence(s), std::invalid_argument);
  QuotientSequence one{{share(build_cyclic(4))}};
  EXPECT_THROW(certify_sequence(one), std::invalid_argument);
}
