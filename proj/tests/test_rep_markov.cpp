#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "gaplab/rep_markov.hpp"

using namespace gaplab;

namespace {

Representation rep_of(FiniteAction a, double p = 2.0, std::size_t d = 1) {
  return {std::make_shared<const FiniteAction>(std::move(a)), p, d};
}

GroupElement elem(const Representation& r, const std::string& label) {
  return r.action->generator(r.action->generator_index(label));
}

// Oracle: restricted norm from a dense SVD of D^{1/2} A C D^{-1/2}.
double dense_restricted_norm(const MarkovOperator& A) {
  const auto n = static_cast<Eigen::Index>(A.representation().points());
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(n, n) - A.decomposition().dense_mean();
  return weighted_operator_norm(A.dense() * C, A.representation().action->weights);
}

}  // namespace

TEST(Markov, DiracIdentityIsIdentityOperator) {
  auto r = rep_of(build_sl2_regular(3));
  auto A = markov_operator(r, DiscreteMeasure::dirac(r.action->identity()));
  EXPECT_TRUE(A.dense().isApprox(Eigen::MatrixXd::Identity(24, 24)));
  EXPECT_NEAR(restricted_norm(A).lambda, 1.0, 1e-12);
}

TEST(Markov, OnePointActionIsIdentity) {
  auto r = rep_of(build_cyclic(1));
  auto A = markov_operator(r, generator_measure(*r.action, true));
  EXPECT_EQ(A.dense()(0, 0), 1.0);
  EXPECT_EQ(restricted_norm(A).lambda, 0.0);
}

TEST(Markov, ZFourStencil) {
  auto r = rep_of(build_cyclic(4));
  auto A = markov_operator(r, generator_measure(*r.action, true)).dense();
  for (int x = 0; x < 4; ++x) {
    EXPECT_NEAR(A(x, x), 1.0 / 3, 1e-15);
    EXPECT_NEAR(A(x, (x + 1) % 4), 1.0 / 3, 1e-15);
    EXPECT_NEAR(A(x, (x + 2) % 4), 0.0, 1e-15);
    EXPECT_NEAR(A(x, (x + 3) % 4), 1.0 / 3, 1e-15);
  }
}

TEST(Markov, RestrictedNormZTwoZFour) {
  auto r2 = rep_of(build_cyclic(2));
  EXPECT_NEAR(restricted_norm(markov_operator(r2, generator_measure(*r2.action, true))).lambda, 0.0, 1e-10);
  auto r4 = rep_of(build_cyclic(4));
  // Fourier oracle: (1 + 2 cos(pi k / 2)) / 3, k = 1, 2, 3
  double fourier = 0.0;
  for (int k = 1; k < 4; ++k) fourier = std::max(fourier, std::abs((1 + 2 * std::cos(std::numbers::pi * k / 2)) / 3));
  auto n4 = restricted_norm(markov_operator(r4, generator_measure(*r4.action, true)));
  EXPECT_NEAR(n4.lambda, fourier, 1e-10);
  EXPECT_NEAR(n4.lambda, 1.0 / 3, 1e-10);
  EXPECT_EQ(n4.quality, Quality::Exact);
}

TEST(Markov, RestrictedNormMatchesDenseOracle) {
  std::vector<Representation> reps{rep_of(build_sl2_regular(5)), rep_of(build_sl2_torus_orbit(16)),
                                   rep_of(build_sl2_torus(8)), rep_of(build_random_action(30, 2, 3), 2.0, 3)};
  for (const auto& r : reps) {
    for (bool lazy : {true, false}) {
      auto A = markov_operator(r, generator_measure(*r.action, lazy));
      EXPECT_NEAR(restricted_norm(A).lambda, dense_restricted_norm(A), 1e-9) << r.action->name;
    }
  }
  // a non-symmetric measure
  auto r = rep_of(build_sl2_regular(3));
  DiscreteMeasure mu;
  mu.add(r.action->identity(), 0.5);
  mu.add(elem(r, "u"), 0.3);
  mu.add(elem(r, "l"), 0.2);
  auto A = markov_operator(r, mu);
  EXPECT_NEAR(restricted_norm(A).lambda, dense_restricted_norm(A), 1e-9);
}

TEST(Markov, NonHilbertLowerBoundBracketsSpectralRadius) {
  for (double p : {1.5, 3.0}) {
    auto r = rep_of(build_sl2_torus_orbit(8), p);
    auto A = markov_operator(r, generator_measure(*r.action, true));
    auto n = restricted_norm(A);
    EXPECT_EQ(n.quality, Quality::LowerBound);
    EXPECT_LE(n.lambda, 1.0);
    EXPECT_EQ(n.upper, 1.0);
    // symmetric operator: spectral radius on E_pi equals the p=2 norm and is a lower bound for every p
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A.dense());
    const auto ev = es.eigenvalues();
    const double rho = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 2)));
    EXPECT_GE(n.lambda, rho - 1e-9);
  }
}

TEST(Markov, Isometry) {
  for (double p : {1.5, 2.0, 3.0}) {
    auto r = rep_of(build_sl2_torus(6), p, 2);
    for (std::uint64_t s = 0; s < 5; ++s) {
      auto f = random_field(r, s);
      for (const auto& g : generator_elements(*r.action))
        EXPECT_NEAR(norm(r, apply_pi(r, g, f)), norm(r, f), 1e-12);
    }
  }
}

TEST(Markov, StochasticContractiveMeanPreserving) {
  for (double p : {1.5, 2.0, 3.0}) {
    auto r = rep_of(build_random_action(12, 2, 11), p, 2);
    auto A = markov_operator(r, power(generator_measure(*r.action, true), 2));
    for (double s : A.row_sums()) EXPECT_NEAR(s, 1.0, 1e-12);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto f = random_field(r, seed);
      auto Af = A.apply(f);
      EXPECT_LE(norm(r, Af), norm(r, f) + 1e-12);
      auto mf = A.decomposition().mean(f), maf = A.decomposition().mean(Af);
      for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(mf[i], maf[i], 1e-12);
    }
  }
}

TEST(Markov, Submultiplicativity) {
  auto r = rep_of(build_sl2_regular(5));
  auto mu = generator_measure(*r.action, true);
  DiscreteMeasure nu;
  nu.add(r.action->identity(), 0.6);
  nu.add(elem(r, "u"), 0.4);
  const double a = restricted_norm(markov_operator(r, mu)).lambda;
  const double b = restricted_norm(markov_operator(r, nu)).lambda;
  const double c = restricted_norm(markov_operator(r, convolve(mu, nu))).lambda;
  EXPECT_LE(c, a * b + 1e-9);
}

TEST(Markov, ProjectorIdentities) {
  auto r = rep_of(build_sl2_torus(6));  // non-ergodic: per-orbit means
  auto A = markov_operator(r, generator_measure(*r.action, true));
  const Eigen::MatrixXd P = A.decomposition().dense_mean(), M = A.dense();
  EXPECT_LE((P * P - P).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((P * M - P).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((M * P - P).cwiseAbs().maxCoeff(), 1e-10);
  for (const auto& g : generator_elements(*r.action)) {
    const Eigen::MatrixXd G = dense_pi(g);
    EXPECT_LE((G * P - P * G).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Markov, NeumannExamples) {
  auto r1 = rep_of(build_cyclic(1));
  EXPECT_EQ(neumann_projection(markov_operator(r1, generator_measure(*r1.action, true)))(0, 0), 1.0);
  for (std::size_t n : {2u, 4u}) {
    auto r = rep_of(build_cyclic(n));
    auto A = markov_operator(r, generator_measure(*r.action, true));
    auto P = neumann_projection(A);
    EXPECT_LE((P - A.decomposition().dense_mean()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Markov, NeumannRejectsUngapped) {
  auto r = rep_of(build_cyclic(4));
  EXPECT_THROW(neumann_projection(markov_operator(r, DiscreteMeasure::dirac(r.action->identity()))),
               std::domain_error);
}

TEST(Markov, NeumannAgreesWithIterationLimit) {
  auto r = rep_of(build_sl2_torus(8));
  auto A = markov_operator(r, generator_measure(*r.action, true));
  auto P = neumann_projection(A);
  EXPECT_LE((P - A.decomposition().dense_mean()).cwiseAbs().maxCoeff(), 1e-10);
  auto it = iterate_to_projection(A, 2000);
  EXPECT_LE((P - it.power).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Markov, IterateExamples) {
  auto r4 = rep_of(build_cyclic(4));
  auto A4 = markov_operator(r4, generator_measure(*r4.action, true));
  EXPECT_NEAR(iterate_to_projection(A4, 0).defect, 1.0, 1e-15);
  EXPECT_LE(iterate_to_projection(A4, 5).defect, std::pow(1.0 / 3, 5) + 1e-12);
  auto r2 = rep_of(build_cyclic(2));
  EXPECT_NEAR(iterate_to_projection(markov_operator(r2, generator_measure(*r2.action, true)), 1).defect, 0.0, 1e-12);
}

TEST(Markov, DefectCurveMatchesDenseAndBound) {
  auto r = rep_of(build_sl2_regular(5));
  auto A = markov_operator(r, generator_measure(*r.action, true));
  const double lam = restricted_norm(A).lambda;
  auto curve = defect_curve(A, 12);
  const Eigen::MatrixXd M = A.dense(), P = A.decomposition().dense_mean();
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  for (std::size_t k = 0; k <= 12; ++k) {
    EXPECT_NEAR(curve.defect[k], weighted_operator_norm(Ak - P, r.action->weights), 1e-9);
    EXPECT_LE(curve.defect[k], std::pow(lam, double(k)) + 1e-9);
    Ak = M * Ak;
  }
}

TEST(Markov, IdentitiesTrivialAndZFour) {
  auto r = rep_of(build_cyclic(4));
  auto e = DiscreteMeasure::dirac(r.action->identity());
  EXPECT_TRUE(operator_identities_check(r, e, e).ok());
  auto rep = operator_identities_check(r, generator_measure(*r.action, true), DiscreteMeasure::dirac(elem(r, "g")));
  EXPECT_TRUE(rep.ok());
  EXPECT_LE(rep.convolution, 1e-12);
}

TEST(Markov, IdentitiesRandomEightPoint) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = rep_of(build_random_action(8, 2, seed));
    auto ball = word_ball(*r.action, 3);
    detail::CounterRng rng(seed, 1);
    auto rnd = [&] {
      DiscreteMeasure m;
      for (int i = 0; i < 3; ++i) m.add(ball[rng.next_u64() % ball.size()], 1.0 / 3);
      return m;
    };
    EXPECT_TRUE(operator_identities_check(r, rnd(), rnd()).ok()) << seed;
  }
}
