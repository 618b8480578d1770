#include <gtest/gtest.h>

#include <cmath>

#include "gaplab/detail/rng.hpp"
#include "gaplab/warped_cone.hpp"

using namespace gaplab;

namespace {

std::shared_ptr<const FiniteAction> share(FiniteAction a) { return std::make_shared<const FiniteAction>(std::move(a)); }

WarpedLevel sl2_level(std::int64_t m, double t) { return build_warped_level(share(build_sl2_torus_orbit(m)), t); }

FiniteAction trivial_torus(std::int64_t m) {
  auto a = build_sl2_torus(m);
  a.generators = {};
  a.maps.clear();
  a.matrices.clear();
  return a;
}

std::vector<std::vector<double>> floyd_warshall(const WarpedLevel& L) {
  const std::size_t n = L.vertices();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  // edges rebuilt from the definition, not from the CSR graph
  for (std::int64_t x = 0; x < L.m; ++x)
    for (std::int64_t y = 0; y < L.m; ++y)
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
          auto u = L.vertex(x, y), v = L.vertex(x + dx, y + dy);
          if (u != v) d[u][v] = std::min(d[u][v], L.t / static_cast<double>(L.m));
        }
  for (const auto& a : L.matrices)
    for (std::int64_t x = 0; x < L.m; ++x)
      for (std::int64_t y = 0; y < L.m; ++y) {
        auto u = L.vertex(x, y), v = L.vertex(a[0] * x + a[1] * y, a[2] * x + a[3] * y);
        if (u != v) d[u][v] = std::min(d[u][v], 1.0), d[v][u] = std::min(d[v][u], 1.0);
      }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

std::vector<WarpedLevel> cone_levels(std::initializer_list<std::int64_t> ms) {
  std::vector<WarpedLevel> cone;
  for (auto m : ms) cone.push_back(sl2_level(m, static_cast<double>(m)));
  return cone;
}

}  // namespace

TEST(WarpedDistance, TrivialActionIsScaledFlatDistance) {
  auto L = build_warped_level(share(trivial_torus(8)), 5.0);
  for (std::uint32_t x = 0; x < L.vertices(); x += 7)
    for (std::uint32_t y = 0; y < L.vertices(); ++y)
      EXPECT_DOUBLE_EQ(warped_distance(L, x, y), 5.0 * flat_distance(*L.space, x, y));
}

TEST(WarpedDistance, GeneratorJumpCostsAtMostOne) {
  for (std::int64_t m : {8, 16}) {
    auto L = sl2_level(m, 3.0 * static_cast<double>(m));
    for (const auto& p : L.jumps)
      for (std::uint32_t x = 0; x < L.vertices(); ++x) EXPECT_LE(warped_distance(L, x, p[x]), 1.0);
  }
}

TEST(WarpedDistance, FloydWarshallOracleOnSmallLevel) {
  GeneratorSystem gens{{"h", "h^-1"}, {1, 0}, true};
  auto a = build_torus(4, gens, {IntMatrix2{2, 1, 1, 1}, IntMatrix2{1, -1, -1, 2}});
  auto L = build_warped_level(share(a), 8.0);
  auto fw = floyd_warshall(L);
  for (std::uint32_t x = 0; x < L.vertices(); ++x) {
    auto d = warped_distances(L, {x});
    for (std::uint32_t y = 0; y < L.vertices(); ++y) EXPECT_EQ(d[y], fw[x][y]);
  }
}

TEST(WarpedDistance, MetricAxiomsAndUpperEnvelope) {
  auto L = sl2_level(16, 16.0);
  detail::CounterRng rng(5, 0);
  std::vector<std::vector<double>> rows;
  std::vector<std::uint32_t> pts;
  for (int i = 0; i < 12; ++i) {
    pts.push_back(static_cast<std::uint32_t>(rng.next_u64() % L.vertices()));
    rows.push_back(warped_distances(L, {pts.back()}));
  }
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      EXPECT_EQ(rows[i][pts[j]], rows[j][pts[i]]);
      for (std::size_t k = 0; k < pts.size(); ++k) EXPECT_LE(rows[i][pts[k]], rows[i][pts[j]] + rows[j][pts[k]]);
    }
  // d(x, y) <= min(t d_flat(x, y), 1 + t d_flat(s x, y))
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::uint32_t y = 0; y < L.vertices(); ++y) {
      const double cone = L.t * flat_distance(build_sl2_torus(16), pts[i], y);
      EXPECT_LE(rows[i][y], cone);
      for (const auto& p : L.jumps)
        EXPECT_LE(rows[i][y], 1.0 + L.t * flat_distance(build_sl2_torus(16), p[pts[i]], y) + 1e-12);
    }
}

TEST(Balls, SubEdgeRadiusGivesSingletons) {
  auto L = sl2_level(16, 4.0);
  const double R = 0.99 * std::min(1.0, L.grid_step());
  for (double r : {0.0, R}) {
    auto b = ball_measure_profile(L, r);
    EXPECT_DOUBLE_EQ(b.max_measure, 1.0 / static_cast<double>(L.space->size()));
    EXPECT_TRUE(b.coverage_holds);
  }
}

TEST(Balls, CoverageAndDecreasingMeasure) {
  double prev = 2.0;
  for (std::int64_t m : {8, 16, 32, 64}) {
    auto L = sl2_level(m, static_cast<double>(m));
    auto b = ball_measure_profile(L, 3.0);
    EXPECT_TRUE(b.coverage_holds) << m;
    EXPECT_LT(b.max_measure, prev) << m;
    prev = b.max_measure;
  }
}

TEST(Balls, NegativeRadiusRejected) { EXPECT_THROW(ball_measure_profile(sl2_level(8, 8), -1.0), std::invalid_argument); }

TEST(Propagation, AllShortWordsOnSmallLevels) {
  for (std::int64_t m : {8, 16}) {
    auto L = sl2_level(m, static_cast<double>(m));
    detail::CounterRng rng(static_cast<std::uint64_t>(m), 1);
    std::vector<std::pair<Support, Support>> pairs;
    for (int i = 0; i < 40; ++i) {
      auto u = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      auto v = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      pairs.push_back({{u}, {v}});
      pairs.push_back({{u, L.vertex(u / m + 1, u % m)}, {v}});
    }
    // every word of length <= 4 over the jumps
    std::vector<std::vector<std::size_t>> words{{}};
    std::size_t separated = 0;
    for (std::size_t len = 0; len <= 4; ++len) {
      std::vector<std::vector<std::size_t>> next;
      for (const auto& w : words) {
        if (w.size() != len) continue;
        auto r = propagation_check(L, w, pairs);
        EXPECT_TRUE(r.passed()) << m << " len " << len;
        separated += r.separated_pairs;
        for (std::size_t s = 0; s < L.jumps.size() && len < 4; ++s) {
          auto w2 = w;
          w2.push_back(s);
          next.push_back(w2);
        }
      }
      words.insert(words.end(), next.begin(), next.end());
    }
    EXPECT_GT(separated, 0u);
  }
}

TEST(Propagation, IdentityAndNeighbours) {
  auto L = sl2_level(8, 8.0);
  // identity: only overlapping supports interact
  auto r = propagation_check(L, {}, {{{3}, {3}}, {{3}, {4}}});
  EXPECT_EQ(r.touching_pairs, 1u);
  EXPECT_EQ(r.separated_pairs, 1u);
  EXPECT_TRUE(r.passed());
  // a generator against supports two apart
  const std::uint32_t x = 9;
  auto d = warped_distances(L, {x});
  std::uint32_t far = 0;
  while (d[far] != 2.0) ++far;
  EXPECT_TRUE(propagation_check(L, {0}, {{{far}, {x}}}).passed());
}

TEST(Propagation, MarkovPowersSpreadAtMostK) {
  auto L = sl2_level(8, 8.0);
  const MarkovOperator A(Representation{L.space, 2.0, 1}, generator_measure(*L.space, true));
  for (std::size_t k : {1u, 2u, 3u}) {
    for (std::size_t p = 0; p < L.space->size(); p += 5) {
      Field f(L.space->size(), 0.0);
      f[p] = 1.0;
      A.apply_power(k, f);
      auto d = warped_distances(L, {L.vertex_of[p]});
      for (std::size_t q = 0; q < f.size(); ++q)
        if (f[q] != 0.0) {
          EXPECT_LE(d[L.vertex_of[q]], static_cast<double>(k));
        }
    }
  }
}

TEST(Ghost, SinglePointLevelsAreIdentity) {
  auto a = build_sl2_torus(1);
  std::vector<WarpedLevel> cone{build_warped_level(share(a), 1.0), build_warped_level(share(a), 2.0)};
  ConeField f{{3.0}, {-1.5}};
  EXPECT_EQ(ghost_apply(cone, f), f);
  auto r = ghost_defect(cone, 5);
  for (double d : r.defect) EXPECT_EQ(d, 0.0);
}

TEST(Ghost, ProjectorProperties) {
  auto cone = cone_levels({8, 16});
  EXPECT_EQ(ghost_rank(cone), 2u);
  ConeField f;
  for (std::size_t i = 0; i < cone.size(); ++i) f.push_back(random_field(Representation{cone[i].space, 2.0, 1}, 9, i));
  auto g = ghost_apply(cone, f);
  auto gg = ghost_apply(cone, g);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t x = 0; x < g[i].size(); ++x) EXPECT_NEAR(gg[i][x], g[i][x], 1e-14);
  // commutes with every pi_s blockwise
  for (std::size_t s = 0; s < cone[0].space->generators.size(); ++s) {
    ConeField pf, gp;
    for (std::size_t i = 0; i < cone.size(); ++i)
      pf.push_back(apply_pi(Representation{cone[i].space, 2.0, 1}, cone[i].space->generator(s), f[i]));
    auto a = ghost_apply(cone, pf);
    for (std::size_t i = 0; i < cone.size(); ++i) {
      auto b = apply_pi(Representation{cone[i].space, 2.0, 1}, cone[i].space->generator(s), g[i]);
      for (std::size_t x = 0; x < b.size(); ++x) EXPECT_NEAR(a[i][x], b[x], 1e-12);
    }
  }
  // mean-zero level fields are annihilated
  ConeField z{f[0], Field(cone[1].space->size(), 0.0)};
  Decomposition(Representation{cone[0].space, 2.0, 1}).project_complement(z[0]);
  const auto gz = ghost_apply(cone, z);
  for (double v : gz[0]) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Ghost, NormalizedPointIndicator) {
  auto cone = cone_levels({8});
  const double n = static_cast<double>(cone[0].space->size());
  ConeField f{Field(cone[0].space->size(), 0.0)};
  f[0][4] = std::sqrt(n);
  EXPECT_NEAR(cone_norm(cone, f), 1.0, 1e-15);
  EXPECT_NEAR(cone_norm(cone, ghost_apply(cone, f)), 1.0 / std::sqrt(n), 1e-15);
}

TEST(Ghost, DefectBelowLambdaPowers) {
  auto cone = cone_levels({8, 16, 32});
  auto r = ghost_defect(cone, 30);
  EXPECT_TRUE(r.gapped);
  EXPECT_LT(r.sup_lambda, 1.0);
  EXPECT_TRUE(r.bound_holds);
  for (const auto& l : r.levels) EXPECT_TRUE(l.bounded) << l.m;
  // lambda on the smallest level from a dense eigensolve
  const MarkovOperator A8(Representation{cone[0].space, 2.0, 1}, generator_measure(*cone[0].space, true));
  Eigen::MatrixXd M = A8.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  const auto& ev = es.eigenvalues();
  const double dense_lambda = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 2)));
  EXPECT_NEAR(r.levels[0].lambda, dense_lambda, 1e-9);
}

TEST(Ghost, CertifiedK) {
  EXPECT_EQ(certified_k(0.8, 1e-3), 31u);
  EXPECT_THROW(certified_k(1.0, 1e-3), std::invalid_argument);
}

TEST(Ghost, NonErgodicLevelFlagged) {
  std::vector<WarpedLevel> cone{build_warped_level(share(build_sl2_torus(4)), 4.0)};
  auto r = ghost_defect(cone, 3);
  EXPECT_FALSE(r.gapped);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Ghost, LocalityTightOnPointsAndDecreasing) {
  auto cone = cone_levels({8, 16, 32, 64});
  std::vector<std::vector<std::size_t>> centers;
  for (const auto& L : cone) {
    centers.emplace_back();
    for (std::size_t p = 0; p < L.space->size(); ++p) centers.back().push_back(p);
  }
  auto r = ghost_locality(cone, 3.0, centers);
  EXPECT_TRUE(r.bound_holds);
  EXPECT_TRUE(r.decreasing);
  for (const auto& l : r.levels) {
    EXPECT_NEAR(l.point_norm * l.point_norm, l.point_slice, 1e-12);
    EXPECT_LE(l.worst_excess, 1e-12);
  }
}

TEST(Ghost, FullLevelSupportIsVacuous) {
  auto cone = cone_levels({8});
  auto r = ghost_locality(cone, 100.0, {{0}});
  EXPECT_NEAR(r.levels[0].max_ball_measure, 1.0, 1e-12);
  EXPECT_NEAR(r.levels[0].max_norm, 1.0, 1e-12);
}
