#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaplab/group_core.hpp"
#include "gaplab/measures.hpp"
#include "gaplab/rep_markov.hpp"

namespace gaplab {

// A level of the discretized cone is the torus (Z/m)^2 at height t. The metric
// graph lives on all m^2 grid points: king-move edges of cone length t/m (the
// l_inf flat metric scaled by t) and one edge of length 1 per generator jump
// x -> s x. Shortest paths are grid-supported chains of the warped-metric
// infimum, so they bound the continuum warped distance from above. The
// measured space is the level's action (usually a single orbit), embedded in
// the grid through its coordinates.

struct WarpedLevel {
  std::int64_t m = 0;
  double t = 1.0;
  std::shared_ptr<const FiniteAction> space;
  std::vector<std::uint32_t> vertex_of;  // space point -> grid vertex
  std::vector<std::uint32_t> point_of;   // grid vertex -> space point, UINT32_MAX if unmeasured
  std::vector<IntMatrix2> matrices;      // jump generators (closed under inverses)
  std::vector<std::int64_t> lipschitz;   // l_inf operator norms of the matrices
  std::vector<Permutation> jumps;        // on grid vertices
  std::vector<std::size_t> ptr;          // CSR adjacency
  std::vector<std::uint32_t> nbr;
  std::vector<double> len;

  std::size_t vertices() const { return static_cast<std::size_t>(m * m); }
  double grid_step() const { return t / static_cast<double>(m); }
  std::uint32_t vertex(std::int64_t x, std::int64_t y) const {
    return static_cast<std::uint32_t>(detail::mod(x, m) * m + detail::mod(y, m));
  }
};

namespace detail {

inline IntMatrix2 inverse_sl2(const IntMatrix2& a) {
  if (a[0] * a[3] - a[1] * a[2] != 1) throw std::invalid_argument("warped level: generator matrix not in SL2(Z)");
  return {a[3], -a[1], -a[2], a[0]};
}

}  // namespace detail

inline WarpedLevel build_warped_level(std::shared_ptr<const FiniteAction> space, double t) {
  if (!space || space->coords.empty() || space->modulus < 1)
    throw std::invalid_argument("build_warped_level: space must carry torus coordinates");
  if (!(t >= 1.0)) throw std::invalid_argument("build_warped_level: scale t must be at least 1");
  WarpedLevel L;
  L.m = space->modulus;
  L.t = t;
  L.space = space;
  const std::size_t n = L.vertices();
  L.point_of.assign(n, UINT32_MAX);
  for (std::size_t p = 0; p < space->size(); ++p) {
    const auto v = L.vertex(space->coords[p][0], space->coords[p][1]);
    L.vertex_of.push_back(v);
    L.point_of[v] = static_cast<std::uint32_t>(p);
  }
  for (const auto& a : space->matrices) {
    for (const auto& b : {a, detail::inverse_sl2(a)})
      if (std::find(L.matrices.begin(), L.matrices.end(), b) == L.matrices.end()) L.matrices.push_back(b);
  }
  for (const auto& a : L.matrices) {
    L.lipschitz.push_back(inf_norm(a));
    Permutation p(n);
    for (std::int64_t x = 0; x < L.m; ++x)
      for (std::int64_t y = 0; y < L.m; ++y) p[L.vertex(x, y)] = L.vertex(a[0] * x + a[1] * y, a[2] * x + a[3] * y);
    L.jumps.push_back(std::move(p));
  }

  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  auto add = [&](std::uint32_t u, std::uint32_t v, double w) {
    if (u == v) return;
    for (auto& [x, c] : adj[u])
      if (x == v) {
        c = std::min(c, w);
        return;
      }
    adj[u].emplace_back(v, w);
  };
  const double step = L.grid_step();
  for (std::int64_t x = 0; x < L.m; ++x)
    for (std::int64_t y = 0; y < L.m; ++y)
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          if (dx || dy) add(L.vertex(x, y), L.vertex(x + dx, y + dy), step);
  for (const auto& p : L.jumps)
    for (std::uint32_t v = 0; v < n; ++v) {
      add(v, p[v], 1.0);
      add(p[v], v, 1.0);
    }
  L.ptr.assign(1, 0);
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    for (auto [v, w] : row) {
      L.nbr.push_back(v);
      L.len.push_back(w);
    }
    L.ptr.push_back(L.nbr.size());
  }
  return L;
}

/// Shortest-path distances from a set of sources; vertices beyond `cutoff`
/// are left at +inf.
inline std::vector<double> warped_distances(const WarpedLevel& L, const std::vector<std::uint32_t>& sources,
                                            double cutoff = std::numeric_limits<double>::infinity()) {
  std::vector<double> dist(L.vertices(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (auto s : sources) {
    dist.at(s) = 0.0;
    pq.emplace(0.0, s);
  }
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (auto k = L.ptr[u]; k < L.ptr[u + 1]; ++k) {
      const double nd = d + L.len[k];
      const auto v = L.nbr[k];
      if (nd < dist[v] && nd <= cutoff) {
        dist[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return dist;
}

inline double warped_distance(const WarpedLevel& L, std::uint32_t x, std::uint32_t y) {
  if (x >= L.vertices() || y >= L.vertices()) throw std::invalid_argument("warped_distance: vertex outside the grid");
  return warped_distances(L, {x})[y];
}

struct WeightedEdge {
  std::uint32_t from, to;
  double length;
};

inline std::vector<WeightedEdge> edge_list(const WarpedLevel& L) {
  std::vector<WeightedEdge> out;
  for (std::uint32_t u = 0; u + 1 < L.ptr.size(); ++u)
    for (auto k = L.ptr[u]; k < L.ptr[u + 1]; ++k)
      if (u < L.nbr[k]) out.push_back({u, L.nbr[k], L.len[k]});
  return out;
}

// ---------------------------------------------------------------------------
// Balls

/// Largest l_inf operator norm over products of at most r jump matrices.
inline std::int64_t lipschitz_over_ball(const WarpedLevel& L, std::size_t r) {
  std::set<IntMatrix2> frontier{kIdentity2}, seen{kIdentity2};
  std::int64_t best = 1;
  for (std::size_t len = 1; len <= r; ++len) {
    std::set<IntMatrix2> next;
    for (const auto& a : frontier)
      for (const auto& s : L.matrices) {
        const auto b = multiply(s, a);
        if (seen.insert(b).second) {
          next.insert(b);
          best = std::max(best, inf_norm(b));
        }
      }
    frontier = std::move(next);
  }
  return best;
}

/// Grid vertices reached from v by at most r jumps.
inline std::vector<std::uint32_t> jump_ball(const WarpedLevel& L, std::uint32_t v, std::size_t r) {
  std::vector<std::uint32_t> out{v}, frontier{v};
  std::vector<char> seen(L.vertices(), 0);
  seen[v] = 1;
  for (std::size_t len = 1; len <= r; ++len) {
    std::vector<std::uint32_t> next;
    for (auto u : frontier)
      for (const auto& p : L.jumps)
        if (!seen[p[u]]) {
          seen[p[u]] = 1;
          next.push_back(p[u]);
        }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

struct BallProfile {
  double R = 0.0;
  double max_measure = 0.0;  // max over centers of nu(B_O(x, R))
  std::size_t argmax = 0;    // space point attaining it
  double T = 0.0;            // cone radius of the coverage, R * max Lipschitz over |g| <= R
  bool coverage_holds = true;
  std::size_t centers = 0;
};

/// Measure of the warped ball about a space point (space points only carry mass).
inline double ball_measure(const WarpedLevel& L, std::size_t point, double R, std::vector<std::uint32_t>* members = nullptr) {
  const auto dist = warped_distances(L, {L.vertex_of.at(point)}, R);
  double s = 0.0;
  for (std::uint32_t v = 0; v < dist.size(); ++v) {
    if (!(dist[v] <= R)) continue;
    if (members) members->push_back(v);
    if (L.point_of[v] != UINT32_MAX) s += L.space->weights[L.point_of[v]];
  }
  return s;
}

/// Exact warped balls about every space point (or the given ones), their
/// largest measure, and the covering B_O(x, R) in the union over |g| <= R of
/// cone balls B(g x, T).
inline BallProfile ball_measure_profile(const WarpedLevel& L, double R, std::vector<std::size_t> centers = {}) {
  if (!(R >= 0.0)) throw std::invalid_argument("ball_measure_profile: R must be non-negative");
  if (centers.empty())
    for (std::size_t p = 0; p < L.space->size(); ++p) centers.push_back(p);
  BallProfile b;
  b.R = R;
  b.centers = centers.size();
  const auto r = static_cast<std::size_t>(std::floor(R));
  b.T = R * static_cast<double>(lipschitz_over_ball(L, r));
  // cone distance between grid points is t * steps / m
  const double limit_steps = b.T * static_cast<double>(L.m) / L.t;
  for (auto p : centers) {
    std::vector<std::uint32_t> members;
    const double mass = ball_measure(L, p, R, &members);
    if (mass > b.max_measure) b.max_measure = mass, b.argmax = p;
    const auto shadows = jump_ball(L, L.vertex_of[p], r);
    for (auto v : members) {
      bool covered = false;
      for (auto z : shadows) {
        std::int64_t steps = 0;
        for (int i = 0; i < 2; ++i) {
          const std::int64_t d = detail::mod((i ? v % L.m : v / L.m) - (i ? z % L.m : z / L.m), L.m);
          steps = std::max(steps, std::min(d, L.m - d));
        }
        if (static_cast<double>(steps) <= limit_steps + 1e-9) {
          covered = true;
          break;
        }
      }
      if (!covered) b.coverage_holds = false;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Finite propagation

struct PropagationResult {
  std::size_t separated_pairs = 0;  // pairs with dist(supp phi, supp psi) > |g|
  std::size_t violations = 0;       // separated pairs where phi pi_g psi != 0
  std::size_t touching_pairs = 0;   // close pairs where the product is nonzero (allowed)
  bool passed() const { return violations == 0; }
};

using Support = std::vector<std::uint32_t>;  // grid vertices

/// g given as a word in jump indices; its length is the word length.
/// phi pi_g psi != 0 iff g(supp psi) meets supp phi, checked on indices.
inline PropagationResult propagation_check(const WarpedLevel& L, const std::vector<std::size_t>& word,
                                           const std::vector<std::pair<Support, Support>>& pairs) {
  Permutation g = identity_permutation(L.vertices());
  for (auto s : word) {
    if (s >= L.jumps.size()) throw std::invalid_argument("propagation_check: unknown jump index");
    g = compose(L.jumps[s], g);
  }
  const double len = static_cast<double>(word.size());
  PropagationResult r;
  std::vector<char> in_phi(L.vertices(), 0);
  for (const auto& [phi, psi] : pairs) {
    const auto dist = warped_distances(L, psi);
    double sep = std::numeric_limits<double>::infinity();
    for (auto v : phi) sep = std::min(sep, dist.at(v));
    for (auto v : phi) in_phi[v] = 1;
    bool meets = false;
    for (auto v : psi) meets = meets || in_phi[g[v]];
    for (auto v : phi) in_phi[v] = 0;
    if (sep > len) {
      ++r.separated_pairs;
      if (meets) ++r.violations;
    } else if (meets) {
      ++r.touching_pairs;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ghost projection

/// Per-level mean projector; a cone field is one Field per level.
using ConeField = std::vector<Field>;

inline ConeField ghost_apply(const std::vector<WarpedLevel>& cone, const ConeField& f) {
  if (f.size() != cone.size()) throw std::invalid_argument("ghost_apply: one field per level required");
  ConeField out;
  for (std::size_t i = 0; i < cone.size(); ++i) {
    const auto& w = cone[i].space->weights;
    if (f[i].size() != w.size()) throw std::invalid_argument("ghost_apply: field has wrong size");
    double m = 0.0;
    for (std::size_t x = 0; x < w.size(); ++x) m += w[x] * f[i][x];
    out.emplace_back(w.size(), m);
  }
  return out;
}

inline double cone_norm(const std::vector<WarpedLevel>& cone, const ConeField& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < cone.size(); ++i) {
    const auto& w = cone[i].space->weights;
    for (std::size_t x = 0; x < w.size(); ++x) s += w[x] * f[i][x] * f[i][x];
  }
  return std::sqrt(s);
}

/// Rank of the projector: one constant direction per level.
inline std::size_t ghost_rank(const std::vector<WarpedLevel>& cone) { return cone.size(); }

struct GhostLevel {
  std::int64_t m = 0;
  double t = 0.0;
  std::size_t points = 0;
  double lambda = 0.0;
  std::vector<double> defect;  // |A^k - G| on the level, k = 0..k_max
  bool bounded = true;         // defect(k) <= lambda^k + 1e-9
};

struct GhostReport {
  std::vector<GhostLevel> levels;
  double sup_lambda = 0.0;
  std::vector<double> defect;  // sup over levels
  bool gapped = true;          // sup_lambda < 1 - 1e-6
  bool bound_holds = true;     // defect(k) <= sup_lambda^k + 1e-9
  std::vector<std::string> warnings;
};

/// Smallest k with lambda^k <= target.
inline std::size_t certified_k(double lambda, double target) {
  if (!(lambda > 0.0) || lambda >= 1.0) throw std::invalid_argument("certified_k: lambda must lie in (0, 1)");
  if (!(target > 0.0) || target >= 1.0) throw std::invalid_argument("certified_k: target must lie in (0, 1)");
  return static_cast<std::size_t>(std::ceil(std::log(target) / std::log(lambda) - 1e-12));
}

/// Measure per level defaults to the lazy uniform measure on the generators.
inline GhostReport ghost_defect(const std::vector<WarpedLevel>& cone, std::size_t k_max,
                                const std::vector<DiscreteMeasure>* measures = nullptr) {
  if (cone.empty()) throw std::invalid_argument("ghost_defect: no levels");
  if (k_max < 1) throw std::invalid_argument("ghost_defect: k_max must be at least 1");
  if (measures && measures->size() != cone.size()) throw std::invalid_argument("ghost_defect: one measure per level");
  GhostReport rep;
  rep.defect.assign(k_max + 1, 0.0);
  for (std::size_t i = 0; i < cone.size(); ++i) {
    const auto& L = cone[i];
    GhostLevel g;
    g.m = L.m;
    g.t = L.t;
    g.points = L.space->size();
    if (g.points == 1) {
      g.defect.assign(k_max + 1, 0.0);
    } else {
      const auto mu = measures ? (*measures)[i] : generator_measure(*L.space, true);
      const MarkovOperator A(Representation{L.space, 2.0, 1}, mu);
      if (!A.decomposition().ergodic()) rep.warnings.push_back("level m=" + std::to_string(L.m) + " is not ergodic");
      const auto curve = defect_curve(A, k_max);
      g.lambda = curve.defect.size() > 1 ? curve.defect[1] : 0.0;
      g.defect = curve.defect;
      if (!A.decomposition().ergodic()) {
        // a field constant on orbits but of mean zero is fixed by A^k and killed by G
        g.defect.assign(k_max + 1, 1.0);
        g.lambda = 1.0;
      }
    }
    for (std::size_t k = 0; k <= k_max; ++k) {
      if (g.defect[k] > std::pow(g.lambda, static_cast<double>(k)) + 1e-9) g.bounded = false;
      rep.defect[k] = std::max(rep.defect[k], g.defect[k]);
    }
    rep.sup_lambda = std::max(rep.sup_lambda, g.lambda);
    if (g.lambda >= 1.0 - 1e-6) rep.warnings.push_back("level m=" + std::to_string(L.m) + " is not gapped");
    rep.levels.push_back(std::move(g));
  }
  rep.gapped = rep.sup_lambda < 1.0 - 1e-6;
  for (std::size_t k = 0; k <= k_max; ++k)
    if (rep.defect[k] > std::pow(rep.sup_lambda, static_cast<double>(k)) + 1e-9) rep.bound_holds = false;
  return rep;
}

struct LocalityLevel {
  std::int64_t m = 0;
  double max_norm = 0.0;         // max |G f| over the tested unit fields
  double max_ball_measure = 0.0;
  double worst_excess = -1.0;    // max over fields of |G f|^2 - slice(f) |f|^2 (<= 0 expected)
  double point_norm = 0.0;       // |G f| for the normalized single-point indicator
  double point_slice = 0.0;      // its slice measure
};

struct LocalityReport {
  std::vector<LocalityLevel> levels;
  bool bound_holds = true;
  bool decreasing = true;  // max |G f| strictly decreasing along the levels
};

/// Unit fields supported in warped R-balls about the sampled centers: the
/// normalized ball indicator and normalized single-point indicator.
inline LocalityReport ghost_locality(const std::vector<WarpedLevel>& cone, double R,
                                     const std::vector<std::vector<std::size_t>>& centers) {
  if (!(R >= 0.0)) throw std::invalid_argument("ghost_locality: R must be non-negative");
  if (centers.size() != cone.size()) throw std::invalid_argument("ghost_locality: one center list per level");
  LocalityReport rep;
  for (std::size_t i = 0; i < cone.size(); ++i) {
    const auto& L = cone[i];
    const auto& w = L.space->weights;
    LocalityLevel lv;
    lv.m = L.m;
    auto check = [&](const std::vector<std::size_t>& support) {
      ConeField f(cone.size());
      for (std::size_t j = 0; j < cone.size(); ++j) f[j].assign(cone[j].space->size(), 0.0);
      double slice = 0.0;
      for (auto p : support) slice += w[p];
      for (auto p : support) f[i][p] = 1.0 / std::sqrt(slice);
      const double nf = cone_norm(cone, f);
      const double ng = cone_norm(cone, ghost_apply(cone, f));
      lv.max_norm = std::max(lv.max_norm, ng);
      lv.worst_excess = std::max(lv.worst_excess, ng * ng - slice * nf * nf);
      if (ng * ng > slice * nf * nf + 1e-12) rep.bound_holds = false;
      return std::pair{ng, slice};
    };
    for (auto c : centers[i]) {
      std::vector<std::uint32_t> members;
      const double mass = ball_measure(L, c, R, &members);
      lv.max_ball_measure = std::max(lv.max_ball_measure, mass);
      std::vector<std::size_t> support;
      for (auto v : members)
        if (L.point_of[v] != UINT32_MAX) support.push_back(L.point_of[v]);
      check(support);
      const auto [ng, slice] = check({c});
      lv.point_norm = ng;
      lv.point_slice = slice;
    }
    if (lv.max_norm > std::sqrt(lv.max_ball_measure) + 1e-12) rep.bound_holds = false;
    if (!rep.levels.empty() && !(lv.max_norm < rep.levels.back().max_norm)) rep.decreasing = false;
    rep.levels.push_back(lv);
  }
  return rep;
}

}  // namespace gaplab
