#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gaplab/detail/rng.hpp"

namespace gaplab {

/// Thrown when a structural invariant of an object fails; what() names it.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(std::string invariant, const std::string& detail)
      : std::runtime_error(invariant + ": " + detail), invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

// ---------------------------------------------------------------------------
// Permutations. (a * b)(x) = a(b(x)).

using Permutation = std::vector<std::uint32_t>;

inline Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0u);
  return p;
}

inline Permutation compose(const Permutation& a, const Permutation& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compose: size mismatch");
  Permutation c(a.size());
  for (std::size_t x = 0; x < a.size(); ++x) c[x] = a[b[x]];
  return c;
}

inline Permutation inverse(const Permutation& a) {
  Permutation c(a.size());
  for (std::size_t x = 0; x < a.size(); ++x) c[a[x]] = static_cast<std::uint32_t>(x);
  return c;
}

inline bool is_bijection(const Permutation& a) {
  std::vector<char> seen(a.size(), 0);
  for (auto y : a) {
    if (y >= a.size() || seen[y]) return false;
    seen[y] = 1;
  }
  return true;
}

inline bool is_identity(const Permutation& a) {
  for (std::size_t x = 0; x < a.size(); ++x)
    if (a[x] != x) return false;
  return true;
}

struct PermutationHash {
  std::size_t operator()(const Permutation& p) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : p) h = detail::mix64(h ^ v);
    return static_cast<std::size_t>(h);
  }
};

// ---------------------------------------------------------------------------
// 2x2 integer matrices (integer lifts of SL2 elements).

using IntMatrix2 = std::array<std::int64_t, 4>;  // row-major (a b; c d)

inline IntMatrix2 multiply(const IntMatrix2& x, const IntMatrix2& y) {
  return {x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3],
          x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]};
}

/// Operator norm for the l_inf vector norm: max absolute row sum.
inline std::int64_t inf_norm(const IntMatrix2& x) {
  return std::max(std::abs(x[0]) + std::abs(x[1]), std::abs(x[2]) + std::abs(x[3]));
}

constexpr IntMatrix2 kIdentity2{1, 0, 0, 1};

// ---------------------------------------------------------------------------

struct GeneratorSystem {
  std::vector<std::string> labels;
  std::vector<std::size_t> inverses;  // inverses[i] = index of the inverse label
  bool symmetric_closure = true;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (inverses.size() != labels.size())
      throw InvariantViolation("generator system", "inverse table has wrong length");
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
      if (!seen.insert(l).second) throw InvariantViolation("generator system", "duplicate label " + l);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto j = inverses[i];
      if (j >= labels.size()) {
        if (symmetric_closure)
          throw InvariantViolation("generator system", "label " + labels[i] + " has no inverse label");
        continue;
      }
      if (inverses[j] != i)
        throw InvariantViolation("generator system", "inverse map is not an involution at " + labels[i]);
    }
  }
};

/// A group element identified by its realization on the action space.
struct GroupElement {
  Permutation perm;
  int word_length = -1;  // -1: unknown
  std::optional<IntMatrix2> lift;

  bool operator==(const GroupElement& o) const { return perm == o.perm; }
};

struct GroupElementHash {
  std::size_t operator()(const GroupElement& g) const noexcept { return PermutationHash{}(g.perm); }
};

inline GroupElement multiply(const GroupElement& a, const GroupElement& b) {
  GroupElement c{compose(a.perm, b.perm), -1, std::nullopt};
  if (a.word_length >= 0 && b.word_length >= 0) c.word_length = a.word_length + b.word_length;
  if (a.lift && b.lift) c.lift = multiply(*a.lift, *b.lift);
  return c;
}

inline GroupElement inverse(const GroupElement& a) {
  GroupElement c{inverse(a.perm), a.word_length, std::nullopt};
  if (a.lift) {
    const auto& m = *a.lift;  // determinant one
    c.lift = IntMatrix2{m[3], -m[1], -m[2], m[0]};
  }
  return c;
}

// ---------------------------------------------------------------------------

struct FiniteAction {
  std::string name;
  std::vector<double> weights;
  GeneratorSystem generators;
  std::vector<Permutation> maps;  // maps[s][x] = s . x
  // Optional torus bookkeeping: coordinates in (Z/modulus)^2 and integer lifts.
  std::int64_t modulus = 0;
  std::vector<std::array<std::int64_t, 2>> coords;
  std::vector<IntMatrix2> matrices;
  bool regular = false;  // points are the group elements, point 0 the identity

  std::size_t size() const { return weights.size(); }

  void validate() const {
    generators.validate();
    const std::size_t n = size();
    if (n == 0) throw InvariantViolation("probability space", "no points");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvariantViolation("probability space", "negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvariantViolation("probability space", "weights do not sum to 1");
    if (maps.size() != generators.size())
      throw InvariantViolation("generator maps", "one map per generator label required");
    for (std::size_t s = 0; s < maps.size(); ++s) {
      const auto& m = maps[s];
      if (m.size() != n || !is_bijection(m))
        throw InvariantViolation("generator maps", "map for " + generators.labels[s] + " is not a bijection");
      for (std::size_t x = 0; x < n; ++x) {
        if (std::abs(weights[m[x]] - weights[x]) > 1e-15)
          throw InvariantViolation("measure preservation",
                                   "generator " + generators.labels[s] + " moves point " + std::to_string(x) +
                                       " to a point of different weight");
      }
      const auto j = generators.inverses[s];
      if (j < maps.size() && !is_identity(compose(maps[j], m)))
        throw InvariantViolation("inverse pairing",
                                 "maps for " + generators.labels[s] + " and its inverse do not compose to identity");
    }
    if (!coords.empty() && coords.size() != n) throw InvariantViolation("coordinates", "wrong length");
    if (!matrices.empty() && matrices.size() != maps.size())
      throw InvariantViolation("generator matrices", "wrong length");
  }

  /// Orbit index per point under the generated group; orbits numbered by first point.
  std::vector<std::size_t> orbit_labels() const {
    const std::size_t n = size();
    std::vector<std::size_t> label(n, n);
    std::size_t next = 0;
    for (std::size_t x0 = 0; x0 < n; ++x0) {
      if (label[x0] != n) continue;
      std::deque<std::size_t> queue{x0};
      label[x0] = next;
      while (!queue.empty()) {
        const auto x = queue.front();
        queue.pop_front();
        for (const auto& m : maps) {
          const auto y = m[x];
          if (label[y] == n) {
            label[y] = next;
            queue.push_back(y);
          }
        }
      }
      ++next;
    }
    return label;
  }

  std::size_t orbit_count() const {
    const auto l = orbit_labels();
    return l.empty() ? 0 : *std::max_element(l.begin(), l.end()) + 1;
  }

  /// Transitivity on support points.
  bool ergodic() const {
    const auto l = orbit_labels();
    std::optional<std::size_t> seen;
    for (std::size_t x = 0; x < l.size(); ++x) {
      if (weights[x] <= 0.0) continue;
      if (seen && *seen != l[x]) return false;
      seen = l[x];
    }
    return true;
  }

  GroupElement identity() const { return {identity_permutation(size()), 0, kIdentity2}; }

  GroupElement generator(std::size_t s) const {
    GroupElement g{maps.at(s), 1, std::nullopt};
    if (!matrices.empty()) g.lift = matrices[s];
    if (is_identity(g.perm)) g.word_length = 0;
    return g;
  }

  std::size_t generator_index(const std::string& label) const {
    for (std::size_t s = 0; s < generators.size(); ++s)
      if (generators.labels[s] == label) return s;
    throw std::invalid_argument("unknown generator label " + label);
  }
};

// ---------------------------------------------------------------------------
// Builders.

inline FiniteAction build_cyclic(std::size_t n) {
  if (n == 0) throw std::invalid_argument("build_cyclic: n must be positive");
  FiniteAction a;
  a.name = "Z/" + std::to_string(n);
  a.weights.assign(n, 1.0 / static_cast<double>(n));
  a.generators = {{"g", "g^-1"}, {1, 0}, true};
  Permutation fwd(n), back(n);
  for (std::size_t x = 0; x < n; ++x) {
    fwd[x] = static_cast<std::uint32_t>((x + 1) % n);
    back[x] = static_cast<std::uint32_t>((x + n - 1) % n);
  }
  a.maps = {fwd, back};
  a.regular = true;
  a.validate();
  return a;
}

namespace detail {

inline std::int64_t mod(std::int64_t v, std::int64_t m) {
  const auto r = v % m;
  return r < 0 ? r + m : r;
}

// Elementary generators (1 1;0 1), (1 -1;0 1), (1 0;1 1), (1 0;-1 1).
inline GeneratorSystem sl2_generators() { return {{"u", "u^-1", "l", "l^-1"}, {1, 0, 3, 2}, true}; }

inline std::vector<IntMatrix2> sl2_generator_matrices() {
  return {IntMatrix2{1, 1, 0, 1}, IntMatrix2{1, -1, 0, 1}, IntMatrix2{1, 0, 1, 1}, IntMatrix2{1, 0, -1, 1}};
}

}  // namespace detail

/// SL2(Z/m) acting on itself by left multiplication, elementary generators.
inline FiniteAction build_sl2_regular(std::int64_t m) {
  if (m < 1) throw std::invalid_argument("build_sl2_regular: modulus must be at least 1");
  using detail::mod;
  std::vector<IntMatrix2> elems;
  std::unordered_map<std::int64_t, std::uint32_t> index;
  auto key = [m](const IntMatrix2& x) { return ((x[0] * m + x[1]) * m + x[2]) * m + x[3]; };
  const IntMatrix2 id{mod(1, m), 0, 0, mod(1, m)};
  elems.push_back(id);
  index[key(id)] = 0;
  for (std::int64_t a = 0; a < m; ++a)
    for (std::int64_t b = 0; b < m; ++b)
      for (std::int64_t c = 0; c < m; ++c)
        for (std::int64_t d = 0; d < m; ++d) {
          const IntMatrix2 x{a, b, c, d};
          if (mod(a * d - b * c, m) != mod(1, m) || index.count(key(x))) continue;
          index[key(x)] = static_cast<std::uint32_t>(elems.size());
          elems.push_back(x);
        }
  FiniteAction act;
  act.name = "SL2(Z/" + std::to_string(m) + ")";
  act.weights.assign(elems.size(), 1.0 / static_cast<double>(elems.size()));
  act.generators = detail::sl2_generators();
  act.matrices = detail::sl2_generator_matrices();
  for (const auto& g : act.matrices) {
    Permutation p(elems.size());
    for (std::size_t i = 0; i < elems.size(); ++i) {
      auto y = multiply(g, elems[i]);
      for (auto& v : y) v = mod(v, m);
      p[i] = index.at(key(y));
    }
    act.maps.push_back(std::move(p));
  }
  act.modulus = m;
  act.regular = true;
  act.validate();
  return act;
}

/// SL2(Z) generators acting linearly on the finite torus (Z/m)^2; point (x, y)
/// has index x*m + y. Not ergodic for m >= 2 (the origin is fixed).
/// Linear action of integer matrices on (Z/m)^2, point index x*m + y.
inline FiniteAction build_torus(std::int64_t m, GeneratorSystem gens, std::vector<IntMatrix2> matrices) {
  if (m < 1) throw std::invalid_argument("build_torus: modulus must be at least 1");
  if (matrices.size() != gens.size()) throw std::invalid_argument("build_torus: one matrix per generator label required");
  using detail::mod;
  const auto n = static_cast<std::size_t>(m * m);
  FiniteAction act;
  act.name = "(Z/" + std::to_string(m) + ")^2";
  act.weights.assign(n, 1.0 / static_cast<double>(n));
  act.generators = std::move(gens);
  act.matrices = std::move(matrices);
  act.modulus = m;
  for (std::int64_t x = 0; x < m; ++x)
    for (std::int64_t y = 0; y < m; ++y) act.coords.push_back({x, y});
  for (const auto& g : act.matrices) {
    Permutation p(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [x, y] = act.coords[i];
      p[i] = static_cast<std::uint32_t>(mod(g[0] * x + g[1] * y, m) * m + mod(g[2] * x + g[3] * y, m));
    }
    act.maps.push_back(std::move(p));
  }
  act.validate();
  return act;
}

inline FiniteAction build_sl2_torus(std::int64_t m) {
  if (m < 1) throw std::invalid_argument("build_sl2_torus: modulus must be at least 1");
  return build_torus(m, detail::sl2_generators(), detail::sl2_generator_matrices());
}

/// The sub-action on the orbit of `point`, renormalized to a probability space.
inline FiniteAction restrict_to_orbit(const FiniteAction& a, std::size_t point) {
  const auto labels = a.orbit_labels();
  std::vector<std::uint32_t> local(a.size(), UINT32_MAX);
  std::vector<std::size_t> members;
  for (std::size_t x = 0; x < a.size(); ++x) {
    if (labels[x] == labels.at(point)) {
      local[x] = static_cast<std::uint32_t>(members.size());
      members.push_back(x);
    }
  }
  FiniteAction r;
  r.name = a.name + "|orbit(" + std::to_string(point) + ")";
  double total = 0.0;
  for (auto x : members) total += a.weights[x];
  for (auto x : members) r.weights.push_back(a.weights[x] / total);
  r.generators = a.generators;
  r.matrices = a.matrices;
  r.modulus = a.modulus;
  for (const auto& m : a.maps) {
    Permutation p(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) p[i] = local[m[members[i]]];
    r.maps.push_back(std::move(p));
  }
  if (!a.coords.empty())
    for (auto x : members) r.coords.push_back(a.coords[x]);
  r.validate();
  return r;
}

/// The ergodic part of the torus action: the orbit of the primitive vector (1, 0).
inline FiniteAction build_sl2_torus_orbit(std::int64_t m) {
  if (m < 2) throw std::invalid_argument("build_sl2_torus_orbit: modulus must be at least 2");
  auto r = restrict_to_orbit(build_sl2_torus(m), static_cast<std::size_t>(m));  // (1,0)
  r.name = "(Z/" + std::to_string(m) + ")^2 primitive orbit";
  return r;
}

/// Grid steps between two torus points in the l_inf metric with wraparound;
/// the flat distance is this over the modulus.
inline std::int64_t torus_steps(const FiniteAction& a, std::size_t x, std::size_t y) {
  if (a.coords.empty() || a.modulus < 1) throw std::invalid_argument("torus_steps: action carries no torus coordinates");
  std::int64_t best = 0;
  for (int i = 0; i < 2; ++i) {
    const std::int64_t d = detail::mod(a.coords[x][i] - a.coords[y][i], a.modulus);
    best = std::max(best, std::min(d, a.modulus - d));
  }
  return best;
}

inline double flat_distance(const FiniteAction& a, std::size_t x, std::size_t y) {
  return static_cast<double>(torus_steps(a, x, y)) / static_cast<double>(a.modulus);
}

/// Uniform-weight action by k random permutations and their inverses (property tests).
inline FiniteAction build_random_action(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n == 0 || k == 0) throw std::invalid_argument("build_random_action: empty");
  FiniteAction a;
  a.name = "random(" + std::to_string(n) + "," + std::to_string(k) + "," + std::to_string(seed) + ")";
  a.weights.assign(n, 1.0 / static_cast<double>(n));
  detail::CounterRng rng(seed, 0x7a11);
  for (std::size_t i = 0; i < k; ++i) {
    Permutation p = identity_permutation(n);
    for (std::size_t j = n; j > 1; --j) std::swap(p[j - 1], p[rng.next_u64() % j]);  // Fisher-Yates
    a.generators.labels.push_back("s" + std::to_string(i));
    a.generators.labels.push_back("s" + std::to_string(i) + "^-1");
    a.generators.inverses.push_back(2 * i + 1);
    a.generators.inverses.push_back(2 * i);
    a.maps.push_back(p);
    a.maps.push_back(inverse(p));
  }
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------

/// Breadth-first closure: every distinct element realized by a word of length
/// <= r, in discovery order, with its minimal word length.
inline std::vector<GroupElement> word_ball(const FiniteAction& a, std::size_t r) {
  std::vector<GroupElement> ball{a.identity()};
  std::unordered_set<Permutation, PermutationHash> seen{ball[0].perm};
  std::size_t frontier_begin = 0;
  for (std::size_t len = 1; len <= r; ++len) {
    const std::size_t frontier_end = ball.size();
    for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
      for (std::size_t s = 0; s < a.generators.size(); ++s) {
        GroupElement g = multiply(ball[i], a.generator(s));
        if (seen.insert(g.perm).second) {
          g.word_length = static_cast<int>(len);
          ball.push_back(std::move(g));
        }
      }
    }
    if (ball.size() == frontier_end) break;  // stabilized
    frontier_begin = frontier_end;
  }
  return ball;
}

// ---------------------------------------------------------------------------

struct CayleyGraph {
  std::size_t vertices = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint32_t>> out;  // out[s][v] = s . v

  std::size_t degree() const { return out.size(); }

  bool connected() const {
    if (vertices == 0) return true;
    std::vector<char> seen(vertices, 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& m : out) {
        if (!seen[m[v]]) {
          seen[m[v]] = 1;
          ++count;
          stack.push_back(m[v]);
        }
      }
    }
    return count == vertices;
  }

  /// Edge multiplicity matrix is symmetric.
  bool symmetric() const {
    std::unordered_map<std::uint64_t, long> count;
    for (const auto& m : out)
      for (std::size_t v = 0; v < vertices; ++v) {
        ++count[(static_cast<std::uint64_t>(v) << 32) | m[v]];
        --count[(static_cast<std::uint64_t>(m[v]) << 32) | v];
      }
    return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 0; });
  }
};

/// Cayley graph of a regular action (Schreier graph otherwise).
inline CayleyGraph cayley_graph(const FiniteAction& a) {
  CayleyGraph g;
  g.vertices = a.size();
  g.labels = a.generators.labels;
  for (const auto& m : a.maps) g.out.push_back(m);
  return g;
}

// ---------------------------------------------------------------------------
// JSON: points, weights, generator permutations as index arrays.

inline nlohmann::ordered_json to_json(const FiniteAction& a) {
  nlohmann::ordered_json j;
  j["name"] = a.name;
  j["points"] = a.size();
  j["weights"] = a.weights;
  auto gens = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < a.generators.size(); ++s) {
    nlohmann::ordered_json g;
    g["label"] = a.generators.labels[s];
    g["inverse"] = a.generators.labels[a.generators.inverses[s]];
    g["map"] = a.maps[s];
    gens.push_back(std::move(g));
  }
  j["generators"] = std::move(gens);
  return j;
}

/// Inverse of to_json; validates the result.
inline FiniteAction action_from_json(const nlohmann::json& j) {
  FiniteAction a;
  a.name = j.value("name", std::string("explicit"));
  const auto n = j.at("points").get<std::size_t>();
  if (j.contains("weights")) {
    a.weights = j.at("weights").get<std::vector<double>>();
  } else {
    a.weights.assign(n, 1.0 / static_cast<double>(n));
  }
  if (a.weights.size() != n) throw std::invalid_argument("weights: length differs from points");
  for (const auto& g : j.at("generators")) a.generators.labels.push_back(g.at("label").get<std::string>());
  for (const auto& g : j.at("generators")) {
    const auto inv = g.at("inverse").get<std::string>();
    auto it = std::find(a.generators.labels.begin(), a.generators.labels.end(), inv);
    if (it == a.generators.labels.end()) throw std::invalid_argument("generators: unknown inverse label " + inv);
    a.generators.inverses.push_back(static_cast<std::size_t>(it - a.generators.labels.begin()));
    a.maps.push_back(g.at("map").get<Permutation>());
  }
  a.validate();
  return a;
}

}  // namespace gaplab
