#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "gaplab/detail/rng.hpp"

namespace gaplab::detail {

inline double weighted_dot(const std::vector<double>& w, const std::vector<double>& a,
                           const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * a[i] * b[i];
  return s;
}

struct PowerResult {
  double value = 0.0;  // top eigenvalue (Rayleigh quotient at exit)
  std::vector<double> vector;
  std::size_t iterations = 0;
  bool converged = false;
};

struct PowerOptions {
  double tolerance = 1e-12;
  std::size_t max_iterations = 100000;
  std::size_t min_iterations = 5;
  std::uint64_t seed = 0x5eed;
  const std::vector<double>* start = nullptr;  // warm start; projected before use
};

/// Top eigenvalue of an operator that is self-adjoint and positive
/// semidefinite for the inner product <u,v> = sum w_i u_i v_i, restricted to
/// the range of `project` (an orthogonal projector for the same product).
///
/// Stops when the extrapolated remaining increase of the Rayleigh quotient,
/// d_k r / (1 - r) with r = d_k / d_{k-1}, drops below the tolerance. A plain
/// "change below tolerance" rule stalls early on small gaps.
template <class Apply, class Project>
PowerResult power_iteration(const std::vector<double>& w, Apply&& apply, Project&& project,
                            const PowerOptions& opt = {}) {
  const std::size_t n = w.size();
  PowerResult res;
  std::vector<double> v(n), av(n);
  if (opt.start != nullptr && opt.start->size() == n) {
    v = *opt.start;
  } else {
    CounterRng rng(opt.seed, n);
    for (auto& x : v) x = rng.normal();
  }
  project(v);
  double nv = std::sqrt(weighted_dot(w, v, v));
  if (opt.start != nullptr && nv < 1e-8) {
    CounterRng rng(opt.seed, n);
    for (auto& x : v) x = rng.normal();
    project(v);
    nv = std::sqrt(weighted_dot(w, v, v));
  }
  if (nv == 0.0) {  // empty subspace
    res.vector = std::move(v);
    res.converged = true;
    return res;
  }
  for (auto& x : v) x /= nv;

  double prev = -std::numeric_limits<double>::infinity();
  double prev_delta = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    apply(v, av);
    project(av);
    const double rq = weighted_dot(w, v, av);
    const double nav = std::sqrt(weighted_dot(w, av, av));
    res.iterations = it;
    res.value = rq;
    if (nav == 0.0) {  // operator vanishes on the subspace
      res.value = 0.0;
      res.converged = true;
      break;
    }
    const double delta = std::abs(rq - prev);
    bool done = false;
    if (it >= opt.min_iterations) {
      if (delta <= 1e-3 * opt.tolerance) {
        done = true;
      } else if (delta < prev_delta) {
        const double r = delta / prev_delta;
        done = delta * r / (1.0 - r) <= opt.tolerance;
      }
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = av[i] / nav;
    if (done) {
      res.converged = true;
      break;
    }
    prev_delta = delta;
    prev = rq;
  }
  res.vector = std::move(v);
  return res;
}

}  // namespace gaplab::detail
