#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaplab/detail/fit.hpp"
#include "gaplab/detail/spectral.hpp"
#include "gaplab/group_core.hpp"
#include "gaplab/kazhdan.hpp"
#include "gaplab/measures.hpp"
#include "gaplab/rep_markov.hpp"

namespace gaplab {

// Edge sums run over ordered pairs (v, s v), one per generator label s, so an
// undirected edge of a symmetric system is counted once in each direction.
// With B f(v) = |Q|^-1 sum_s f(s v) this makes the optimal scalar constant
// exactly 1 / (2 |Q| (1 - lambda_2)).

struct PoincareScalar {
  double lambda2 = 0.0;  // top eigenvalue of B on mean-zero functions
  double kappa = 0.0;    // optimal constant; +inf when disconnected
  bool connected = true;
  std::size_t degree = 0;
  Field eigenvector;  // maximizer of the Poincare ratio (counting measure)
};

/// lambda_2 of the averaging operator over the labels, with (I + B_sym)/2 for positivity.
inline PoincareScalar poincare_scalar(const CayleyGraph& g, const NormOptions& opt = {}) {
  if (g.degree() == 0) throw std::invalid_argument("poincare_scalar: no generators");
  PoincareScalar r;
  r.degree = g.degree();
  const std::size_t n = g.vertices;
  if (n <= 1) {
    r.lambda2 = -kInfinity;
    r.kappa = 0.0;
    r.eigenvector.assign(n, 0.0);
    return r;
  }
  if (!g.symmetric()) throw std::invalid_argument("poincare_scalar: generator system must be symmetric");
  r.connected = g.connected();
  const std::vector<double> w(n, 1.0);
  const double q = static_cast<double>(g.degree());
  auto apply = [&](const Field& v, Field& out) {
    out.assign(n, 0.0);
    for (const auto& m : g.out)
      for (std::size_t x = 0; x < n; ++x) {
        out[x] += 0.25 * v[m[x]] / q;  // B v
        out[m[x]] += 0.25 * v[x] / q;  // B^T v
      }
    for (std::size_t x = 0; x < n; ++x) out[x] += 0.5 * v[x];
  };
  auto project = [&](Field& v) {
    double s = 0.0;
    for (double x : v) s += x;
    s /= static_cast<double>(n);
    for (double& x : v) x -= s;
  };
  detail::PowerOptions po;
  po.tolerance = opt.tolerance;
  po.max_iterations = opt.max_iterations;
  po.seed = opt.seed;
  auto res = detail::power_iteration(w, apply, project, po);
  if (!res.converged && r.connected) throw std::runtime_error("poincare_scalar: eigensolve did not converge");
  r.lambda2 = r.connected ? std::min(1.0, 2.0 * res.value - 1.0) : 1.0;
  r.kappa = r.connected ? 1.0 / (2.0 * q * (1.0 - r.lambda2)) : kInfinity;
  r.eigenvector = std::move(res.vector);
  return r;
}

namespace detail {

// Poincare ratio sum_v ||f(v) - Mf||_p^2 / sum_(v,sv) ||f(v) - f(sv)||_p^2 for
// l_p^d-valued f (point-major), and its gradient. f must be mean-zero.
inline double poincare_ratio(const CayleyGraph& g, double p, std::size_t d, const Field& f, Field* grad) {
  const std::size_t n = g.vertices;
  auto fiber_norm = [&](const double* u) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += std::pow(std::abs(u[i]), p);
    return std::pow(s, 1.0 / p);
  };
  // d/du ||u||_p^2 = 2 ||u||_p^{2-p} |u|^{p-1} sgn(u)
  auto add_sq_grad = [&](const double* u, double scale, double* out) {
    const double nu = fiber_norm(u);
    if (nu == 0.0) return;
    for (std::size_t i = 0; i < d; ++i)
      out[i] += scale * 2.0 * std::pow(nu, 2.0 - p) * std::pow(std::abs(u[i]), p - 1.0) * (u[i] < 0 ? -1.0 : 1.0);
  };
  double num = 0.0, den = 0.0;
  std::vector<double> diff(d);
  for (std::size_t x = 0; x < n; ++x) num += std::pow(fiber_norm(&f[x * d]), 2.0);
  for (const auto& m : g.out)
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t i = 0; i < d; ++i) diff[i] = f[x * d + i] - f[m[x] * d + i];
      den += std::pow(fiber_norm(diff.data()), 2.0);
    }
  if (den == 0.0) return num == 0.0 ? 0.0 : kInfinity;
  const double ratio = num / den;
  if (grad) {
    Field gn(f.size(), 0.0), gd(f.size(), 0.0);
    for (std::size_t x = 0; x < n; ++x) add_sq_grad(&f[x * d], 1.0, &gn[x * d]);
    std::vector<double> tmp(d);
    for (const auto& m : g.out)
      for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t i = 0; i < d; ++i) diff[i] = f[x * d + i] - f[m[x] * d + i];
        std::fill(tmp.begin(), tmp.end(), 0.0);
        add_sq_grad(diff.data(), 1.0, tmp.data());
        for (std::size_t i = 0; i < d; ++i) {
          gd[x * d + i] += tmp[i];
          gd[m[x] * d + i] -= tmp[i];
        }
      }
    grad->resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) (*grad)[i] = (gn[i] - ratio * gd[i]) / den;
  }
  return ratio;
}

inline void center_fibers(Field& f, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t x = 0; x < n; ++x) s += f[x * d + i];
    s /= static_cast<double>(n);
    for (std::size_t x = 0; x < n; ++x) f[x * d + i] -= s;
  }
}

}  // namespace detail

struct VectorPoincare {
  double p = 2.0;
  std::size_t d = 1;
  double lower_bound = 0.0;  // best ratio found
  std::size_t evaluations = 0;
};

/// Multi-start projected gradient ascent of the E-valued Poincare ratio with
/// E = l_p^d. The spectral maximizer (placed in the first fiber coordinate) is
/// one of the starts. Every value returned is attained, hence a lower bound.
inline VectorPoincare poincare_vector_lower(const CayleyGraph& g, double p, std::size_t d, std::size_t budget,
                                            std::uint64_t seed = 0x9013,
                                            const PoincareScalar* spectral = nullptr) {
  if (budget == 0) throw std::invalid_argument("poincare_vector_lower: budget must be positive");
  if (!(p > 1.0) || d == 0) throw std::invalid_argument("poincare_vector_lower: need p > 1 and d >= 1");
  VectorPoincare out{p, d, 0.0, 0};
  const std::size_t n = g.vertices;
  if (n <= 1) return out;
  std::optional<PoincareScalar> own;
  if (spectral == nullptr) {
    own = poincare_scalar(g);
    spectral = &*own;
  }
  if (!spectral->connected) {
    out.lower_bound = kInfinity;
    return out;
  }
  const std::size_t starts = std::clamp<std::size_t>(budget / 50, 1, 8);
  const std::size_t per_start = std::max<std::size_t>(1, budget / starts);
  for (std::size_t s = 0; s < starts; ++s) {
    Field f(n * d, 0.0);
    if (s == 0) {
      for (std::size_t x = 0; x < n; ++x) f[x * d] = spectral->eigenvector[x];
    } else {
      detail::CounterRng rng(seed, s);
      for (auto& v : f) v = rng.normal();
    }
    detail::center_fibers(f, n, d);
    Field grad;
    double val = detail::poincare_ratio(g, p, d, f, &grad);
    ++out.evaluations;
    double step = 1.0;
    for (std::size_t it = 1; it < per_start && out.evaluations < budget; ++it) {
      detail::center_fibers(grad, n, d);
      double gn = 0.0, fn = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) gn += grad[i] * grad[i], fn += f[i] * f[i];
      if (gn == 0.0) break;
      const double scale = std::sqrt(fn / gn);
      Field cand(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) cand[i] = f[i] + step * scale * grad[i];
      detail::center_fibers(cand, n, d);
      Field cgrad;
      const double cval = detail::poincare_ratio(g, p, d, cand, &cgrad);
      ++out.evaluations;
      if (cval > val) {
        f.swap(cand);
        grad.swap(cgrad);
        val = cval;
        step = std::min(1.0, step * 1.5);
      } else {
        step *= 0.5;
        if (step < 1e-14) break;
      }
    }
    out.lower_bound = std::max(out.lower_bound, val);
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Graph distances from the identity point of a regular action.
inline std::vector<int> word_lengths_from_identity(const FiniteAction& a) {
  if (!a.regular) throw std::invalid_argument("word lengths need a regular action");
  std::vector<int> dist(a.size(), -1);
  std::deque<std::size_t> q{0};
  dist[0] = 0;
  while (!q.empty()) {
    const auto x = q.front();
    q.pop_front();
    for (const auto& m : a.maps)
      if (dist[m[x]] < 0) {
        dist[m[x]] = dist[x] + 1;
        q.push_back(m[x]);
      }
  }
  return dist;
}

struct MirhoBound {
  std::size_t k = 0;
  double defect = 0.0;
  double mean_length = 0.0;  // sum_w rho^k(w) |w|
  double bound = 0.0;        // (mean_length / (1 - defect))^2, upper bound on kappa_P
  double spec_form = 0.0;    // 4 k mean_length, the looser form 4 k (sum of weights |w|)
  double crude = 0.0;        // #B(e,k)^3 k^3, for comparison only
};

/// Explicit Poincare upper bound from ||f - Mf|| <= (1 - defect)^-1 ||f - pi(rho^k) f||,
/// expanding each pi_w along a shortest word and applying Cauchy-Schwarz:
/// ||f - pi(rho^k) f||^2 <= (sum_w rho^k(w)|w|)^2 sum_(v,sv) |f(v) - f(sv)|^2.
/// rho must be supported on the generators and the identity.
inline MirhoBound mirho_upper_bound(const FiniteAction& a, const DiscreteMeasure& rho, std::size_t k, double defect) {
  if (!(defect >= 0.0)) throw std::invalid_argument("mirho_upper_bound: negative defect");
  if (defect > 0.5) throw std::invalid_argument("mirho_upper_bound: defect above 1/2, hypothesis fails");
  if (!a.generators.symmetric_closure) throw std::invalid_argument("mirho_upper_bound: generator system not symmetric");
  for (const auto& [g, w] : rho.atoms()) {
    bool ok = is_identity(g.perm);
    for (const auto& m : a.maps) ok = ok || g.perm == m;
    if (!ok) throw std::invalid_argument("mirho_upper_bound: rho not supported on generators and identity");
  }
  const auto len = word_lengths_from_identity(a);
  // rho^k(w) as the k-step walk distribution from the identity point
  const Representation rep{std::make_shared<const FiniteAction>(a), 2.0, 1};
  const MarkovOperator A{rep, rho};
  Field dist(a.size(), 0.0);
  dist[0] = 1.0;
  A.apply_power(k, dist);
  MirhoBound b;
  b.k = k;
  b.defect = defect;
  for (std::size_t x = 0; x < a.size(); ++x) b.mean_length += dist[x] * len[x];
  b.bound = std::pow(b.mean_length / (1.0 - defect), 2.0);
  b.spec_form = 4.0 * static_cast<double>(k) * b.mean_length;
  const auto ball = static_cast<double>(std::count_if(len.begin(), len.end(), [k](int l) {
    return l >= 0 && static_cast<std::size_t>(l) <= k;
  }));
  b.crude = std::pow(ball, 3.0) * std::pow(static_cast<double>(k), 3.0);
  return b;
}

// ---------------------------------------------------------------------------

struct QuotientSequence {
  std::vector<std::shared_ptr<const FiniteAction>> quotients;

  void validate() const {
    if (quotients.empty()) throw std::invalid_argument("quotient sequence is empty");
    for (const auto& q : quotients)
      if (q->generators.labels != quotients.front()->generators.labels)
        throw std::invalid_argument("quotient sequence: generator labels differ");
  }
};

struct QuotientResult {
  std::string name;
  std::size_t N = 0;
  PoincareScalar scalar;
  double relation = 0.0;  // kappa_P * 2|Q| (1 - lambda_2), should be 1
  std::vector<VectorPoincare> vector_bounds;
  std::optional<MirhoBound> mirho;
};

struct PoincareReport {
  std::vector<QuotientResult> quotients;
  double max_lambda2 = -kInfinity;
  double epsilon0 = 0.0;  // 1 - max lambda_2
  double max_kappa = 0.0;
  double min_kappa = kInfinity;
  double growth_exponent = 0.0;  // least-squares slope of log kappa_P against log N
  double growth_threshold = 0.5;
  bool uniform = false;
  std::size_t mirho_k = 0;
  std::vector<std::string> warnings;
};

struct SequenceOptions {
  std::vector<std::pair<double, std::size_t>> vector_cases{{2.0, 1}};
  std::size_t budget = 400;
  double growth_threshold = 0.5;
  bool mirho = true;
  std::size_t mirho_k_cap = 200;
};

/// Uniform spectral gap (lambda_2 <= 1 - eps0) against uniform Poincare constant,
/// linked quotient by quotient through the exact relation.
inline PoincareReport certify_sequence(const QuotientSequence& seq, const SequenceOptions& opt = {}) {
  seq.validate();
  if (seq.quotients.size() < 2) throw std::invalid_argument("certify_sequence: need at least two quotients");
  PoincareReport rep;
  rep.growth_threshold = opt.growth_threshold;
  std::vector<double> logN, logK;
  for (const auto& a : seq.quotients) {
    QuotientResult q;
    q.name = a->name;
    q.N = a->size();
    const auto graph = cayley_graph(*a);
    q.scalar = poincare_scalar(graph);
    if (!q.scalar.connected) rep.warnings.push_back(q.name + ": Cayley graph disconnected");
    q.relation = q.scalar.connected ? q.scalar.kappa * 2.0 * static_cast<double>(graph.degree()) * (1.0 - q.scalar.lambda2)
                                    : kInfinity;
    for (const auto& [p, d] : opt.vector_cases)
      q.vector_bounds.push_back(poincare_vector_lower(graph, p, d, opt.budget, 0x9013, &q.scalar));
    rep.max_lambda2 = std::max(rep.max_lambda2, q.scalar.lambda2);
    rep.max_kappa = std::max(rep.max_kappa, q.scalar.kappa);
    rep.min_kappa = std::min(rep.min_kappa, q.scalar.kappa);
    if (q.scalar.connected && q.N > 1) {
      logN.push_back(std::log(static_cast<double>(q.N)));
      logK.push_back(std::log(q.scalar.kappa));
    }
    rep.quotients.push_back(std::move(q));
  }
  rep.epsilon0 = 1.0 - rep.max_lambda2;
  rep.growth_exponent = detail::ls_slope(logN, logK);
  const bool all_connected = std::all_of(rep.quotients.begin(), rep.quotients.end(),
                                         [](const auto& q) { return q.scalar.connected; });
  rep.uniform = all_connected && rep.epsilon0 > 0.0 && rep.growth_exponent < opt.growth_threshold;

  // One k for the whole sequence with defect <= 1/2 for the lazy uniform measure.
  const bool regular = std::all_of(seq.quotients.begin(), seq.quotients.end(), [](const auto& a) { return a->regular; });
  if (opt.mirho && regular && all_connected) {
    std::vector<DiscreteMeasure> rhos;
    std::vector<MarkovOperator> ops;
    for (const auto& a : seq.quotients) {
      rhos.push_back(generator_measure(*a, true));
      ops.emplace_back(Representation{a, 2.0, 1}, rhos.back());
    }
    std::vector<Field> warm(ops.size());
    std::vector<double> defect(ops.size(), 1.0);
    std::size_t k = 1;
    for (; k <= opt.mirho_k_cap; ++k) {
      bool ok = true;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        auto r = detail::restricted_norm_l2(ops[i], k, {}, warm[i].empty() ? nullptr : &warm[i]);
        defect[i] = r.lambda;
        warm[i] = std::move(r.top_vector);
        ok = ok && defect[i] <= 0.5;
      }
      if (ok) break;
    }
    if (k > opt.mirho_k_cap) {
      rep.warnings.push_back("no k up to the cap brings every defect below 1/2; mirho bound skipped");
    } else {
      rep.mirho_k = k;
      for (std::size_t i = 0; i < seq.quotients.size(); ++i)
        rep.quotients[i].mirho = mirho_upper_bound(*seq.quotients[i], rhos[i], k, defect[i]);
    }
  }
  return rep;
}

}  // namespace gaplab
