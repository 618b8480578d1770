#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gaplab/detail/spectral.hpp"
#include "gaplab/measures.hpp"
#include "gaplab/rep_markov.hpp"

namespace gaplab {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Modulus of convexity of l_p.

struct ModulusValue {
  double value = 0.0;
  bool exact = false;
};

/// Hilbert formula at p = 2; Hanner-type 1 - (1 - (t/2)^p)^{1/p} for p > 2;
/// Clarkson-type lower bound (p-1) t^2 / 8 for 1 < p < 2. Only p = 2 is flagged exact.
inline ModulusValue modulus(double p, double t) {
  if (!(t >= 0.0 && t <= 2.0)) throw std::invalid_argument("modulus: t must lie in [0, 2]");
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("modulus: p must lie in (1, inf)");
  if (p == 2.0) return {1.0 - std::sqrt(std::max(0.0, 1.0 - t * t / 4.0)), true};
  if (p > 2.0) {
    // expm1/log1p keep small t from rounding to zero
    const double x = std::pow(t / 2.0, p);
    return {x >= 1.0 ? 1.0 : -std::expm1(std::log1p(-x) / p), false};
  }
  return {(p - 1.0) * t * t / 8.0, false};
}

// ---------------------------------------------------------------------------

enum class Provenance { Measured, PaperFormula, Oracle };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Measured: return "measured";
    case Provenance::PaperFormula: return "paper-formula";
    case Provenance::Oracle: return "oracle";
  }
  return "?";
}

struct KazhdanCertificate {
  std::vector<GroupElement> kazhdan_set;
  double kappa = 0.0;
  double lambda = 1.0;
  double M = 0.0;
  double S_bound = kInfinity;
  Provenance provenance = Provenance::PaperFormula;
};

/// 1 - (2/M) delta(kappa)
inline double norm_bound_from_kappa(double M, double p, double kappa) {
  if (!(M >= 2.0 - 1e-12)) throw std::invalid_argument("norm_bound_from_kappa: M must be at least 2");
  if (!(kappa >= 0.0 && kappa <= 2.0)) throw std::invalid_argument("norm_bound_from_kappa: kappa must lie in [0, 2]");
  return 1.0 - (2.0 / M) * modulus(p, kappa).value;
}

struct DecayPair {
  double S = 0.0;      // sum of a_k = lambda^k over k >= 1
  double kappa = 0.0;  // 1 / (1 + S)
};

/// Geometric decay a_k = lambda^k turned into a Kazhdan constant for supp mu.
inline DecayPair kappa_from_decay(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("kappa_from_decay: lambda must be nonnegative");
  if (lambda >= 1.0) throw std::invalid_argument("kappa_from_decay: lambda >= 1 gives no summable decay");
  const double S = lambda / (1.0 - lambda);
  return {S, 1.0 / (1.0 + S)};
}

inline KazhdanCertificate certificate_from_decay(const DiscreteMeasure& mu, double lambda) {
  const auto d = kappa_from_decay(lambda);
  KazhdanCertificate c;
  for (const auto& [g, w] : mu.atoms()) c.kazhdan_set.push_back(g);
  c.kappa = d.kappa;
  c.lambda = lambda;
  c.S_bound = d.S;
  c.provenance = Provenance::PaperFormula;
  return c;
}

/// Hilbert-space improvement kappa >= sqrt(2) sqrt(1 - lambda).
inline double hilbert_improvement(double lambda, double p = 2.0) {
  if (p != 2.0) throw std::invalid_argument("hilbert_improvement: only valid for p = 2");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("hilbert_improvement: lambda must lie in [0, 1]");
  return std::sqrt(2.0) * std::sqrt(1.0 - lambda);
}

struct BoostedPair {
  std::size_t m = 1;
  double kappa = 0.0;               // 1 - lambda^m
  std::vector<GroupElement> set;    // word ball of radius m over Q u {e}; filled by boost_set
};

inline BoostedPair boost_pair(double lambda, double eps) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("boost_pair: lambda must lie in (0, 1)");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("boost_pair: eps must lie in (0, 1)");
  const double r = std::log(eps) / std::log(lambda);
  // guard against r landing a hair above an integer through rounding
  auto m = static_cast<std::size_t>(std::ceil(r - 1e-12));
  m = std::max<std::size_t>(m, 1);
  return {m, 1.0 - std::pow(lambda, static_cast<double>(m)), {}};
}

/// All products of at most m elements of Q u {e}.
inline std::vector<GroupElement> boost_set(const std::vector<GroupElement>& Q, std::size_t m) {
  if (Q.empty()) throw std::invalid_argument("boost_set: empty Q");
  const std::size_t n = Q.front().perm.size();
  std::vector<GroupElement> ball{{identity_permutation(n), 0, kIdentity2}};
  std::unordered_set<Permutation, PermutationHash> seen{ball[0].perm};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= m; ++len) {
    const std::size_t end = ball.size();
    for (std::size_t i = begin; i < end; ++i)
      for (const auto& s : Q) {
        auto g = multiply(ball[i], s);
        if (seen.insert(g.perm).second) {
          g.word_length = static_cast<int>(len);
          ball.push_back(std::move(g));
        }
      }
    begin = end;
  }
  return ball;
}

// ---------------------------------------------------------------------------
// Hecke operator conversions.

/// ||z|| <= 2m - zeta on L_2^0  =>  kappa = sqrt(zeta / m).
inline double hecke_gap_to_kappa(double m, double zeta) {
  if (!(m >= 1.0)) throw std::invalid_argument("hecke: m must be at least 1");
  if (!(zeta > 0.0 && zeta <= 2.0 * m)) throw std::invalid_argument("hecke: zeta must lie in (0, 2m]");
  return std::sqrt(zeta / m);
}

/// Kazhdan pair (Q, kappa)  =>  zeta >= 2m - 2 + sqrt(4 - kappa^2).
inline double hecke_kappa_to_gap(double m, double kappa) {
  if (!(m >= 1.0)) throw std::invalid_argument("hecke: m must be at least 1");
  if (!(kappa > 0.0 && kappa <= 2.0)) throw std::invalid_argument("hecke: kappa must lie in (0, 2]");
  return 2.0 * m - 2.0 + std::sqrt(4.0 - kappa * kappa);
}

// ---------------------------------------------------------------------------

/// Top eigenvalue on E_pi of the symmetrized uniform average over the list Q
/// (scalar, p = 2). Computed as 2 theta - 1 with theta the top eigenvalue of
/// the positive operator (I + B)/2, so negative values are resolved too.
/// Returns -inf when E_pi = {0}.
inline double averaging_top_eigenvalue(const FiniteAction& action, const std::vector<GroupElement>& Q,
                                       const NormOptions& opt = {}) {
  if (Q.empty()) throw std::invalid_argument("averaging_top_eigenvalue: empty Q");
  auto act = std::make_shared<const FiniteAction>(action);
  const Representation rep{act, 2.0, 1};
  DiscreteMeasure mu;
  for (const auto& s : Q) mu.add(s, 1.0 / static_cast<double>(Q.size()));
  const MarkovOperator A{rep, mu};
  if (A.decomposition().complement_dimension() == 0) return -kInfinity;
  const auto w = rep.flat_weights();
  Field t1(w.size()), t2(w.size());
  auto apply = [&](const Field& v, Field& out) {
    A.apply(v, t1);
    A.apply_adjoint(v, t2);
    out.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = 0.5 * v[i] + 0.25 * (t1[i] + t2[i]);
  };
  auto project = [&](Field& v) { A.decomposition().project_complement(v); };
  detail::PowerOptions po;
  po.tolerance = opt.tolerance;
  po.max_iterations = opt.max_iterations;
  po.seed = opt.seed;
  auto res = detail::power_iteration(w, apply, project, po);
  if (!res.converged) throw std::runtime_error("averaging_top_eigenvalue: power iteration did not converge");
  return std::min(1.0, 2.0 * res.value - 1.0);
}

struct KazhdanEstimate {
  double best_found = kInfinity;       // min over starts of max_s ||v - pi_s v||, an upper estimate of kappa
  double certified_lower = kInfinity;  // sqrt(2 (1 - lambda_sym)) at p = 2, else 0
  Field minimizer;
};

struct OracleOptions {
  std::size_t starts = 64;
  std::uint64_t seed = 0xca11;
  double tie_tolerance = 1e-9;
  std::vector<double> temperatures{0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4};
  std::size_t iterations_per_temperature = 60;
};

namespace detail {

// Per-element ratios phi_s = ||v - pi_s v||_p / ||v||_p and, if requested,
// Euclidean gradients.
inline std::vector<double> displacement_ratios(const Representation& rep, const std::vector<GroupElement>& Q,
                                               const Field& v, std::vector<Field>* grads) {
  const double p = rep.p;
  const auto w = rep.flat_weights();
  const std::size_t d = rep.d;
  const double nv = norm(rep, v);
  double nvp = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) nvp += w[i] * std::pow(std::abs(v[i]), p);
  std::vector<double> out;
  if (grads) grads->assign(Q.size(), Field(v.size(), 0.0));
  for (std::size_t k = 0; k < Q.size(); ++k) {
    const Field pv = apply_pi(rep, Q[k], v);
    Field u(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] - pv[i];
    const double nu = norm(rep, u);
    const double phi = nu / nv;
    out.push_back(phi);
    if (!grads || nu == 0.0) continue;
    double nup = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) nup += w[i] * std::pow(std::abs(u[i]), p);
    Field gu(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) gu[i] = w[i] * std::pow(std::abs(u[i]), p - 1.0) * (u[i] < 0 ? -1.0 : 1.0) / nup;
    // D^T gu with D = I - pi_s and (pi_s^T g)(x) = g(s x)
    Field& g = (*grads)[k];
    const auto& perm = Q[k].perm;
    for (std::size_t x = 0; x < rep.points(); ++x)
      for (std::size_t i = 0; i < d; ++i) g[x * d + i] = gu[x * d + i] - gu[perm[x] * d + i];
    for (std::size_t i = 0; i < v.size(); ++i)
      g[i] = phi * (g[i] - w[i] * std::pow(std::abs(v[i]), p - 1.0) * (v[i] < 0 ? -1.0 : 1.0) / nvp);
  }
  return out;
}

inline double softmax(const std::vector<double>& phi, double T, std::vector<double>* weights) {
  const double mx = *std::max_element(phi.begin(), phi.end());
  double z = 0.0;
  for (double x : phi) z += std::exp((x - mx) / T);
  if (weights) {
    weights->clear();
    for (double x : phi) weights->push_back(std::exp((x - mx) / T) / z);
  }
  return mx + T * std::log(z);
}

}  // namespace detail

/// kappa = min over unit v in E_pi of max_{s in Q} ||v - pi_s v||, by
/// multi-start descent on a softmax-smoothed objective with decreasing
/// temperature; the exact max is evaluated at every candidate.
inline KazhdanEstimate kazhdan_constant_oracle(const Representation& rep, const std::vector<GroupElement>& Q,
                                               const OracleOptions& opt = {}) {
  if (Q.empty()) throw std::invalid_argument("kazhdan_constant_oracle: empty Kazhdan set");
  for (const auto& s : Q)
    if (s.perm.size() != rep.points()) throw std::invalid_argument("kazhdan_constant_oracle: element not realized");
  KazhdanEstimate est;
  const Decomposition dec{rep};
  if (dec.complement_dimension() == 0) return est;

  if (rep.p == 2.0) {
    const double lam = averaging_top_eigenvalue(*rep.action, Q);
    est.certified_lower = std::sqrt(std::max(0.0, 2.0 * (1.0 - lam)));
  } else {
    est.certified_lower = 0.0;
  }

  auto exact = [&](const Field& v) {
    auto phi = detail::displacement_ratios(rep, Q, v, nullptr);
    return *std::max_element(phi.begin(), phi.end());
  };
  auto normalize = [&](Field& v) {
    dec.project_complement(v);
    const double n = norm(rep, v);
    if (n == 0.0) return false;
    for (auto& x : v) x /= n;
    return true;
  };

  for (std::size_t start = 0; start < opt.starts; ++start) {
    Field v = random_field(rep, opt.seed, start);
    if (!normalize(v)) continue;
    for (double T : opt.temperatures) {
      std::vector<Field> grads;
      std::vector<double> sw;
      auto phi = detail::displacement_ratios(rep, Q, v, &grads);
      double f = detail::softmax(phi, T, &sw);
      double step = 0.1;
      for (std::size_t it = 0; it < opt.iterations_per_temperature && step > 1e-12; ++it) {
        Field g(v.size(), 0.0);
        for (std::size_t k = 0; k < Q.size(); ++k)
          for (std::size_t i = 0; i < v.size(); ++i) g[i] += sw[k] * grads[k][i];
        dec.project_complement_euclidean(g);
        Field cand(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) cand[i] = v[i] - step * g[i];
        if (!normalize(cand)) {
          step *= 0.5;
          continue;
        }
        std::vector<Field> cgrads;
        auto cphi = detail::displacement_ratios(rep, Q, cand, &cgrads);
        std::vector<double> csw;
        const double cf = detail::softmax(cphi, T, &csw);
        if (cf < f) {
          v.swap(cand);
          grads.swap(cgrads);
          sw.swap(csw);
          f = cf;
          step *= 1.5;
        } else {
          step *= 0.5;
        }
      }
    }
    const double val = exact(v);
    if (val < est.best_found - opt.tie_tolerance || est.minimizer.empty()) {
      est.best_found = std::min(est.best_found, val);
      est.minimizer = v;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// Products of averages over S_n = X u Y_n (variant a) or X_n u Y_n (variant b).

enum class ProductVariant { A, B };

inline const char* to_string(ProductVariant v) { return v == ProductVariant::A ? "a" : "b"; }

struct ProductStep {
  ProductVariant variant = ProductVariant::A;
  DiscreteMeasure mu;                      // uniform on S_n
  std::vector<GroupElement> kazhdan_set;   // set carrying kappa_eff
  double M = 0.0;                          // certified normalizing factor
};

/// Builds mu_n uniform on S_n and certifies it. Variant (a): S_n = X u Y_n and
/// Kazhdan set X. Variant (b): S_n = {y_i x_i y_i^-1} u Y_n (|Y_n| = |X|) and
/// Kazhdan set S_n minus the identity.
inline ProductStep build_product_step(const std::vector<GroupElement>& X, const std::vector<GroupElement>& Y,
                                      ProductVariant variant) {
  std::vector<GroupElement> S;
  auto add = [&S](GroupElement g) {
    if (std::find(S.begin(), S.end(), g) == S.end()) S.push_back(std::move(g));
  };
  ProductStep step;
  step.variant = variant;
  if (variant == ProductVariant::A) {
    for (const auto& x : X) add(x);
    for (const auto& y : Y) add(y);
    step.kazhdan_set = X;
  } else {
    if (Y.size() != X.size()) throw std::invalid_argument("product step (b): |Y_n| must equal |X|");
    for (std::size_t i = 0; i < X.size(); ++i) add(multiply(multiply(Y[i], X[i]), inverse(Y[i])));
    for (const auto& y : Y) add(y);
    for (const auto& s : S)
      if (!is_identity(s.perm)) step.kazhdan_set.push_back(s);
  }
  step.mu = DiscreteMeasure::uniform(S);
  auto cert = certify_admissible(step.mu, step.kazhdan_set);
  if (!std::holds_alternative<AdmissibilityCertificate>(cert))
    throw std::invalid_argument("product step: uniform measure on S_n is not admissible: " +
                                std::get<AdmissibilityRefusal>(cert).reason);
  step.M = std::get<AdmissibilityCertificate>(cert).M;
  return step;
}

struct ProductBound {
  double kappa_eff = 0.0;
  double bound = 1.0;        // prod (1 - (2/M_n) delta(kappa_eff)), the tested bound
  double paper_bound = 1.0;  // (1 - (2/N) delta(kappa/3))^n as displayed, N = |X|
  std::vector<double> factors;
};

inline ProductBound product_average_bound(const std::vector<ProductStep>& steps, double kappa, double p,
                                          std::size_t N) {
  ProductBound b;
  if (!steps.empty()) {
    for (const auto& s : steps)
      if (s.variant != steps.front().variant) throw std::invalid_argument("product_average_bound: mixed variants");
  }
  const bool third = !steps.empty() && steps.front().variant == ProductVariant::B;
  b.kappa_eff = third ? kappa / 3.0 : kappa;
  for (const auto& s : steps) {
    const double f = norm_bound_from_kappa(s.M, p, std::min(2.0, b.kappa_eff));
    b.factors.push_back(f);
    b.bound *= f;
  }
  if (N > 0) {
    const double f = 1.0 - (2.0 / static_cast<double>(N)) * modulus(p, std::min(2.0, kappa / 3.0)).value;
    b.paper_bound = std::pow(f, static_cast<double>(steps.size()));
  }
  return b;
}

/// ||A^{mu_1} ... A^{mu_n} - P|| at p = 2, measured by power iteration.
inline double product_defect(const Representation& rep, const std::vector<ProductStep>& steps,
                             const NormOptions& opt = {}) {
  const Representation scalar{rep.action, 2.0, 1};
  std::vector<MarkovOperator> ops;
  for (const auto& s : steps) ops.emplace_back(scalar, s.mu);
  const Decomposition dec{scalar};
  if (dec.complement_dimension() == 0) return 0.0;
  if (ops.empty()) return 1.0;
  const auto w = scalar.flat_weights();
  Field tmp(w.size());
  auto apply = [&](const Field& v, Field& out) {
    out = v;
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {  // rightmost factor acts first
      it->apply(out, tmp);
      out.swap(tmp);
    }
    for (const auto& op : ops) {
      op.apply_adjoint(out, tmp);
      out.swap(tmp);
    }
  };
  auto project = [&](Field& v) { dec.project_complement(v); };
  detail::PowerOptions po;
  po.tolerance = opt.tolerance;
  po.seed = opt.seed;
  po.max_iterations = opt.max_iterations;
  auto res = detail::power_iteration(w, apply, project, po);
  if (!res.converged) throw std::runtime_error("product_defect: power iteration did not converge");
  return std::sqrt(std::max(0.0, res.value));
}

}  // namespace gaplab
