#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gaplab/detail/simplex.hpp"
#include "gaplab/group_core.hpp"

namespace gaplab {

inline constexpr double kProbabilityTolerance = 1e-12;

/// Finitely supported probability measure on realized group elements. Atoms
/// keep insertion order so every derived computation is deterministic.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  static DiscreteMeasure dirac(const GroupElement& g) {
    DiscreteMeasure m;
    m.add(g, 1.0);
    return m;
  }

  static DiscreteMeasure uniform(const std::vector<GroupElement>& support) {
    if (support.empty()) throw std::invalid_argument("uniform measure on an empty set");
    DiscreteMeasure m;
    for (const auto& g : support) {
      if (m.index_.count(g.perm)) throw std::invalid_argument("uniform measure: repeated element");
      m.add(g, 1.0);
    }
    for (auto& a : m.atoms_) a.second /= static_cast<double>(support.size());
    return m;
  }

  /// Adds weight to an atom (merging with an existing one). Zero weights are kept
  /// out of the support.
  void add(const GroupElement& g, double w) {
    if (w < 0.0) throw std::invalid_argument("negative atom weight");
    if (w == 0.0) return;
    auto it = index_.find(g.perm);
    if (it == index_.end()) {
      index_.emplace(g.perm, atoms_.size());
      atoms_.emplace_back(g, w);
    } else {
      auto& atom = atoms_[it->second];
      atom.second += w;
      if (g.word_length >= 0 && (atom.first.word_length < 0 || g.word_length < atom.first.word_length)) {
        atom.first.word_length = g.word_length;
        atom.first.lift = g.lift;
      }
    }
  }

  const std::vector<std::pair<GroupElement, double>>& atoms() const { return atoms_; }
  std::size_t support_size() const { return atoms_.size(); }
  std::size_t degree() const { return atoms_.empty() ? 0 : atoms_.front().first.perm.size(); }

  double operator()(const GroupElement& g) const { return weight(g.perm); }
  double weight(const Permutation& p) const {
    auto it = index_.find(p);
    return it == index_.end() ? 0.0 : atoms_[it->second].second;
  }
  bool contains(const Permutation& p) const { return index_.count(p) != 0; }

  double total() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.second;
    return s;
  }

  void validate() const {
    if (atoms_.empty()) throw InvariantViolation("probability measure", "empty support");
    for (const auto& a : atoms_) {
      if (!(a.second >= 0.0)) throw InvariantViolation("probability measure", "negative weight");
      if (a.first.perm.size() != degree()) throw InvariantViolation("probability measure", "mixed realizations");
    }
    if (std::abs(total() - 1.0) > kProbabilityTolerance)
      throw InvariantViolation("probability measure", "weights do not sum to 1");
  }

  /// (g . mu)(h) = mu(g^-1 h)
  DiscreteMeasure left_translate(const GroupElement& g) const {
    DiscreteMeasure m;
    for (const auto& [h, w] : atoms_) m.add(multiply(g, h), w);
    return m;
  }

  /// (mu . g)(h) = mu(h g^-1)
  DiscreteMeasure right_translate(const GroupElement& g) const {
    DiscreteMeasure m;
    for (const auto& [h, w] : atoms_) m.add(multiply(h, g), w);
    return m;
  }

  /// Reflected measure: mu^v(g) = mu(g^-1).
  DiscreteMeasure reflect() const {
    DiscreteMeasure m;
    for (const auto& [h, w] : atoms_) m.add(inverse(h), w);
    return m;
  }

 private:
  std::vector<std::pair<GroupElement, double>> atoms_;
  std::unordered_map<Permutation, std::size_t, PermutationHash> index_;
};

/// (mu * nu)(g) = sum_h mu(h) nu(h^-1 g)
inline DiscreteMeasure convolve(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.degree() != nu.degree()) throw std::invalid_argument("convolve: measures realized on different spaces");
  DiscreteMeasure out;
  for (const auto& [h, a] : mu.atoms())
    for (const auto& [k, b] : nu.atoms()) out.add(multiply(h, k), a * b);
  return out;
}

/// k-fold convolution power by repeated squaring; power(mu, 0) = delta_e.
inline DiscreteMeasure power(const DiscreteMeasure& mu, std::size_t k) {
  if (mu.support_size() == 0) throw std::invalid_argument("power: empty measure");
  DiscreteMeasure result = DiscreteMeasure::dirac({identity_permutation(mu.degree()), 0, kIdentity2});
  DiscreteMeasure base = mu;
  while (k > 0) {
    if (k & 1u) result = convolve(result, base);
    k >>= 1u;
    if (k > 0) base = convolve(base, base);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Admissibility.

struct AdmissibilityCertificate {
  // alpha and beta are indexed like the measure's atoms.
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<GroupElement> kazhdan_set;
  double M = 0.0;
};

struct AdmissibilityRefusal {
  std::string reason;
  // Infeasibility witness: points of supp rho that alpha could not use, or
  // the (h, s) pair whose constraint is violated by every candidate.
  std::vector<GroupElement> witness;
};

/// Re-verifies every certificate invariant; returns the violated ones (empty = valid).
inline std::vector<std::string> verify_certificate(const DiscreteMeasure& rho, const AdmissibilityCertificate& c,
                                                   double tol = 1e-12) {
  std::vector<std::string> bad;
  const auto& atoms = rho.atoms();
  if (c.alpha.size() != atoms.size() || c.beta.size() != atoms.size()) {
    bad.emplace_back("alpha/beta not aligned with the support");
    return bad;
  }
  double sa = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (c.alpha[i] < -tol || c.beta[i] < -tol) bad.emplace_back("negative alpha or beta");
    sa += c.alpha[i];
    sab += c.alpha[i] + c.beta[i];
    if (std::abs((c.alpha[i] + c.beta[i]) / c.M - atoms[i].second) > tol)
      bad.emplace_back("(alpha+beta)/M does not reproduce rho");
  }
  if (std::abs(sa - 1.0) > tol) bad.emplace_back("sum of alpha is not 1");
  if (std::abs(sab - c.M) > tol * std::max(1.0, c.M)) bad.emplace_back("M differs from sum(alpha+beta)");
  if (c.M < 2.0 - tol) bad.emplace_back("M below 2");
  // beta(g) >= alpha(s^-1 g): iterate over alpha's support x, g = s x.
  std::unordered_map<Permutation, std::size_t, PermutationHash> idx;
  for (std::size_t i = 0; i < atoms.size(); ++i) idx.emplace(atoms[i].first.perm, i);
  for (const auto& s : c.kazhdan_set) {
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (c.alpha[i] <= tol) continue;
      auto it = idx.find(compose(s.perm, atoms[i].first.perm));
      const double b = it == idx.end() ? 0.0 : c.beta[it->second];
      if (b < c.alpha[i] - tol) {
        bad.emplace_back("beta(s g) < alpha(g) for a Kazhdan element s");
        return bad;
      }
    }
  }
  return bad;
}

/// Uniform measure on Qg u {g} with alpha = delta_g and beta = 1_{Qg}.
inline std::pair<DiscreteMeasure, AdmissibilityCertificate> uniform_extended(const std::vector<GroupElement>& Q,
                                                                            const GroupElement& g) {
  if (Q.empty()) throw std::invalid_argument("uniform_extended: empty Kazhdan set");
  for (const auto& s : Q) {
    if (s == g) throw std::invalid_argument("uniform_extended: g belongs to Q");
    if (is_identity(s.perm)) throw std::invalid_argument("uniform_extended: identity in Q makes Qg contain g");
  }
  std::vector<GroupElement> support{g};
  for (const auto& s : Q) support.push_back(multiply(s, g));
  DiscreteMeasure mu = DiscreteMeasure::uniform(support);  // rejects repeated elements of Q
  AdmissibilityCertificate c;
  c.kazhdan_set = Q;
  c.alpha.assign(mu.support_size(), 0.0);
  c.beta.assign(mu.support_size(), 1.0);
  c.alpha[0] = 1.0;
  c.beta[0] = 0.0;
  c.M = static_cast<double>(Q.size() + 1);
  return {std::move(mu), std::move(c)};
}

using AdmissibilityResult = std::variant<AdmissibilityCertificate, AdmissibilityRefusal>;

/// Minimal normalizing factor over all (alpha, beta)-decompositions of rho,
/// solved as a linear program in (alpha restricted to the admissible set F, M).
inline AdmissibilityResult certify_admissible(const DiscreteMeasure& rho, const std::vector<GroupElement>& Q) {
  rho.validate();
  if (Q.empty()) throw std::invalid_argument("certify_admissible: empty Kazhdan set");
  const auto& atoms = rho.atoms();
  const std::size_t n = atoms.size();
  std::unordered_map<Permutation, std::size_t, PermutationHash> idx;
  for (std::size_t i = 0; i < n; ++i) idx.emplace(atoms[i].first.perm, i);

  // alpha(x) > 0 forces beta(s x) > 0, so s x must lie in the support.
  std::vector<std::size_t> F;
  std::vector<std::ptrdiff_t> var(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (const auto& s : Q) ok = ok && idx.count(compose(s.perm, atoms[i].first.perm));
    if (ok) {
      var[i] = static_cast<std::ptrdiff_t>(F.size());
      F.push_back(i);
    }
  }
  if (F.empty()) {
    AdmissibilityRefusal r;
    r.reason = "no support point x has s.x in the support for every s in Q";
    for (const auto& a : atoms) r.witness.push_back(a.first);
    return r;
  }

  const std::size_t nv = F.size() + 1;  // alpha_F..., M
  detail::LinearProgram lp;
  lp.objective.assign(nv, 0.0);
  lp.objective[nv - 1] = 1.0;
  // alpha(h) + alpha(s^-1 h) - M rho(h) <= 0 for h in supp rho, s in Q
  for (std::size_t h = 0; h < n; ++h) {
    for (const auto& s : Q) {
      std::vector<double> row(nv, 0.0);
      if (var[h] >= 0) row[var[h]] += 1.0;
      auto it = idx.find(compose(inverse(s.perm), atoms[h].first.perm));
      if (it != idx.end() && var[it->second] >= 0) row[var[it->second]] += 1.0;
      row[nv - 1] = -atoms[h].second;
      lp.add_row(std::move(row), detail::Relation::LessEqual, 0.0);
    }
  }
  std::vector<double> norm(nv, 1.0);
  norm[nv - 1] = 0.0;
  lp.add_row(std::move(norm), detail::Relation::Equal, 1.0);

  const auto sol = detail::solve_lp(lp);
  if (sol.status != detail::LpStatus::Optimal) {
    AdmissibilityRefusal r;
    r.reason = "linear program infeasible";
    for (auto i : F) r.witness.push_back(atoms[i].first);
    return r;
  }
  AdmissibilityCertificate c;
  c.kazhdan_set = Q;
  c.M = sol.value;
  c.alpha.assign(n, 0.0);
  c.beta.assign(n, 0.0);
  for (std::size_t k = 0; k < F.size(); ++k) c.alpha[F[k]] = std::max(0.0, sol.x[k]);
  double sa = 0.0;
  for (double a : c.alpha) sa += a;
  for (auto& a : c.alpha) a /= sa;
  for (std::size_t i = 0; i < n; ++i) c.beta[i] = std::max(0.0, c.M * atoms[i].second - c.alpha[i]);
  return c;
}

// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const DiscreteMeasure& mu, const AdmissibilityCertificate* cert = nullptr) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < mu.atoms().size(); ++i) {
    const auto& [g, w] = mu.atoms()[i];
    nlohmann::ordered_json a;
    a["element"] = g.perm;
    a["word_length"] = g.word_length;
    a["weight"] = w;
    if (cert) {
      a["alpha"] = cert->alpha[i];
      a["beta"] = cert->beta[i];
    }
    j.push_back(std::move(a));
  }
  if (!cert) return j;
  nlohmann::ordered_json out;
  out["atoms"] = std::move(j);
  out["M"] = cert->M;
  return out;
}

}  // namespace gaplab

namespace gaplab {

/// Distinct realizations of the generators (g and g^-1 coincide in Z/2).
inline std::vector<GroupElement> generator_elements(const FiniteAction& a) {
  std::vector<GroupElement> out;
  for (std::size_t s = 0; s < a.generators.size(); ++s) {
    auto g = a.generator(s);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(std::move(g));
  }
  return out;
}

/// Uniform measure on the distinct generators, optionally with the identity
/// added (the lazy walk).
inline DiscreteMeasure generator_measure(const FiniteAction& a, bool lazy) {
  std::vector<GroupElement> support;
  if (lazy) support.push_back(a.identity());
  for (auto& g : generator_elements(a))
    if (std::find(support.begin(), support.end(), g) == support.end()) support.push_back(std::move(g));
  return DiscreteMeasure::uniform(support);
}

}  // namespace gaplab
