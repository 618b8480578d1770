#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gaplab/detail/rng.hpp"
#include "gaplab/detail/spectral.hpp"
#include "gaplab/group_core.hpp"
#include "gaplab/measures.hpp"

namespace gaplab {

/// A vector field f: X -> R^d stored point-major, f[x*d + i].
using Field = std::vector<double>;

/// Isometric representation of the acting group on l_p(X, nu; l_p^d).
struct Representation {
  std::shared_ptr<const FiniteAction> action;
  double p = 2.0;
  std::size_t d = 1;

  Representation() = default;
  Representation(std::shared_ptr<const FiniteAction> a, double p_ = 2.0, std::size_t d_ = 1)
      : action(std::move(a)), p(p_), d(d_) {
    if (!action) throw std::invalid_argument("representation without action");
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("exponent p must lie in (1, inf)");
    if (d == 0) throw std::invalid_argument("fiber dimension must be positive");
  }

  std::size_t points() const { return action->size(); }
  std::size_t dim() const { return points() * d; }

  /// nu repeated over fiber coordinates: the flat weights of the norm.
  std::vector<double> flat_weights() const {
    std::vector<double> w(dim());
    for (std::size_t x = 0; x < points(); ++x)
      for (std::size_t i = 0; i < d; ++i) w[x * d + i] = action->weights[x];
    return w;
  }

  Representation with_p(double q) const { return {action, q, d}; }
};

inline double norm(const Representation& rep, const Field& f) {
  const auto& w = rep.action->weights;
  double s = 0.0;
  if (rep.p == 2.0) {
    for (std::size_t x = 0; x < rep.points(); ++x)
      for (std::size_t i = 0; i < rep.d; ++i) s += w[x] * f[x * rep.d + i] * f[x * rep.d + i];
    return std::sqrt(s);
  }
  for (std::size_t x = 0; x < rep.points(); ++x)
    for (std::size_t i = 0; i < rep.d; ++i) s += w[x] * std::pow(std::abs(f[x * rep.d + i]), rep.p);
  return std::pow(s, 1.0 / rep.p);
}

/// (pi_g f)(x) = f(g^-1 x)
inline Field apply_pi(const Representation& rep, const GroupElement& g, const Field& f) {
  Field out(f.size());
  for (std::size_t x = 0; x < rep.points(); ++x)
    for (std::size_t i = 0; i < rep.d; ++i) out[g.perm[x] * rep.d + i] = f[x * rep.d + i];
  return out;
}

inline Field random_field(const Representation& rep, std::uint64_t seed, std::uint64_t stream = 0) {
  detail::CounterRng rng(seed, stream);
  Field f(rep.dim());
  for (auto& v : f) v = rng.normal();
  return f;
}

// ---------------------------------------------------------------------------

/// E = E^pi (+) E_pi realized as per-orbit constant fields and per-orbit
/// weighted-mean-zero fields. For ergodic actions there is one orbit.
class Decomposition {
 public:
  explicit Decomposition(const Representation& rep) : d_(rep.d), weights_(rep.action->weights) {
    labels_ = rep.action->orbit_labels();
    std::size_t k = 0;
    for (auto l : labels_) k = std::max(k, l + 1);
    orbit_mass_.assign(k, 0.0);
    orbit_size_.assign(k, 0);
    for (std::size_t x = 0; x < labels_.size(); ++x) {
      orbit_mass_[labels_[x]] += weights_[x];
      ++orbit_size_[labels_[x]];
    }
  }

  std::size_t orbits() const { return orbit_mass_.size(); }
  bool ergodic() const { return orbits() == 1; }
  const std::vector<std::size_t>& labels() const { return labels_; }

  /// Weighted mean per orbit and fiber coordinate, broadcast back to a field.
  Field mean(const Field& f) const {
    std::vector<double> acc(orbits() * d_, 0.0);
    // fields constant on an orbit keep their value exactly instead of a rounded average
    std::vector<double> first(orbits() * d_, std::numeric_limits<double>::quiet_NaN());
    std::vector<char> constant(orbits() * d_, 1);
    for (std::size_t x = 0; x < labels_.size(); ++x)
      for (std::size_t i = 0; i < d_; ++i) {
        const auto k = labels_[x] * d_ + i;
        acc[k] += weights_[x] * f[x * d_ + i];
        if (std::isnan(first[k])) first[k] = f[x * d_ + i];
        else if (first[k] != f[x * d_ + i]) constant[k] = 0;
      }
    Field out(f.size());
    for (std::size_t x = 0; x < labels_.size(); ++x) {
      const double m = orbit_mass_[labels_[x]];
      for (std::size_t i = 0; i < d_; ++i) {
        const auto k = labels_[x] * d_ + i;
        out[x * d_ + i] = constant[k] ? first[k] : (m > 0.0 ? acc[k] / m : 0.0);
      }
    }
    return out;
  }

  void project_complement(Field& f) const {
    const Field m = mean(f);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] -= m[i];
  }

  Field complement(Field f) const {
    project_complement(f);
    return f;
  }

  /// Euclidean (unweighted) orthogonal projection onto the complement; used
  /// for gradient steps, which live in the unweighted coordinate geometry.
  void project_complement_euclidean(Field& f) const {
    std::vector<double> dot(orbits() * d_, 0.0), nn(orbits(), 0.0);
    for (std::size_t x = 0; x < labels_.size(); ++x) {
      nn[labels_[x]] += weights_[x] * weights_[x];
      for (std::size_t i = 0; i < d_; ++i) dot[labels_[x] * d_ + i] += weights_[x] * f[x * d_ + i];
    }
    for (std::size_t x = 0; x < labels_.size(); ++x) {
      const double q = nn[labels_[x]];
      if (q == 0.0) continue;
      for (std::size_t i = 0; i < d_; ++i) f[x * d_ + i] -= weights_[x] * dot[labels_[x] * d_ + i] / q;
    }
  }

  /// Dimension of E_pi per fiber coordinate.
  std::size_t complement_dimension() const {
    std::size_t n = 0;
    for (auto s : orbit_size_) n += s - 1;
    return n;
  }

  /// Dense scalar mean projector (acts identically on each fiber coordinate).
  Eigen::MatrixXd dense_mean() const {
    const auto n = static_cast<Eigen::Index>(labels_.size());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index x = 0; x < n; ++x)
      for (Eigen::Index y = 0; y < n; ++y)
        if (labels_[x] == labels_[y]) P(x, y) = weights_[y] / orbit_mass_[labels_[y]];
    return P;
  }

 private:
  std::size_t d_;
  std::vector<double> weights_;
  std::vector<std::size_t> labels_;
  std::vector<double> orbit_mass_;
  std::vector<std::size_t> orbit_size_;
};

// ---------------------------------------------------------------------------

/// A f(x) = sum_g mu(g) f(g^-1 x), stored as scalar CSR rows over points and
/// applied identically on every fiber coordinate.
class MarkovOperator {
 public:
  MarkovOperator(Representation rep, DiscreteMeasure mu)
      : rep_(std::move(rep)), mu_(std::move(mu)), dec_(rep_) {
    mu_.validate();
    const std::size_t n = rep_.points();
    if (mu_.degree() != n) throw std::invalid_argument("markov_operator: measure not realized on this action");
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    for (const auto& [g, w] : mu_.atoms()) {
      const Permutation ginv = inverse(g.perm);
      for (std::size_t x = 0; x < n; ++x) {
        auto& row = rows[x];
        auto it = std::find_if(row.begin(), row.end(), [&](const auto& e) { return e.first == ginv[x]; });
        if (it == row.end()) row.emplace_back(ginv[x], w);
        else it->second += w;
      }
    }
    build_csr(rows, ptr_, col_, val_);
    std::vector<std::vector<std::pair<std::uint32_t, double>>> cols(n);
    for (std::size_t x = 0; x < n; ++x)
      for (const auto& [y, w] : rows[x]) cols[y].emplace_back(static_cast<std::uint32_t>(x), w);
    build_csr(cols, tptr_, tcol_, tval_);
  }

  const Representation& representation() const { return rep_; }
  const DiscreteMeasure& measure() const { return mu_; }
  const Decomposition& decomposition() const { return dec_; }
  std::size_t nonzeros() const { return val_.size(); }

  void apply(const Field& f, Field& out) const { spmv(ptr_, col_, val_, f, out, false); }
  Field apply(const Field& f) const {
    Field out(f.size());
    apply(f, out);
    return out;
  }

  /// Plain transpose (unweighted coordinates).
  void apply_transpose(const Field& f, Field& out) const { spmv(tptr_, tcol_, tval_, f, out, false); }

  /// Adjoint for the weighted inner product.
  void apply_adjoint(const Field& f, Field& out) const { spmv(tptr_, tcol_, tval_, f, out, true); }

  void apply_power(std::size_t k, Field& f) const {
    Field tmp(f.size());
    for (std::size_t i = 0; i < k; ++i) {
      apply(f, tmp);
      f.swap(tmp);
    }
  }

  /// Dense scalar matrix; rows are stochastic.
  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(rep_.points());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index x = 0; x < n; ++x)
      for (auto k = ptr_[x]; k < ptr_[x + 1]; ++k) A(x, col_[k]) += val_[k];
    return A;
  }

  /// Row sums (each should be 1).
  std::vector<double> row_sums() const {
    std::vector<double> s(rep_.points(), 0.0);
    for (std::size_t x = 0; x < s.size(); ++x)
      for (auto k = ptr_[x]; k < ptr_[x + 1]; ++k) s[x] += val_[k];
    return s;
  }

 private:
  using Rows = std::vector<std::vector<std::pair<std::uint32_t, double>>>;

  static void build_csr(const Rows& rows, std::vector<std::size_t>& ptr, std::vector<std::uint32_t>& col,
                        std::vector<double>& val) {
    ptr.assign(1, 0);
    for (const auto& r : rows) {
      for (const auto& [c, v] : r) {
        col.push_back(c);
        val.push_back(v);
      }
      ptr.push_back(col.size());
    }
  }

  void spmv(const std::vector<std::size_t>& ptr, const std::vector<std::uint32_t>& col, const std::vector<double>& val,
            const Field& f, Field& out, bool weighted) const {
    const std::size_t d = rep_.d;
    const auto& w = rep_.action->weights;
    out.assign(f.size(), 0.0);
    for (std::size_t x = 0; x + 1 < ptr.size(); ++x) {
      for (auto k = ptr[x]; k < ptr[x + 1]; ++k) {
        const double a = weighted ? val[k] * w[col[k]] / w[x] : val[k];
        const double* src = &f[col[k] * d];
        double* dst = &out[x * d];
        for (std::size_t i = 0; i < d; ++i) dst[i] += a * src[i];
      }
    }
  }

  Representation rep_;
  DiscreteMeasure mu_;
  Decomposition dec_;
  std::vector<std::size_t> ptr_, tptr_;
  std::vector<std::uint32_t> col_, tcol_;
  std::vector<double> val_, tval_;
};

inline MarkovOperator markov_operator(const Representation& rep, const DiscreteMeasure& mu) { return {rep, mu}; }

// ---------------------------------------------------------------------------

enum class Quality { Exact, LowerBound };

inline const char* to_string(Quality q) { return q == Quality::Exact ? "exact" : "lower_bound"; }

struct RestrictedNorm {
  double lambda = 0.0;  // exact value, or certified lower bound
  double upper = 1.0;   // equals lambda when exact
  Quality quality = Quality::Exact;
  std::size_t iterations = 0;
  Field top_vector;  // maximizing field found
};

struct NormOptions {
  double tolerance = 1e-12;  // Rayleigh stopping tolerance, see ledger
  std::size_t max_iterations = 100000;
  std::uint64_t seed = 0x5eed;
  std::size_t ascent_starts = 8;
  std::size_t ascent_iterations = 400;
};

namespace detail {

// Top singular value of A^k restricted to E_pi for the weighted l_2 norm.
// Fiber coordinates decouple at p = 2, so this runs on the scalar operator.
inline RestrictedNorm restricted_norm_l2(const MarkovOperator& A, std::size_t k, const NormOptions& opt,
                                         const Field* warm = nullptr) {
  if (A.representation().d != 1) {
    const MarkovOperator S{Representation{A.representation().action, 2.0, 1}, A.measure()};
    Field ws;
    if (warm != nullptr) {
      const std::size_t d = A.representation().d;
      ws.resize(warm->size() / d);
      for (std::size_t x = 0; x < ws.size(); ++x) ws[x] = (*warm)[x * d];
    }
    return restricted_norm_l2(S, k, opt, warm != nullptr ? &ws : nullptr);
  }
  const auto w = A.representation().flat_weights();
  Field g(w.size());
  // P commutes with A; projecting between and after the stages keeps rounding
  // leakage into the invariant part from swamping lambda^(2k) at large k.
  auto apply = [&](const Field& v, Field& out) {
    out = v;
    for (std::size_t i = 0; i < k; ++i) {
      A.apply(out, g);
      out.swap(g);
    }
    A.decomposition().project_complement(out);
    for (std::size_t i = 0; i < k; ++i) {
      A.apply_adjoint(out, g);
      out.swap(g);
    }
    A.decomposition().project_complement(out);
  };
  auto project = [&](Field& v) { A.decomposition().project_complement(v); };
  PowerOptions po;
  po.tolerance = opt.tolerance;
  po.max_iterations = opt.max_iterations;
  po.seed = opt.seed;
  po.start = warm;
  auto res = power_iteration(w, apply, project, po);
  if (!res.converged)
    throw std::runtime_error("restricted_norm: power iteration did not converge within " +
                             std::to_string(opt.max_iterations) + " iterations");
  RestrictedNorm out;
  out.lambda = std::sqrt(std::max(0.0, res.value));
  out.upper = out.lambda;
  out.quality = Quality::Exact;
  out.iterations = res.iterations;
  out.top_vector = std::move(res.vector);
  return out;
}

// log ||A^k f||_p - log ||f||_p and its Euclidean gradient.
inline double lp_log_ratio(const MarkovOperator& A, std::size_t k, const Field& f, Field* grad) {
  const auto& rep = A.representation();
  const double p = rep.p;
  const auto w = rep.flat_weights();
  std::vector<Field> iter{f};
  for (std::size_t i = 0; i < k; ++i) iter.push_back(A.apply(iter.back()));
  const Field& g = iter.back();
  double sf = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sf += w[i] * std::pow(std::abs(f[i]), p);
    sg += w[i] * std::pow(std::abs(g[i]), p);
  }
  if (sf == 0.0) return -std::numeric_limits<double>::infinity();
  if (sg == 0.0) {
    if (grad) grad->assign(f.size(), 0.0);
    return -std::numeric_limits<double>::infinity();
  }
  const double val = (std::log(sg) - std::log(sf)) / p;
  if (grad) {
    Field u(f.size()), tmp(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      u[i] = w[i] * std::pow(std::abs(g[i]), p - 1.0) * (g[i] < 0 ? -1.0 : 1.0) / sg;
    for (std::size_t i = 0; i < k; ++i) {
      A.apply_transpose(u, tmp);
      u.swap(tmp);
    }
    grad->resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      (*grad)[i] = u[i] - w[i] * std::pow(std::abs(f[i]), p - 1.0) * (f[i] < 0 ? -1.0 : 1.0) / sf;
  }
  return val;
}

// Projected gradient ascent of ||A^k f||_p / ||f||_p over E_pi from one start.
inline std::pair<double, Field> lp_ascent(const MarkovOperator& A, std::size_t k, Field f, std::size_t iterations) {
  const auto& dec = A.decomposition();
  const auto& rep = A.representation();
  dec.project_complement(f);
  double nf = norm(rep, f);
  if (nf == 0.0) return {0.0, f};
  for (auto& v : f) v /= nf;
  Field grad;
  double val = lp_log_ratio(A, k, f, &grad);
  double step = 1.0;
  for (std::size_t it = 0; it < iterations && step > 1e-14; ++it) {
    dec.project_complement_euclidean(grad);
    Field cand(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) cand[i] = f[i] + step * grad[i];
    dec.project_complement(cand);
    const double nc = norm(rep, cand);
    if (nc == 0.0) {
      step *= 0.5;
      continue;
    }
    for (auto& v : cand) v /= nc;
    Field cgrad;
    const double cval = lp_log_ratio(A, k, cand, &cgrad);
    if (cval > val) {
      f.swap(cand);
      grad.swap(cgrad);
      val = cval;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  return {std::exp(val), f};
}

}  // namespace detail

/// Norm of A^k on E_pi. Exact at p = 2; multi-start lower bound otherwise.
inline RestrictedNorm restricted_norm(const MarkovOperator& A, std::size_t k = 1, const NormOptions& opt = {}) {
  const auto& rep = A.representation();
  if (A.decomposition().complement_dimension() == 0) {
    RestrictedNorm r;
    r.lambda = 0.0;
    r.upper = 0.0;
    r.top_vector.assign(rep.dim(), 0.0);
    return r;
  }
  RestrictedNorm l2 = detail::restricted_norm_l2(A, k, opt);
  if (rep.p == 2.0) {
    if (rep.d > 1) {
      Field f(rep.dim(), 0.0);
      for (std::size_t x = 0; x < rep.points(); ++x)
        for (std::size_t i = 0; i < rep.d; ++i) f[x * rep.d + i] = l2.top_vector[x];
      l2.top_vector = std::move(f);
    }
    return l2;
  }
  RestrictedNorm out;
  out.quality = Quality::LowerBound;
  out.upper = 1.0;
  std::vector<Field> starts;
  {
    Field f(rep.dim(), 0.0);
    for (std::size_t x = 0; x < rep.points(); ++x)
      for (std::size_t i = 0; i < rep.d; ++i) f[x * rep.d + i] = l2.top_vector[x];
    starts.push_back(std::move(f));
  }
  for (std::size_t s = 1; s < opt.ascent_starts; ++s) starts.push_back(random_field(rep, opt.seed, 1000 + s));
  for (auto& f : starts) {
    auto [val, best] = detail::lp_ascent(A, k, f, opt.ascent_iterations);
    if (val > out.lambda) {
      out.lambda = std::min(val, 1.0);
      out.top_vector = std::move(best);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

/// P = I - (sum_n A^n)(I - A) as a dense scalar matrix acting fiberwise.
inline Eigen::MatrixXd neumann_projection(const MarkovOperator& A, std::optional<double> lambda = std::nullopt) {
  const auto& rep = A.representation();
  const Representation scalar{rep.action, 2.0, 1};
  const MarkovOperator S{scalar, A.measure()};
  const double lam = lambda ? *lambda : restricted_norm(S).lambda;
  if (lam >= 1.0 - 1e-6) throw std::domain_error("neumann_projection: restricted norm too close to 1 (not gapped)");
  const std::size_t n = rep.points();
  Eigen::MatrixXd P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Field e(n), term(n), next(n), sum(n);
  const std::size_t cap = 50'000'000 / std::max<std::size_t>(1, S.nonzeros()) + 10'000;
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    S.apply(e, next);
    for (std::size_t i = 0; i < n; ++i) term[i] = e[i] - next[i];  // (I - A) e_j
    std::fill(sum.begin(), sum.end(), 0.0);
    std::size_t terms = 0;
    while (true) {
      double tn = 0.0;
      for (double v : term) tn = std::max(tn, std::abs(v));
      if (tn < 1e-14) break;
      if (++terms > cap) throw std::runtime_error("neumann_projection: series did not reach 1e-14");
      for (std::size_t i = 0; i < n; ++i) sum[i] += term[i];
      S.apply(term, next);
      term.swap(next);
    }
    for (std::size_t i = 0; i < n; ++i) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[i] - sum[i];
  }
  return P;
}

/// Operator norm of a dense scalar matrix for the nu-weighted l_2 norm.
inline double weighted_operator_norm(const Eigen::MatrixXd& B, const std::vector<double>& nu) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(nu.size()));
  for (std::size_t i = 0; i < nu.size(); ++i) s(static_cast<Eigen::Index>(i)) = std::sqrt(nu[i]);
  const Eigen::MatrixXd C = s.asDiagonal() * B * s.cwiseInverse().asDiagonal();
  if (C.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  return svd.singularValues()(0);
}

struct DefectCurve {
  std::vector<double> defect;  // index k = 0..k_max
  Quality quality = Quality::Exact;
};

/// ||A^k - P|| = ||A^k restricted to E_pi|| for k = 0..k_max. Exact operator norm at
/// p = 2 (warm-started power iteration); sampled-field sup-ratio otherwise.
inline DefectCurve defect_curve(const MarkovOperator& A, std::size_t k_max, const NormOptions& opt = {},
                                std::size_t samples = 32) {
  const auto& rep = A.representation();
  DefectCurve c;
  const bool empty = A.decomposition().complement_dimension() == 0;
  if (rep.p == 2.0) {
    std::optional<MarkovOperator> scalar;
    if (rep.d != 1) scalar.emplace(Representation{rep.action, 2.0, 1}, A.measure());
    const MarkovOperator& op = scalar ? *scalar : A;
    Field warm;
    for (std::size_t k = 0; k <= k_max; ++k) {
      if (empty) {
        c.defect.push_back(0.0);
        continue;
      }
      if (k == 0) {
        c.defect.push_back(1.0);
        continue;
      }
      auto r = detail::restricted_norm_l2(op, k, opt, warm.empty() ? nullptr : &warm);
      c.defect.push_back(r.lambda);
      warm = std::move(r.top_vector);
    }
    return c;
  }
  c.quality = Quality::LowerBound;
  std::vector<Field> fields;
  for (std::size_t s = 0; s < samples; ++s) {
    Field f = random_field(rep, opt.seed, 5000 + s);
    fields.push_back(std::move(f));
  }
  std::vector<double> base;
  for (const auto& f : fields) base.push_back(norm(rep, f));
  std::vector<Field> cur;
  for (auto& f : fields) cur.push_back(A.decomposition().complement(f));
  for (std::size_t k = 0; k <= k_max; ++k) {
    double best = 0.0;
    for (std::size_t s = 0; s < fields.size(); ++s) {
      if (base[s] > 0.0) best = std::max(best, norm(rep, cur[s]) / base[s]);
      if (k < k_max) cur[s] = A.apply(cur[s]);
    }
    c.defect.push_back(best);
  }
  return c;
}

struct IterateResult {
  Eigen::MatrixXd power;  // dense scalar A^k
  double defect = 0.0;
};

inline IterateResult iterate_to_projection(const MarkovOperator& A, std::size_t k, const NormOptions& opt = {}) {
  const Eigen::MatrixXd M = A.dense();
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  for (std::size_t i = 0; i < k; ++i) Ak = M * Ak;
  IterateResult r{std::move(Ak), 0.0};
  if (A.representation().p != 2.0) {
    r.defect = defect_curve(A, k, opt).defect.back();
  } else if (A.decomposition().complement_dimension() > 0) {
    r.defect = k == 0 ? 1.0 : restricted_norm(A, k, opt).lambda;
  }
  return r;
}

// ---------------------------------------------------------------------------

struct IdentityReport {
  double convolution = 0.0;   // max |A^{mu*nu} - A^mu A^nu|
  double translation = 0.0;   // max over g in supp nu u generators of |pi_g A^mu - A^{g.mu}|
  double invariants = 0.0;    // max |A^mu f - f| over the E^pi basis
  double complement = 0.0;    // max |P A^mu C|
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

inline Eigen::MatrixXd dense_pi(const GroupElement& g) {
  const auto n = static_cast<Eigen::Index>(g.perm.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  // (pi_g f)(g x) = f(x)
  for (Eigen::Index x = 0; x < n; ++x) M(g.perm[x], x) = 1.0;
  return M;
}

/// Checks the Markov-operator identities entrywise on dense scalar matrices.
inline IdentityReport operator_identities_check(const Representation& rep, const DiscreteMeasure& mu,
                                                const DiscreteMeasure& nu, double tol = 1e-12) {
  IdentityReport r;
  const Representation scalar{rep.action, rep.p, 1};
  const Eigen::MatrixXd Amu = MarkovOperator(scalar, mu).dense();
  const Eigen::MatrixXd Anu = MarkovOperator(scalar, nu).dense();
  const Eigen::MatrixXd Aconv = MarkovOperator(scalar, convolve(mu, nu)).dense();
  r.convolution = (Aconv - Amu * Anu).cwiseAbs().maxCoeff();

  std::vector<GroupElement> translators;
  for (const auto& [g, w] : nu.atoms()) translators.push_back(g);
  for (std::size_t s = 0; s < rep.action->generators.size(); ++s) translators.push_back(rep.action->generator(s));
  for (const auto& g : translators) {
    const Eigen::MatrixXd lhs = dense_pi(g) * Amu;
    const Eigen::MatrixXd rhs = MarkovOperator(scalar, mu.left_translate(g)).dense();
    r.translation = std::max(r.translation, (lhs - rhs).cwiseAbs().maxCoeff());
  }

  const Decomposition dec{scalar};
  const Eigen::MatrixXd P = dec.dense_mean();
  const auto n = P.rows();
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(n, n) - P;
  // Columns of P span E^pi.
  r.invariants = (Amu * P - P).cwiseAbs().maxCoeff();
  r.complement = (P * Amu * C).cwiseAbs().maxCoeff();

  if (r.convolution > tol) r.violations.emplace_back("A^{mu*nu} = A^mu A^nu");
  if (r.translation > tol) r.violations.emplace_back("pi_g A^mu = A^{g.mu}");
  if (r.invariants > tol) r.violations.emplace_back("A^mu = I on E^pi");
  if (r.complement > tol) r.violations.emplace_back("A^mu(E_pi) in E_pi");
  return r;
}

}  // namespace gaplab
