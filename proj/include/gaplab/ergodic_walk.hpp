#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gaplab/detail/fit.hpp"
#include "gaplab/detail/rng.hpp"
#include "gaplab/group_core.hpp"
#include "gaplab/measures.hpp"
#include "gaplab/rep_markov.hpp"

namespace gaplab {

// Walk convention: X_n(x) = h_n ... h_1 x with h_i = g_i^-1 and g_i ~ mu, so
// that P(X_n(x) in Omega) = (A^n 1_Omega)(x) for every mu, symmetric or not.

// ---------------------------------------------------------------------------
// Quantitative ergodic decay

struct ErgodicCurve {
  std::vector<double> errors;  // e_0 .. e_K, e_k = |A^k f - M f|_p
  double lambda = 0.0;         // p = 2 restricted norm (the spectral radius on the complement)
  Quality quality = Quality::Exact;
  double slope = 0.0;          // least-squares slope of log e_k over k >= 1
  bool bound_checked = false;  // only when lambda is the exact p-norm
  bool bound_holds = true;
  std::vector<std::string> warnings;
};

inline ErgodicCurve ergodic_error_curve(const Representation& rep, const Field& f, const DiscreteMeasure& mu,
                                        std::size_t K) {
  if (K < 1) throw std::invalid_argument("ergodic_error_curve: K must be at least 1");
  if (f.size() != rep.dim()) throw std::invalid_argument("ergodic_error_curve: field has wrong size");
  const MarkovOperator A(rep, mu);
  ErgodicCurve c;
  if (!A.decomposition().ergodic()) c.warnings.push_back("action not ergodic: per-orbit means used");
  const MarkovOperator A2(rep.with_p(2.0), mu);
  const auto r = restricted_norm(A2);
  c.lambda = r.lambda;
  c.quality = rep.p == 2.0 ? r.quality : Quality::LowerBound;
  c.bound_checked = rep.p == 2.0;

  Field g = A.decomposition().complement(f);
  const double base = norm(rep, g);
  Field tmp(g.size());
  c.errors.push_back(base);
  std::vector<double> ks, logs;
  for (std::size_t k = 1; k <= K; ++k) {
    A.apply(g, tmp);
    g.swap(tmp);
    const double e = norm(rep, g);
    c.errors.push_back(e);
    if (c.bound_checked && e > std::pow(c.lambda, static_cast<double>(k)) * base + 1e-9) c.bound_holds = false;
    if (e > 1e-300) {
      ks.push_back(static_cast<double>(k));
      logs.push_back(std::log(e));
    }
  }
  c.slope = ks.size() >= 2 ? detail::ls_slope(ks, logs) : -std::numeric_limits<double>::infinity();
  return c;
}

// ---------------------------------------------------------------------------
// Shrinking targets

struct ShrinkingTargetPlan {
  std::vector<std::vector<std::uint32_t>> targets;  // Omega_1 .. Omega_N as sorted point lists
  std::vector<double> radii;                        // set when built from balls
  std::size_t center = 0;

  std::size_t horizon() const { return targets.size(); }

  void validate(const FiniteAction& a) const {
    for (const auto& t : targets) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= a.size()) throw std::invalid_argument("shrinking target: point outside the space");
        if (i > 0 && t[i] <= t[i - 1]) throw std::invalid_argument("shrinking target: points must be sorted and distinct");
      }
    }
  }

  std::vector<double> measures(const FiniteAction& a) const {
    std::vector<double> nu;
    for (const auto& t : targets) {
      double s = 0.0;
      for (auto x : t) s += a.weights[x];
      nu.push_back(s);
    }
    return nu;
  }

  /// S_1 .. S_N
  std::vector<double> partial_sums(const FiniteAction& a) const {
    auto s = measures(a);
    for (std::size_t i = 1; i < s.size(); ++i) s[i] += s[i - 1];
    return s;
  }
};

inline ShrinkingTargetPlan constant_plan(const std::vector<std::uint32_t>& target, std::size_t N) {
  auto t = target;
  std::sort(t.begin(), t.end());
  return {std::vector<std::vector<std::uint32_t>>(N, t), {}, 0};
}

inline std::vector<std::uint32_t> all_points(const FiniteAction& a) {
  std::vector<std::uint32_t> t(a.size());
  for (std::size_t x = 0; x < t.size(); ++x) t[x] = static_cast<std::uint32_t>(x);
  return t;
}

/// Omega_n = closed flat-metric ball of radius r_n about `center`.
inline ShrinkingTargetPlan ball_plan(const FiniteAction& a, std::size_t center, const std::vector<double>& radii) {
  if (center >= a.size()) throw std::invalid_argument("ball_plan: center outside the space");
  ShrinkingTargetPlan plan;
  plan.radii = radii;
  plan.center = center;
  std::vector<std::int64_t> steps(a.size());
  for (std::size_t y = 0; y < a.size(); ++y) steps[y] = torus_steps(a, center, y);
  for (double r : radii) {
    if (!(r >= 0.0)) throw std::invalid_argument("ball_plan: negative radius");
    std::vector<std::uint32_t> t;
    // steps/m <= r, compared in integers to avoid rounding at the boundary
    const auto limit = static_cast<std::int64_t>(std::floor(r * static_cast<double>(a.modulus) + 1e-9));
    for (std::size_t y = 0; y < a.size(); ++y)
      if (steps[y] <= limit) t.push_back(static_cast<std::uint32_t>(y));
    plan.targets.push_back(std::move(t));
  }
  return plan;
}

/// r_n = c n^-e for n = 1..N
inline std::vector<double> power_radii(double c, double e, std::size_t N) {
  std::vector<double> r;
  for (std::size_t n = 1; n <= N; ++n) r.push_back(c * std::pow(static_cast<double>(n), -e));
  return r;
}

/// `count` distinct points drawn reproducibly (all points when count >= size).
inline std::vector<std::size_t> sample_points(std::size_t size, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (count >= size) return idx;
  detail::CounterRng rng(seed, 0x5a3);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.next_u64() % (size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

struct WalkStatistics {
  std::shared_ptr<const FiniteAction> action;
  std::vector<double> nu;        // nu(Omega_n), n = 1..N
  std::vector<double> S;         // S_n
  Field sigma;                   // Sigma^N(x) at every point
  std::vector<std::size_t> starts;
  std::vector<std::vector<double>> f_at_start;  // [start][n-1] = f_n(x)
  std::vector<Field> fields;     // f_n on all points, when kept
  std::vector<Field> target_means;  // per-orbit mean of 1_{Omega_n}, when kept
  double mean_identity_error = 0.0;  // max_n |<f_n> - nu_n|, or |<Sigma^N> - S_N| / max(1, S_N) without fields

  std::size_t horizon() const { return nu.size(); }
  double expectation() const { return S.empty() ? 0.0 : S.back(); }
};

inline Field indicator(std::size_t n, const std::vector<std::uint32_t>& t) {
  Field h(n, 0.0);
  for (auto x : t) h[x] = 1.0;
  return h;
}

inline double weighted_mean(const std::vector<double>& w, const Field& f) {
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) s += w[x] * f[x];
  return s;
}

/// Exact transfer iteration. Sigma^N at all points by Horner's rule
/// (N applications); f_n(x) at the starts from forward distributions; full
/// fields f_n = A^n 1_{Omega_n} only when `keep_fields` (O(N^2) applications).
inline WalkStatistics shrinking_series_exact(std::shared_ptr<const FiniteAction> action, const DiscreteMeasure& mu,
                                             const ShrinkingTargetPlan& plan, const std::vector<std::size_t>& starts,
                                             bool keep_fields = false) {
  plan.validate(*action);
  const MarkovOperator A(Representation{action, 2.0, 1}, mu);
  const std::size_t n = action->size(), N = plan.horizon();
  WalkStatistics st;
  st.action = action;
  st.nu = plan.measures(*action);
  st.S = plan.partial_sums(*action);
  st.starts = starts;

  // Sigma^N = A(h_1 + A(h_2 + ... + A h_N))
  Field acc(n, 0.0), tmp(n);
  for (std::size_t i = N; i >= 1; --i) {
    for (auto x : plan.targets[i - 1]) acc[x] += 1.0;
    A.apply(acc, tmp);
    acc.swap(tmp);
  }
  st.sigma = std::move(acc);

  for (auto x0 : starts) {
    if (x0 >= n) throw std::invalid_argument("shrinking_series_exact: start outside the space");
    Field dist(n, 0.0), next(n);
    dist[x0] = 1.0;
    std::vector<double> f;
    for (std::size_t i = 1; i <= N; ++i) {
      A.apply_transpose(dist, next);
      dist.swap(next);
      double s = 0.0;
      for (auto y : plan.targets[i - 1]) s += dist[y];
      f.push_back(s);
    }
    st.f_at_start.push_back(std::move(f));
  }

  if (keep_fields) {
    const auto& dec = A.decomposition();
    for (std::size_t i = 1; i <= N; ++i) {
      Field h = indicator(n, plan.targets[i - 1]);
      st.target_means.push_back(dec.mean(h));
      A.apply_power(i, h);
      st.mean_identity_error = std::max(st.mean_identity_error, std::abs(weighted_mean(action->weights, h) - st.nu[i - 1]));
      st.fields.push_back(std::move(h));
    }
  } else {
    st.mean_identity_error =
        std::abs(weighted_mean(action->weights, st.sigma) - st.expectation()) / std::max(1.0, st.expectation());
  }
  return st;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct McOptions {
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

struct McStatistics {
  std::vector<std::size_t> starts;
  std::size_t trials = 0;
  std::vector<std::vector<std::uint32_t>> hits;  // [start][n-1] = number of trials with X_n in Omega_n
  std::vector<double> mean_sigma;                // empirical mean of the hit count per start
  std::vector<double> stderr_sigma;              // standard error of that mean

  double frequency(std::size_t s, std::size_t n) const { return static_cast<double>(hits[s][n - 1]) / static_cast<double>(trials); }
};

namespace detail {

struct Sampler {
  std::vector<double> cdf;
  std::vector<Permutation> steps;  // inverse permutations h = g^-1

  explicit Sampler(const DiscreteMeasure& mu) {
    double c = 0.0;
    for (const auto& [g, w] : mu.atoms()) {
      c += w;
      cdf.push_back(c);
      steps.push_back(inverse(g.perm));
    }
  }
  std::size_t draw(CounterRng& rng) const { return steps.size() == 1 ? 0 : rng.categorical(cdf); }
};

inline std::vector<std::vector<std::uint32_t>> membership(std::size_t n, const ShrinkingTargetPlan& plan) {
  std::vector<std::vector<std::uint32_t>> in(plan.horizon(), std::vector<std::uint32_t>());
  for (std::size_t i = 0; i < plan.horizon(); ++i) {
    in[i].assign(n, 0);
    for (auto x : plan.targets[i]) in[i][x] = 1;
  }
  return in;
}

/// Runs body(trial_index) for all trials, split in contiguous chunks over `jobs` threads.
template <class Body>
void for_trials(std::size_t trials, unsigned jobs, Body&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(trials, 1))));
  if (jobs == 1) {
    for (std::size_t t = 0; t < trials; ++t) body(t, 0u);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      const std::size_t lo = trials * j / jobs, hi = trials * (j + 1) / jobs;
      for (std::size_t t = lo; t < hi; ++t) body(t, j);
    });
  }
  for (auto& th : pool) th.join();
}

inline std::uint64_t stream_id(std::size_t start_index, std::size_t trial) {
  return (static_cast<std::uint64_t>(start_index) << 32) ^ static_cast<std::uint64_t>(trial);
}

}  // namespace detail

/// Simulated trajectories, one counter-based stream per (start, trial).
inline McStatistics shrinking_series_mc(const FiniteAction& action, const DiscreteMeasure& mu,
                                        const ShrinkingTargetPlan& plan, const std::vector<std::size_t>& starts,
                                        const McOptions& opt = {}) {
  if (opt.trials < 1) throw std::invalid_argument("shrinking_series_mc: trials must be at least 1");
  plan.validate(action);
  if (mu.degree() != action.size()) throw std::invalid_argument("shrinking_series_mc: measure not realized on this action");
  const detail::Sampler sampler(mu);
  const auto in = detail::membership(action.size(), plan);
  const std::size_t N = plan.horizon();
  McStatistics st;
  st.starts = starts;
  st.trials = opt.trials;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    if (starts[s] >= action.size()) throw std::invalid_argument("shrinking_series_mc: start outside the space");
    std::vector<std::uint32_t> count(opt.trials);
    std::vector<std::vector<std::uint32_t>> per_job(std::max(1u, opt.jobs), std::vector<std::uint32_t>(N, 0));
    detail::for_trials(opt.trials, opt.jobs, [&](std::size_t t, unsigned j) {
      detail::CounterRng rng(opt.seed, detail::stream_id(s, t));
      std::uint32_t x = static_cast<std::uint32_t>(starts[s]), c = 0;
      for (std::size_t i = 0; i < N; ++i) {
        x = sampler.steps[sampler.draw(rng)][x];
        if (in[i][x]) {
          ++per_job[j][i];
          ++c;
        }
      }
      count[t] = c;
    });
    std::vector<std::uint32_t> hits(N, 0);
    for (const auto& h : per_job)
      for (std::size_t i = 0; i < N; ++i) hits[i] += h[i];
    double m = 0.0, m2 = 0.0;
    for (auto c : count) m += c;
    m /= static_cast<double>(opt.trials);
    for (auto c : count) m2 += (c - m) * (c - m);
    const double var = opt.trials > 1 ? m2 / static_cast<double>(opt.trials - 1) : 0.0;
    st.hits.push_back(std::move(hits));
    st.mean_sigma.push_back(m);
    st.stderr_sigma.push_back(std::sqrt(var / static_cast<double>(opt.trials)));
  }
  return st;
}

struct BandCheck {
  double max_z = 0.0;   // max |empirical - exact| / stderr (0 when both agree exactly)
  bool within = true;   // every start within `sigmas` standard errors
};

inline BandCheck compare_bands(const WalkStatistics& exact, const McStatistics& mc, double sigmas = 3.0) {
  if (exact.starts != mc.starts) throw std::invalid_argument("compare_bands: different start points");
  BandCheck b;
  for (std::size_t s = 0; s < mc.starts.size(); ++s) {
    const double truth = exact.sigma[mc.starts[s]];
    const double diff = std::abs(mc.mean_sigma[s] - truth);
    if (mc.stderr_sigma[s] == 0.0) {
      if (diff > 1e-9) b.within = false, b.max_z = std::numeric_limits<double>::infinity();
      continue;
    }
    const double z = diff / mc.stderr_sigma[s];
    b.max_z = std::max(b.max_z, z);
    if (z > sigmas) b.within = false;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Moment inequality

struct MomentRange {
  std::size_t M = 1, N = 1;
  double lhs = 0.0;    // integral of |sum_{i=M}^N (f_i - M f_i)|^p
  double rhs = 0.0;    // constant * sum_{i=M}^N nu(Omega_i)
  double slack = 0.0;  // rhs - lhs
  bool holds = true;
};

struct MomentReport {
  double p = 2.0, lambda = 0.0, constant = 0.0;
  std::vector<MomentRange> ranges;
  bool holds = true;
  double min_slack = std::numeric_limits<double>::infinity();
};

inline double moment_constant(double p, double lambda) {
  if (!(p > 1.0)) throw std::invalid_argument("moment_constant: p must exceed 1");
  if (!(lambda >= 0.0) || lambda >= 1.0) throw std::invalid_argument("moment_constant: lambda must lie in [0, 1)");
  const double q = p / (p - 1.0);
  const double Cp = 1.0 + p * std::pow(2.0, p);
  return (2.0 + Cp) / std::pow(1.0 - std::pow(lambda, q), p / q);
}

/// Checks every requested (M, N); an empty range list means all 1 <= M < N <= horizon.
inline MomentReport moment_inequality_check(const WalkStatistics& st, double p, double lambda,
                                            std::vector<std::pair<std::size_t, std::size_t>> ranges = {}) {
  MomentReport r;
  r.p = p;
  r.lambda = lambda;
  r.constant = moment_constant(p, lambda);
  const std::size_t N = st.horizon();
  if (st.fields.size() != N) throw std::invalid_argument("moment_inequality_check: exact fields required");
  if (ranges.empty())
    for (std::size_t b = 2; b <= N; ++b)
      for (std::size_t a = 1; a < b; ++a) ranges.emplace_back(a, b);
  const std::size_t n = st.action->size();
  const auto& w = st.action->weights;
  // prefix[i] = sum_{j <= i} (f_j - M f_j)
  std::vector<Field> prefix(N + 1, Field(n, 0.0));
  for (std::size_t i = 1; i <= N; ++i)
    for (std::size_t x = 0; x < n; ++x) prefix[i][x] = prefix[i - 1][x] + st.fields[i - 1][x] - st.target_means[i - 1][x];
  for (auto [a, b] : ranges) {
    if (a < 1 || a > b || b > N) throw std::invalid_argument("moment_inequality_check: range outside the horizon");
    MomentRange m;
    m.M = a;
    m.N = b;
    for (std::size_t x = 0; x < n; ++x) m.lhs += w[x] * std::pow(std::abs(prefix[b][x] - prefix[a - 1][x]), p);
    m.rhs = r.constant * (st.S[b - 1] - (a >= 2 ? st.S[a - 2] : 0.0));
    m.slack = m.rhs - m.lhs;
    m.holds = m.lhs <= m.rhs + 1e-12;
    r.holds = r.holds && m.holds;
    r.min_slack = std::min(r.min_slack, m.slack);
    r.ranges.push_back(m);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Envelope surrogate for the divergent case

struct EnvelopeCheck {
  double exponent = 0.6;
  double S = 0.0;
  double fraction_within = 0.0;  // share of sampled x with |Sigma^N(x) - S_N| <= S_N^exponent
  double max_ratio = 0.0;        // max |Sigma^N(x) - S_N| / S_N^exponent
};

inline EnvelopeCheck envelope_check(const Field& sigma, double S, const std::vector<std::size_t>& xs, double exponent = 0.6) {
  if (xs.empty()) throw std::invalid_argument("envelope_check: no sample points");
  EnvelopeCheck e;
  e.exponent = exponent;
  e.S = S;
  const double env = std::pow(S, exponent);
  std::size_t ok = 0;
  for (auto x : xs) {
    const double r = std::abs(sigma.at(x) - S) / env;
    e.max_ratio = std::max(e.max_ratio, r);
    if (r <= 1.0) ++ok;
  }
  e.fraction_within = static_cast<double>(ok) / static_cast<double>(xs.size());
  return e;
}

// ---------------------------------------------------------------------------
// Conditioned walks

// The walking group is modelled as the free group on the generator labels,
// acting through the generator maps; its word metric is the reduced word
// length, tracked exactly along each trajectory.

struct ConditionedOptions {
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

struct ConditionedStatistics {
  double drift = 0.0;  // estimated 2a
  double a = 0.0;
  bool degenerate = false;
  std::vector<double> mean_length;  // E|X_n|, n = 1..N
  std::vector<double> delta_mass;   // empirical mu^n(Delta_n), pooled over starts
  std::vector<std::size_t> starts;
  std::vector<double> joint_sigma;  // sum_n P(X_n(x) in Omega_n, |X_n| >= a n)
  std::vector<double> eta_sigma;    // sum_n eta_n-probability of hitting Omega_n
  std::vector<std::string> warnings;
};

namespace detail {

/// Label index of each atom (SIZE_MAX for the identity).
inline std::vector<std::size_t> atom_labels(const FiniteAction& a, const DiscreteMeasure& mu) {
  std::vector<std::size_t> out;
  for (const auto& [g, w] : mu.atoms()) {
    if (is_identity(g.perm)) {
      out.push_back(SIZE_MAX);
      continue;
    }
    std::size_t found = SIZE_MAX;
    for (std::size_t s = 0; s < a.maps.size() && found == SIZE_MAX; ++s)
      if (a.maps[s] == g.perm) found = s;
    if (found == SIZE_MAX)
      throw std::invalid_argument("conditioned_series: support element is neither the identity nor a generator");
    out.push_back(found);
  }
  return out;
}

}  // namespace detail

inline ConditionedStatistics conditioned_series(const FiniteAction& action, const DiscreteMeasure& mu,
                                                const ShrinkingTargetPlan& plan, double drift_fraction,
                                                const std::vector<std::size_t>& starts,
                                                const ConditionedOptions& opt = {}) {
  if (!(drift_fraction >= 0.0) || drift_fraction > 1.0)
    throw std::invalid_argument("conditioned_series: drift fraction must lie in [0, 1]");
  if (opt.trials < 1) throw std::invalid_argument("conditioned_series: trials must be at least 1");
  if (starts.empty()) throw std::invalid_argument("conditioned_series: no start points");
  plan.validate(action);
  if (mu.degree() != action.size()) throw std::invalid_argument("conditioned_series: measure not realized on this action");
  const std::size_t N = plan.horizon();
  if (N < 4) throw std::invalid_argument("conditioned_series: horizon too short for a drift fit");
  const detail::Sampler sampler(mu);
  const auto labels = detail::atom_labels(action, mu);
  // the step h = g^-1 carries the inverse label
  std::vector<std::size_t> step_label(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    step_label[i] = labels[i] == SIZE_MAX ? SIZE_MAX : action.generators.inverses[labels[i]];
  const auto& inv = action.generators.inverses;
  const auto in = detail::membership(action.size(), plan);

  // A (start, trial) pair owns one counter stream, so the second pass replays
  // the first pass's trajectories exactly; all accumulators are integers.
  auto simulate = [&](std::size_t s, std::size_t t, auto&& visit) {
    detail::CounterRng rng(opt.seed, detail::stream_id(s, t));
    std::vector<std::size_t> word;  // word.back() is the leftmost letter
    std::uint32_t x = static_cast<std::uint32_t>(starts[s]);
    for (std::size_t i = 0; i < N; ++i) {
      const auto k = sampler.draw(rng);
      x = sampler.steps[k][x];
      const auto l = step_label[k];
      if (l != SIZE_MAX) {
        if (!word.empty() && inv[word.back()] == l) word.pop_back();
        else word.push_back(l);
      }
      visit(i, word.size(), in[i][x] != 0);
    }
  };

  ConditionedStatistics st;
  st.starts = starts;
  const std::size_t T = opt.trials;
  const unsigned J = std::max(1u, opt.jobs);
  const double total = static_cast<double>(T * starts.size());

  std::vector<std::vector<std::uint64_t>> len_sum(J, std::vector<std::uint64_t>(N, 0));
  for (std::size_t s = 0; s < starts.size(); ++s)
    detail::for_trials(T, J, [&](std::size_t t, unsigned j) {
      simulate(s, t, [&](std::size_t i, std::size_t len, bool) { len_sum[j][i] += len; });
    });
  st.mean_length.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    std::uint64_t v = 0;
    for (const auto& l : len_sum) v += l[i];
    st.mean_length[i] = static_cast<double>(v) / total;
  }

  std::vector<double> ns, ls;
  for (std::size_t n = std::max<std::size_t>(1, N / 4); n <= N; ++n) {
    ns.push_back(static_cast<double>(n));
    ls.push_back(st.mean_length[n - 1]);
  }
  st.drift = detail::ls_slope(ns, ls);
  if (st.drift < 2.0 / std::sqrt(static_cast<double>(N))) {
    st.degenerate = true;
    st.warnings.push_back("degenerate drift: conditioning disabled (a = 0)");
    st.a = 0.0;
  } else {
    st.a = drift_fraction * st.drift / 2.0;
  }

  // |X_n| >= a n
  auto in_delta = [&](std::size_t len, std::size_t i) {
    return static_cast<double>(len) >= st.a * static_cast<double>(i + 1);
  };
  std::vector<std::uint64_t> delta(N, 0);
  std::vector<std::vector<std::uint64_t>> joint(starts.size(), std::vector<std::uint64_t>(N, 0));
  for (std::size_t s = 0; s < starts.size(); ++s) {
    std::vector<std::vector<std::uint64_t>> d(J, std::vector<std::uint64_t>(N, 0)), h(J, std::vector<std::uint64_t>(N, 0));
    detail::for_trials(T, J, [&](std::size_t t, unsigned j) {
      simulate(s, t, [&](std::size_t i, std::size_t len, bool hit) {
        if (!in_delta(len, i)) return;
        ++d[j][i];
        if (hit) ++h[j][i];
      });
    });
    for (unsigned j = 0; j < J; ++j)
      for (std::size_t i = 0; i < N; ++i) delta[i] += d[j][i], joint[s][i] += h[j][i];
  }
  st.delta_mass.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) st.delta_mass[i] = static_cast<double>(delta[i]) / total;

  for (std::size_t s = 0; s < starts.size(); ++s) {
    double js = 0.0, es = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double p = static_cast<double>(joint[s][i]) / static_cast<double>(T);
      js += p;
      if (st.delta_mass[i] > 0.0) es += p / st.delta_mass[i];
    }
    st.joint_sigma.push_back(js);
    st.eta_sigma.push_back(es);
  }
  return st;
}

}  // namespace gaplab
