#pragma once

// The acceptance suite: one function per criterion, shared by the acceptance
// test binary and `gaplab selftest`. Oracles used here are independent of the
// algorithms they check (dense eigensolves, brute-force enumeration,
// Floyd-Warshall, closed forms).

#include <chrono>
#include <functional>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "gaplab/cli.hpp"

namespace gaplab {

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  double seconds = 0.0;  // wall time, printed but never written to reports
  double limit = 0.0;    // runtime limit in seconds, 0 for none
  std::string summary;
  nlohmann::ordered_json data = nlohmann::ordered_json::object();
  std::vector<std::string> failures;
};

struct AcceptanceOptions {
  std::uint64_t seed = 2024;
  unsigned jobs = 1;
};

namespace oracles {

inline std::shared_ptr<const FiniteAction> share(FiniteAction a) { return std::make_shared<const FiniteAction>(std::move(a)); }

inline GroupElement elem(const FiniteAction& a, const std::string& label) { return a.generator(a.generator_index(label)); }

/// ||A^k - P|| from dense matrix powers and an SVD.
inline std::vector<double> dense_defects(const MarkovOperator& A, const std::vector<std::size_t>& ks) {
  const Eigen::MatrixXd M = A.dense(), D = A.decomposition().dense_mean();
  std::vector<double> out;
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  std::size_t k = 0;
  for (auto target : ks) {
    for (; k < target; ++k) Ak = M * Ak;
    out.push_back(weighted_operator_norm(Ak - D, A.representation().action->weights));
  }
  return out;
}

/// Second largest eigenvalue of the symmetrized generator average.
inline double dense_lambda2(const FiniteAction& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  const double q = static_cast<double>(a.maps.size());
  for (const auto& m : a.maps)
    for (Eigen::Index x = 0; x < n; ++x) B(x, m[x]) += 1.0 / q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (B + B.transpose()));
  return es.eigenvalues()(n - 2);
}

/// Least M over a grid on the simplex of a 3-point support such that
/// beta = M rho - alpha dominates every Q-translate of alpha.
inline double grid_M(const DiscreteMeasure& rho, const std::vector<GroupElement>& Q, int steps) {
  const auto& atoms = rho.atoms();
  if (atoms.size() != 3) throw std::invalid_argument("grid_M: 3-point supports only");
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; i + j <= steps; ++j) {
      const double alpha[3] = {double(i) / steps, double(j) / steps, double(steps - i - j) / steps};
      auto a_of = [&](const Permutation& p) {
        for (int k = 0; k < 3; ++k)
          if (atoms[k].first.perm == p) return alpha[k];
        return 0.0;
      };
      double M = 0.0;
      bool ok = true;
      for (const auto& s : Q) {
        for (int k = 0; k < 3; ++k)
          if (alpha[k] > 0 && !rho.contains(compose(s.perm, atoms[k].first.perm))) ok = false;
        for (int k = 0; k < 3; ++k) {
          const auto& h = atoms[k].first.perm;
          M = std::max(M, (alpha[k] + a_of(compose(inverse(s.perm), h))) / atoms[k].second);
        }
      }
      if (ok) best = std::min(best, M);
    }
  return best;
}

/// f_n(x) summed over all words of length n.
inline double enumerate_hit(const DiscreteMeasure& mu, std::size_t n, std::size_t x, const std::vector<std::uint32_t>& target) {
  std::vector<std::pair<Permutation, double>> atoms;
  for (const auto& [g, w] : mu.atoms()) atoms.emplace_back(inverse(g.perm), w);
  std::vector<std::uint8_t> in(mu.degree(), 0);
  for (auto t : target) in[t] = 1;
  double total = 0.0;
  std::vector<std::size_t> word(n, 0);
  while (true) {
    double w = 1.0;
    std::size_t y = x;
    for (auto k : word) {
      w *= atoms[k].second;
      y = atoms[k].first[y];
    }
    if (in[y]) total += w;
    std::size_t i = 0;
    while (i < n && ++word[i] == atoms.size()) word[i++] = 0;
    if (i == n) break;
  }
  return total;
}

/// All-pairs distances on the warped grid with edges rebuilt from the definition.
inline std::vector<std::vector<double>> floyd_warshall(const WarpedLevel& L) {
  const std::size_t n = L.vertices();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (std::int64_t x = 0; x < L.m; ++x)
    for (std::int64_t y = 0; y < L.m; ++y)
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
          const auto u = L.vertex(x, y), v = L.vertex(x + dx, y + dy);
          if (u != v) d[u][v] = std::min(d[u][v], L.t / static_cast<double>(L.m));
        }
  for (const auto& a : L.matrices)
    for (std::int64_t x = 0; x < L.m; ++x)
      for (std::int64_t y = 0; y < L.m; ++y) {
        const auto u = L.vertex(x, y), v = L.vertex(a[0] * x + a[1] * y, a[2] * x + a[3] * y);
        if (u != v) {
          d[u][v] = std::min(d[u][v], 1.0);
          d[v][u] = std::min(d[v][u], 1.0);
        }
      }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

inline std::vector<GroupElement> distinct_generators(const FiniteAction& a) {
  std::vector<GroupElement> Q;
  for (auto& g : generator_elements(a))
    if (!is_identity(g.perm) && std::find(Q.begin(), Q.end(), g) == Q.end()) Q.push_back(g);
  return Q;
}

}  // namespace oracles

namespace detail {

class Recorder {
 public:
  explicit Recorder(CriterionResult& r) : r_(r) {}
  bool expect(bool ok, const std::string& what) {
    if (!ok) r_.failures.push_back(what);
    return ok;
  }
  nlohmann::ordered_json& data() { return r_.data; }

 private:
  CriterionResult& r_;
};

inline std::string fmt(double v) { return format_number(v); }

}  // namespace detail

// ---------------------------------------------------------------------------

inline void criterion_decay(CriterionResult& r, const AcceptanceOptions&) {
  using namespace oracles;
  detail::Recorder rec(r);
  const std::vector<std::pair<std::string, FiniteAction>> fixtures{
      {"Z/2", build_cyclic(2)}, {"Z/4", build_cyclic(4)}, {"SL2(Z/5)", build_sl2_regular(5)}, {"(Z/16)^2", build_sl2_torus(16)}};
  const std::vector<std::size_t> ks{1, 2, 5, 10, 25, 50};
  double worst_excess = -1.0, worst_oracle = 0.0;
  for (const auto& [name, fx] : fixtures) {
    auto a = share(fx);
    const MarkovOperator A(Representation{a, 2.0, 1}, generator_measure(*a, true));
    const auto rn = restricted_norm(A);
    const auto curve = defect_curve(A, 50);
    bool ok = rn.quality == Quality::Exact;
    for (std::size_t k = 0; k <= 50; ++k) {
      const double excess = curve.defect[k] - std::pow(rn.lambda, static_cast<double>(k));
      worst_excess = std::max(worst_excess, excess);
      ok = ok && excess <= 1e-9;
    }
    rec.expect(ok, name + ": defect(k) > lambda^k + 1e-9");
    const auto dense = dense_defects(A, ks);
    double dev = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) dev = std::max(dev, std::abs(dense[i] - curve.defect[ks[i]]));
    worst_oracle = std::max(worst_oracle, dev);
    rec.expect(dev <= 1e-8, name + ": defect curve differs from dense SVD oracle by " + detail::fmt(dev));
    rec.data()[name] = {{"lambda", measured(rn.lambda)},
                        {"orbits", measured(static_cast<double>(A.decomposition().orbits()))},
                        {"defect", tag(curve.defect, Provenance::Measured)},
                        {"dense_defect_at", ks},
                        {"dense_defect", tag(dense, Provenance::Oracle)}};
  }
  r.summary = "max defect - lambda^k = " + detail::fmt(worst_excess) + ", dense oracle deviation " + detail::fmt(worst_oracle);
}

inline void criterion_neumann(CriterionResult& r, const AcceptanceOptions&) {
  using namespace oracles;
  detail::Recorder rec(r);
  const std::vector<std::pair<std::string, FiniteAction>> fixtures{
      {"Z/2", build_cyclic(2)},          {"Z/3", build_cyclic(3)},          {"Z/4", build_cyclic(4)},
      {"Z/6", build_cyclic(6)},          {"SL2(Z/3)", build_sl2_regular(3)}, {"SL2(Z/5)", build_sl2_regular(5)},
      {"(Z/16)^2", build_sl2_torus(16)}, {"orbit (Z/16)^2", build_sl2_torus_orbit(16)}};
  double worst = 0.0;
  for (const auto& [name, fx] : fixtures) {
    auto a = share(fx);
    const MarkovOperator A(Representation{a, 2.0, 1}, generator_measure(*a, true));
    const auto P = neumann_projection(A);
    const double err = (P - A.decomposition().dense_mean()).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    rec.expect(err <= 1e-10, name + ": Neumann projection off by " + detail::fmt(err));
    rec.data()[name] = measured(err);
  }
  r.summary = "max entrywise deviation " + detail::fmt(worst);
}

inline void criterion_sandwich(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  OracleOptions oo;
  oo.seed = opt.seed;
  double min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t n = 2; n <= 6; ++n) {
    auto a = share(build_cyclic(n));
    const auto Q = distinct_generators(*a);
    auto [mu, cert] = uniform_extended(Q, a->identity());
    const Representation rep{a, 2.0, 1};
    const double lam = restricted_norm(MarkovOperator(rep, mu)).lambda;
    const double kappa = kazhdan_constant_oracle(rep, Q, oo).best_found;
    const double fourier = 2.0 * std::sin(std::numbers::pi / static_cast<double>(n));
    const double upper = norm_bound_from_kappa(cert.M, 2.0, std::min(2.0, kappa));
    const double hilbert = hilbert_improvement(lam);
    const std::string tagn = "Z/" + std::to_string(n);
    rec.expect(std::abs(kappa - fourier) <= 1e-6, tagn + ": kappa oracle differs from 2 sin(pi/n)");
    rec.expect(1.0 - kappa <= lam + 1e-6, tagn + ": 1 - kappa > lambda");
    rec.expect(lam <= upper + 1e-6, tagn + ": lambda above 1 - (2/M) delta(kappa)");
    rec.expect(hilbert <= kappa + 1e-6, tagn + ": sqrt(2) sqrt(1 - lambda) > kappa");
    min_slack = std::min({min_slack, lam - (1.0 - kappa), upper - lam, kappa - hilbert});
    if (n == 2) {
      rec.expect(std::abs(lam) <= 1e-12 && std::abs(upper) <= 1e-12, "Z/2: upper bound not attained with equality");
    }
    rec.data()[tagn] = {{"lambda", measured(lam)},     {"kappa", oracle(kappa)},     {"kappa_fourier", oracle(fourier)},
                        {"M", formula(cert.M)},        {"lower", formula(1 - kappa)}, {"upper", formula(upper)},
                        {"hilbert", formula(hilbert)}};
  }
  r.summary = "min slack " + detail::fmt(min_slack) + "; Z/2 attains the upper bound";
}

inline void criterion_admissibility(CriterionResult& r, const AcceptanceOptions&) {
  using namespace oracles;
  detail::Recorder rec(r);
  std::vector<std::pair<std::string, FiniteAction>> fixtures;
  for (std::size_t n = 2; n <= 6; ++n) fixtures.emplace_back("Z/" + std::to_string(n), build_cyclic(n));
  fixtures.emplace_back("SL2(Z/3)", build_sl2_regular(3));
  fixtures.emplace_back("SL2(Z/5)", build_sl2_regular(5));
  for (const auto& [name, a] : fixtures) {
    const auto Q = distinct_generators(a);
    auto [mu, cert] = uniform_extended(Q, a.identity());
    const double bound = static_cast<double>(Q.size() + 1);
    rec.expect(verify_certificate(mu, cert).empty(), name + ": uniform_extended certificate invalid");
    rec.expect(cert.M <= bound, name + ": M above #Q + 1");
    const auto lp = certify_admissible(mu, Q);
    const auto* c = std::get_if<AdmissibilityCertificate>(&lp);
    rec.expect(c && c->M <= bound + 1e-12 && verify_certificate(mu, *c, 1e-9).empty(), name + ": LP certificate");
    rec.data()[name] = {{"M_uniform_extended", formula(cert.M)},
                        {"M_lp", measured(c ? c->M : std::numeric_limits<double>::infinity())},
                        {"bound", formula(bound)}};
  }
  // 3-point supports against the grid oracle
  double worst = 0.0;
  auto grid_case = [&](const std::string& name, const DiscreteMeasure& rho, const std::vector<GroupElement>& Q, int steps) {
    const auto lp = certify_admissible(rho, Q);
    const auto* c = std::get_if<AdmissibilityCertificate>(&lp);
    const double g = grid_M(rho, Q, steps);
    const double dev = c ? std::abs(c->M - g) : std::numeric_limits<double>::infinity();
    worst = std::max(worst, dev);
    rec.expect(dev <= 1e-6, name + ": LP differs from grid oracle by " + detail::fmt(dev));
    rec.data()[name] = {{"M_lp", measured(c ? c->M : -1.0)}, {"M_grid", oracle(g)}};
  };
  {
    auto a = build_cyclic(4);
    grid_case("grid Z/4 lazy", generator_measure(a, true), {elem(a, "g"), elem(a, "g^-1")}, 300);
  }
  {
    auto a = build_cyclic(5);
    const auto g = elem(a, "g");
    DiscreteMeasure rho;
    rho.add(a.identity(), 0.5);
    rho.add(g, 0.3);
    rho.add(multiply(g, g), 0.2);
    grid_case("grid Z/5 (0.5, 0.3, 0.2)", rho, {g}, 600);
  }
  r.summary = "all uniform_extended certificates within #Q+1; grid deviation " + detail::fmt(worst);
}

inline void criterion_identities(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  IdentityReport worst;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const std::uint64_t seed = opt.seed * 1000 + i;
    const Representation rep{share(build_random_action(8, 2, seed)), 2.0, 1};
    const auto ball = word_ball(*rep.action, 3);
    detail::CounterRng rng(seed, 1);
    auto rnd = [&] {
      DiscreteMeasure m;
      for (int k = 0; k < 3; ++k) m.add(ball[rng.next_u64() % ball.size()], 1.0 / 3);
      return m;
    };
    const auto mu = rnd();
    const auto nu = rnd();
    const auto ids = operator_identities_check(rep, mu, nu);
    worst.convolution = std::max(worst.convolution, ids.convolution);
    worst.translation = std::max(worst.translation, ids.translation);
    worst.invariants = std::max(worst.invariants, ids.invariants);
    worst.complement = std::max(worst.complement, ids.complement);
    rec.expect(ids.ok(), "fixture seed " + std::to_string(seed) + " violates an identity");
  }
  rec.data()["fixtures"] = measured(100.0);
  rec.data()["max_convolution"] = measured(worst.convolution);
  rec.data()["max_translation"] = measured(worst.translation);
  rec.data()["max_invariants"] = measured(worst.invariants);
  rec.data()["max_complement"] = measured(worst.complement);
  r.summary = "max errors " + detail::fmt(worst.convolution) + ", " + detail::fmt(worst.translation) + ", " +
              detail::fmt(worst.invariants) + ", " + detail::fmt(worst.complement);
}

inline void criterion_expanders(CriterionResult& r, const AcceptanceOptions&) {
  using namespace oracles;
  detail::Recorder rec(r);
  QuotientSequence sl2, cycles;
  for (std::int64_t p : {3, 5, 7, 11, 13}) sl2.quotients.push_back(share(build_sl2_regular(p)));
  for (std::size_t n : {8u, 16u, 32u, 64u}) cycles.quotients.push_back(share(build_cyclic(n)));
  const auto a = certify_sequence(sl2);
  const auto b = certify_sequence(cycles);
  rec.expect(a.uniform && a.epsilon0 > 0.0, "SL2 family not certified uniform");
  rec.expect(!b.uniform, "cycle family not rejected");
  double worst_relation = 0.0;
  for (const auto* rep : {&a, &b})
    for (const auto& q : rep->quotients) worst_relation = std::max(worst_relation, std::abs(q.relation - 1.0));
  rec.expect(worst_relation <= 1e-9, "kappa_P 2|Q| (1 - lambda2) off by " + detail::fmt(worst_relation));
  const double r32 = b.quotients[2].scalar.kappa / (32.0 * 32.0);
  const double r64 = b.quotients[3].scalar.kappa / (64.0 * 64.0);
  rec.expect(std::abs(r64 / r32 - 1.0) <= 0.1, "kappa_P / n^2 not within 10% between n = 32 and 64");
  // oracles: closed form on cycles, dense eigensolve on the two smallest SL2 quotients
  double dev = 0.0;
  for (std::size_t i = 0; i < cycles.quotients.size(); ++i) {
    const double n = static_cast<double>(cycles.quotients[i]->size());
    dev = std::max(dev, std::abs(b.quotients[i].scalar.lambda2 - std::cos(2 * std::numbers::pi / n)));
  }
  for (std::size_t i = 0; i < 2; ++i) dev = std::max(dev, std::abs(a.quotients[i].scalar.lambda2 - dense_lambda2(*sl2.quotients[i])));
  rec.expect(dev <= 1e-9, "lambda2 differs from its oracle by " + detail::fmt(dev));
  auto lam = [](const PoincareReport& p) {
    std::vector<double> v;
    for (const auto& q : p.quotients) v.push_back(q.scalar.lambda2);
    return v;
  };
  auto kap = [](const PoincareReport& p) {
    std::vector<double> v;
    for (const auto& q : p.quotients) v.push_back(q.scalar.kappa);
    return v;
  };
  rec.data()["sl2"] = {{"p", {3, 5, 7, 11, 13}},
                       {"lambda2", tag(lam(a), Provenance::Measured)},
                       {"kappa_P", tag(kap(a), Provenance::Measured)},
                       {"epsilon0", measured(a.epsilon0)},
                       {"growth_exponent", measured(a.growth_exponent)},
                       {"verdict", a.uniform ? "uniform" : "not uniform"}};
  rec.data()["cycles"] = {{"n", {8, 16, 32, 64}},
                          {"lambda2", tag(lam(b), Provenance::Measured)},
                          {"kappa_P", tag(kap(b), Provenance::Measured)},
                          {"kappa_over_n2_ratio_64_32", measured(r64 / r32)},
                          {"growth_exponent", measured(b.growth_exponent)},
                          {"verdict", b.uniform ? "uniform" : "not uniform"}};
  rec.data()["max_relation_error"] = measured(worst_relation);
  rec.data()["max_oracle_deviation"] = oracle(dev);
  r.summary = "SL2 eps0 = " + detail::fmt(a.epsilon0) + "; cycles rejected, kappa/n^2 ratio " + detail::fmt(r64 / r32) +
              "; relation error " + detail::fmt(worst_relation);
}

inline void criterion_ergodic(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  auto a = share(build_sl2_torus_orbit(16));
  const auto mu = generator_measure(*a, true);
  std::string summary;
  for (double p : {1.5, 2.0, 3.0}) {
    const Representation rep{a, p, 1};
    const auto c = ergodic_error_curve(rep, random_field(rep, opt.seed), mu, 150);
    const auto z = ergodic_error_curve(rep, Field(a->size(), 2.5), mu, 150);
    const bool zero = std::all_of(z.errors.begin(), z.errors.end(), [](double e) { return e == 0.0; });
    const std::string tagp = "p=" + detail::fmt(p);
    rec.expect(c.slope <= std::log(c.lambda) + 0.01, tagp + ": slope " + detail::fmt(c.slope) + " above log lambda + 0.01");
    rec.expect(zero, tagp + ": constant field has nonzero error");
    if (c.bound_checked) rec.expect(c.bound_holds, tagp + ": e_k above lambda^k |f - Mf|");
    rec.data()[tagp] = {{"slope", measured(c.slope)}, {"log_lambda", formula(std::log(c.lambda))},
                        {"lambda", measured(c.lambda)}, {"constant_field_zero", zero}};
    summary += tagp + " slope " + detail::fmt(c.slope) + "; ";
  }
  r.summary = summary + "log lambda " + detail::fmt(r.data["p=2"]["log_lambda"]["value"].get<double>());
}

inline void criterion_shrinking(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  // small fixture: fields, word enumeration, moment inequality
  auto a8 = share(build_sl2_torus_orbit(8));
  const auto mu8 = generator_measure(*a8, true);
  ShrinkingTargetPlan plan8;
  for (std::size_t n = 1; n <= 20; ++n)
    plan8.targets.push_back(n % 2 ? std::vector<std::uint32_t>{0, 5, 17, 30} : std::vector<std::uint32_t>{3, 11, 26, 40});
  const auto st8 = shrinking_series_exact(a8, mu8, plan8, {}, true);
  rec.expect(st8.mean_identity_error <= 1e-12, "(Z/8)^2: mean identity error " + detail::fmt(st8.mean_identity_error));
  double enum_dev = 0.0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t x = 0; x < a8->size(); ++x)
      enum_dev = std::max(enum_dev, std::abs(st8.fields[n - 1][x] - enumerate_hit(mu8, n, x, plan8.targets[n - 1])));
  rec.expect(enum_dev <= 1e-12, "word enumeration oracle deviation " + detail::fmt(enum_dev));
  const double lam8 = restricted_norm(MarkovOperator(Representation{a8, 2.0, 1}, mu8)).lambda;
  const auto mom = moment_inequality_check(st8, 2.0, lam8);
  // one range integrated directly
  double lhs = 0.0;
  const auto nu8 = plan8.measures(*a8);
  for (std::size_t x = 0; x < a8->size(); ++x) {
    double s = 0.0;
    for (std::size_t i = 3; i <= 9; ++i) s += st8.fields[i - 1][x] - nu8[i - 1];
    lhs += a8->weights[x] * s * s;
  }
  const auto one = moment_inequality_check(st8, 2.0, lam8, {{3, 9}});
  rec.expect(mom.holds, "moment inequality fails, min slack " + detail::fmt(mom.min_slack));
  rec.expect(std::abs(one.ranges[0].lhs - lhs) <= 1e-14, "moment integral differs from direct integration");

  // divergent case on the large orbit
  auto a64 = share(build_sl2_torus_orbit(64));
  const auto mu64 = generator_measure(*a64, true);
  const auto plan = ball_plan(*a64, 0, power_radii(0.5, 0.25, 4096));
  const auto st = shrinking_series_exact(a64, mu64, plan, {});
  const double S = st.expectation();
  const auto xs = sample_points(a64->size(), 100, opt.seed);
  const auto env = envelope_check(st.sigma, S, xs, 0.6);
  rec.expect(S >= 100.0, "S_N below 100");
  rec.expect(st.mean_identity_error <= 1e-12, "(Z/64)^2: mean identity error " + detail::fmt(st.mean_identity_error));
  rec.expect(env.fraction_within >= 0.9, "envelope holds for only " + detail::fmt(env.fraction_within));
  rec.data()["small"] = {{"mean_identity_error", measured(st8.mean_identity_error)},
                         {"enumeration_deviation", oracle(enum_dev)},
                         {"lambda", measured(lam8)},
                         {"moment_constant", formula(mom.constant)},
                         {"moment_ranges", measured(static_cast<double>(mom.ranges.size()))},
                         {"moment_min_slack", measured(mom.min_slack)},
                         {"direct_integral", oracle(lhs)}};
  rec.data()["divergent"] = {{"N", measured(4096.0)},
                             {"S_N", measured(S)},
                             {"relative_mean_identity_error", measured(st.mean_identity_error)},
                             {"fraction_within", measured(env.fraction_within)},
                             {"max_ratio", measured(env.max_ratio)}};
  r.summary = "enumeration " + detail::fmt(enum_dev) + ", moment min slack " + detail::fmt(mom.min_slack) + ", S_N " +
              detail::fmt(S) + ", envelope fraction " + detail::fmt(env.fraction_within);
}

inline void criterion_conditioned(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  const auto a = build_sl2_torus_orbit(64);
  const auto mu = generator_measure(a, true);
  const auto short_plan = ball_plan(a, 0, power_radii(0.5, 0.25, 400));
  std::vector<double> drifts;
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto c = conditioned_series(a, mu, short_plan, 0.5, {10, 20}, {5000, opt.seed + i, opt.jobs});
    drifts.push_back(c.drift);
  }
  const double mean = (drifts[0] + drifts[1] + drifts[2]) / 3.0;
  double spread = 0.0;
  for (double d : drifts) spread = std::max(spread, std::abs(d / mean - 1.0));
  rec.expect(mean > 0.0, "drift estimate not positive");
  rec.expect(spread <= 0.05, "drift estimates spread " + detail::fmt(spread) + " across seeds");

  auto shared = oracles::share(a);
  const auto plan = ball_plan(a, 0, power_radii(0.5, 0.25, 4096));
  const double S = plan.partial_sums(a).back();
  const auto xs = sample_points(a.size(), 100, opt.seed);
  const auto c = conditioned_series(a, mu, plan, 0.5, xs, {200, opt.seed, opt.jobs});
  Field joint(a.size(), 0.0);
  for (std::size_t s = 0; s < xs.size(); ++s) joint[xs[s]] = c.joint_sigma[s];
  const auto env = envelope_check(joint, S, xs, 0.6);
  rec.expect(!c.degenerate, "conditioned run degenerate");
  rec.expect(env.fraction_within >= 0.9, "conditioned series within the envelope for only " + detail::fmt(env.fraction_within));
  rec.data()["drifts"] = tag(drifts, Provenance::Measured);
  rec.data()["free_group_drift"] = oracle(0.4);
  rec.data()["max_relative_spread"] = measured(spread);
  rec.data()["a"] = measured(c.a);
  rec.data()["S_N"] = measured(S);
  rec.data()["fraction_within"] = measured(env.fraction_within);
  rec.data()["max_ratio"] = measured(env.max_ratio);
  r.summary = "drifts " + detail::fmt(drifts[0]) + ", " + detail::fmt(drifts[1]) + ", " + detail::fmt(drifts[2]) +
              "; conditioned envelope fraction " + detail::fmt(env.fraction_within);
}

inline void criterion_warped(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  auto level = [](std::int64_t m) { return build_warped_level(share(build_sl2_torus_orbit(m)), static_cast<double>(m)); };
  {
    const auto L = level(4);
    const auto fw = floyd_warshall(L);
    bool same = true;
    for (std::uint32_t x = 0; x < L.vertices(); ++x) {
      const auto d = warped_distances(L, {x});
      for (std::uint32_t y = 0; y < L.vertices(); ++y) same = same && d[y] == fw[x][y];
    }
    rec.expect(same, "m=4: Dijkstra differs from Floyd-Warshall");
    rec.data()["floyd_warshall_exact"] = same;
  }
  double worst_jump = 0.0;
  for (std::int64_t m : {4, 8, 16}) {
    const auto L = level(m);
    for (const auto& p : L.jumps)
      for (std::uint32_t x = 0; x < L.vertices(); ++x) worst_jump = std::max(worst_jump, warped_distances(L, {x}, 1.0)[p[x]]);
  }
  rec.expect(worst_jump <= 1.0, "dist(x, s x) = " + detail::fmt(worst_jump));
  rec.data()["max_jump_distance"] = measured(worst_jump);

  std::size_t separated = 0, violations = 0;
  for (std::int64_t m : {8, 16}) {
    const auto L = level(m);
    detail::CounterRng rng(opt.seed, static_cast<std::uint64_t>(m));
    std::vector<std::pair<Support, Support>> pairs;
    for (int i = 0; i < 40; ++i) {
      const auto u = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      const auto v = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      pairs.push_back({{u}, {v}});
      pairs.push_back({{u, L.vertex(u / m + 1, u % m)}, {v}});
    }
    std::vector<std::vector<std::size_t>> frontier{{}};
    for (std::size_t len = 0; len <= 4; ++len) {
      std::vector<std::vector<std::size_t>> next;
      for (const auto& w : frontier) {
        const auto pr = propagation_check(L, w, pairs);
        separated += pr.separated_pairs;
        violations += pr.violations;
        if (len < 4)
          for (std::size_t s = 0; s < L.jumps.size(); ++s) {
            auto w2 = w;
            w2.push_back(s);
            next.push_back(std::move(w2));
          }
      }
      frontier = std::move(next);
    }
  }
  rec.expect(violations == 0, std::to_string(violations) + " propagation violations");
  rec.expect(separated > 0, "no separated pair tested");
  rec.data()["propagation_separated_pairs"] = measured(static_cast<double>(separated));
  rec.data()["propagation_violations"] = measured(static_cast<double>(violations));

  std::vector<WarpedLevel> cone;
  std::vector<double> maxima;
  bool coverage = true;
  for (std::int64_t m : {8, 16, 32, 64}) {
    cone.push_back(level(m));
    const auto b = ball_measure_profile(cone.back(), 3.0);
    coverage = coverage && b.coverage_holds;
    maxima.push_back(b.max_measure);
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < maxima.size(); ++i) decreasing = decreasing && maxima[i] < maxima[i - 1];
  rec.expect(decreasing, "max R=3 ball measure not strictly decreasing");
  rec.expect(coverage, "ball coverage fails");
  rec.data()["ball_measure_R3"] = tag(maxima, Provenance::Measured);

  const std::vector<WarpedLevel> small(cone.begin(), cone.begin() + 3);
  const auto gr = ghost_defect(small, 30);
  rec.expect(gr.gapped && gr.sup_lambda < 1.0, "levels not gapped");
  rec.expect(gr.bound_holds, "ghost defect above sup lambda^k");
  rec.data()["sup_lambda"] = measured(gr.sup_lambda);
  rec.data()["ghost_defect"] = tag(gr.defect, Provenance::Measured);

  std::vector<std::vector<std::size_t>> centers;
  for (const auto& L : cone) {
    centers.emplace_back();
    for (std::size_t p = 0; p < L.space->size(); ++p) centers.back().push_back(p);
  }
  const auto loc = ghost_locality(cone, 3.0, centers);
  double tight = 0.0;
  for (const auto& l : loc.levels) tight = std::max(tight, std::abs(l.point_norm * l.point_norm - l.point_slice));
  rec.expect(loc.bound_holds, "locality bound fails");
  rec.expect(tight <= 1e-12, "single-point equality off by " + detail::fmt(tight));
  rec.data()["locality_point_equality_error"] = measured(tight);
  r.summary = "sup lambda " + detail::fmt(gr.sup_lambda) + ", ball measures decreasing, " + std::to_string(separated) +
              " separated pairs without violation";
}

inline void criterion_constants(CriterionResult& r, const AcceptanceOptions& opt) {
  using namespace oracles;
  detail::Recorder rec(r);
  OracleOptions oo;
  oo.seed = opt.seed;
  for (std::size_t n = 2; n <= 6; ++n) {
    auto a = share(build_cyclic(n));
    const auto Q = distinct_generators(*a);
    const auto mu = uniform_extended(Q, a->identity()).first;
    const Representation rep{a, 2.0, 1};
    const double lam = restricted_norm(MarkovOperator(rep, mu)).lambda;
    const double kd = kappa_from_decay(lam).kappa;
    const double ko = kazhdan_constant_oracle(rep, Q, oo).best_found;
    const std::string tagn = "Z/" + std::to_string(n);
    rec.expect(std::abs(kd - (1.0 - lam)) <= 1e-12, tagn + ": kappa_from_decay differs from 1 - lambda");
    rec.expect(kd <= ko + 1e-6, tagn + ": kappa_from_decay above the oracle");
    rec.data()[tagn] = {{"lambda", measured(lam)}, {"kappa_from_decay", formula(kd)}, {"kappa_oracle", oracle(ko)}};
  }
  const auto b = boost_pair(1.0 / 3, 0.1);
  rec.expect(b.m == 3 && std::abs(b.kappa - 26.0 / 27) <= 1e-15, "boost_pair(1/3, 0.1) != (3, 26/27)");
  auto z4 = share(build_cyclic(4));
  const Representation rep4{z4, 2.0, 1};
  const double lam4 = restricted_norm(MarkovOperator(rep4, generator_measure(*z4, true))).lambda;
  rec.expect(std::abs(lam4 - 1.0 / 3) <= 1e-10, "Z/4 lazy lambda is not 1/3");
  const auto est = kazhdan_constant_oracle(rep4, boost_set(generator_elements(*z4), b.m), oo);
  rec.expect(est.best_found >= 0.962, "oracle on the boosted set gives " + detail::fmt(est.best_found));
  rec.data()["boost"] = {{"m", formula(static_cast<double>(b.m))},
                         {"kappa", formula(b.kappa)},
                         {"lambda_Z4", measured(lam4)},
                         {"kappa_oracle", oracle(est.best_found)},
                         {"kappa_certified_lower", oracle(est.certified_lower)}};
  r.summary = "boost (" + std::to_string(b.m) + ", " + detail::fmt(b.kappa) + "), boosted oracle " + detail::fmt(est.best_found);
}

/// A fixture whose generator permutation was mutated so it no longer preserves
/// the measure; the runner must refuse it with the invariant named.
inline nlohmann::json corrupted_fixture_config() {
  nlohmann::json action = {{"name", "mutated"},
                           {"points", 4},
                           {"weights", {0.1, 0.1, 0.4, 0.4}},
                           {"generators", {{{"label", "s"}, {"inverse", "s"}, {"map", {1, 0, 3, 2}}}}}};
  action["generators"][0]["map"] = {0, 2, 1, 3};
  return {{"schema_version", kSchemaVersion}, {"kind", "markov"}, {"fixture", {{"builder", "explicit"}, {"action", action}}}};
}

inline void fault_injection(CriterionResult& r, const AcceptanceOptions&) {
  detail::Recorder rec(r);
  RunOptions ro;
  ro.write_files = false;
  const auto out = run_experiment(config_from_json(corrupted_fixture_config()), ro);
  const bool named = out.message.find("measure preservation") != std::string::npos;
  rec.expect(out.status == 1, "corrupted fixture gave status " + std::to_string(out.status));
  rec.expect(named, "measure-preservation invariant not named");
  r.data["status"] = out.status;
  r.data["message"] = out.message;
  r.summary = "detected: " + out.message;
}

/// Config used by the determinism criterion: a seeded run with Monte Carlo and
/// conditioned walks.
inline nlohmann::json determinism_config(std::uint64_t seed) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "shrinking"},
          {"fixture", {{"builder", "sl2_torus_orbit"}, {"m", 16}}},
          {"params", {{"N", 64}, {"trials", 500}, {"seed", seed}, {"samples", 4}, {"drift_fraction", 0.5}}}};
}

// ---------------------------------------------------------------------------

struct CriterionSpec {
  std::string id;
  std::string title;
  double limit;
  std::function<void(CriterionResult&, const AcceptanceOptions&)> run;
};

inline const std::vector<CriterionSpec>& criteria() {
  static const std::vector<CriterionSpec> specs{
      {"1", "certified decay", 10, criterion_decay},
      {"2", "Neumann formula", 0, criterion_neumann},
      {"3", "sandwich inequality", 0, criterion_sandwich},
      {"4", "admissibility", 0, criterion_admissibility},
      {"5", "operator identities", 0, criterion_identities},
      {"6", "expander certification", 60, criterion_expanders},
      {"7", "quantitative ergodic theorem", 0, criterion_ergodic},
      {"8", "shrinking targets", 120, criterion_shrinking},
      {"9", "conditioned walks", 0, criterion_conditioned},
      {"10", "warped cone", 120, criterion_warped},
      {"11", "round-trip constants", 0, criterion_constants},
  };
  return specs;
}

inline CriterionResult run_criterion(const CriterionSpec& spec, const AcceptanceOptions& opt) {
  CriterionResult r;
  r.id = spec.id;
  r.title = spec.title;
  r.limit = spec.limit;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    spec.run(r, opt);
  } catch (const std::exception& e) {
    r.failures.push_back(std::string("exception: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.limit > 0 && r.seconds > r.limit) r.failures.push_back("runtime above " + detail::fmt(r.limit) + " s");
  r.passed = r.failures.empty();
  return r;
}

inline nlohmann::ordered_json to_json(const CriterionResult& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["title"] = r.title;
  j["passed"] = r.passed;
  j["summary"] = r.summary;
  j["failures"] = r.failures;
  j["data"] = r.data;
  return j;
}

/// Determinism: the seeded criteria and a seeded CLI run, repeated, must
/// serialize to identical bytes.
inline CriterionResult criterion_determinism(const std::vector<CriterionResult>& first, const AcceptanceOptions& opt) {
  CriterionSpec spec{"12", "determinism", 0, [&](CriterionResult& r, const AcceptanceOptions& o) {
                       detail::Recorder rec(r);
                       std::vector<std::string> compared;
                       for (const auto& prev : first) {
                         if (prev.id != "5" && prev.id != "8" && prev.id != "9") continue;
                         for (const auto& s : criteria())
                           if (s.id == prev.id) {
                             const auto again = run_criterion(s, o);
                             rec.expect(to_json(again).dump() == to_json(prev).dump(), "criterion " + prev.id + " not reproducible");
                             compared.push_back("criterion " + prev.id);
                           }
                       }
                       RunOptions ro;
                       ro.jobs = o.jobs;
                       const auto cfg = config_from_json(determinism_config(o.seed));
                       const auto x = run_experiment(cfg, ro);
                       ro.jobs = o.jobs + 1;  // a different job count must not change the bytes
                       const auto y = run_experiment(cfg, ro);
                       rec.expect(x.status == 0, "determinism run failed: " + x.message);
                       rec.expect(x.files == y.files, "CLI run files differ between repeats");
                       compared.push_back("shrinking run files");
                       r.data["compared"] = compared;
                       r.summary = std::to_string(compared.size()) + " artifacts byte-identical on repeat";
                     }};
  return run_criterion(spec, opt);
}

inline std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.title << " (" << std::fixed << std::setprecision(1)
     << r.seconds << " s): " << r.summary;
  for (const auto& f : r.failures) os << "\n      - " << f;
  return os.str();
}

struct AcceptanceRun {
  std::vector<CriterionResult> results;
  bool passed() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  }
};

/// Runs criteria 1-12 plus the fault-injection row; `on_result` sees each row as it finishes.
inline AcceptanceRun run_acceptance(const AcceptanceOptions& opt,
                                    const std::function<void(const CriterionResult&)>& on_result = {}) {
  AcceptanceRun run;
  for (const auto& s : criteria()) {
    run.results.push_back(run_criterion(s, opt));
    if (on_result) on_result(run.results.back());
  }
  run.results.push_back(criterion_determinism(run.results, opt));
  if (on_result) on_result(run.results.back());
  run.results.push_back(run_criterion({"F", "fault injection", 0, fault_injection}, opt));
  if (on_result) on_result(run.results.back());
  return run;
}

inline nlohmann::ordered_json acceptance_report(const AcceptanceRun& run, const AcceptanceOptions& opt) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = opt.seed;
  j["passed"] = run.passed();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : run.results) arr.push_back(to_json(r));
  j["criteria"] = std::move(arr);
  return j;
}

}  // namespace gaplab
