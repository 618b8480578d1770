#pragma once

// Experiment configuration, schema validation and the batch runner behind the
// `gaplab run` command.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/ergodic_walk.hpp"
#include "gaplab/expanders.hpp"
#include "gaplab/kazhdan.hpp"
#include "gaplab/report.hpp"
#include "gaplab/warped_cone.hpp"

namespace gaplab {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& msg) : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct FixtureSpec {
  std::string builder;  // cyclic | sl2_regular | sl2_torus | sl2_torus_orbit | random | explicit
  std::uint64_t size = 0;  // n for cyclic and random, m for the SL2 builders
  std::uint64_t generators = 0;  // random only
  std::uint64_t seed = 0;        // random only
  nlohmann::json action;         // explicit only
  bool operator==(const FixtureSpec&) const = default;
};

struct MeasureSpec {
  std::string type = "lazy_generators";  // lazy_generators | generators | uniform_extended
  std::optional<std::uint64_t> power;
  bool operator==(const MeasureSpec&) const = default;
};

struct Params {
  std::optional<double> p;
  std::optional<std::uint64_t> d, k_max, N, trials, seed, center, samples, word_length;
  std::optional<double> eps, c, e, drift_fraction, R, t_factor;
  bool operator==(const Params&) const = default;
};

struct OutputSpec {
  std::optional<std::string> dir, prefix;
  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string kind;  // markov | kazhdan | projection | expander | ergodic | shrinking | warped | ghost
  std::optional<FixtureSpec> fixture;
  std::vector<FixtureSpec> sequence;  // expander
  std::vector<std::uint64_t> levels;  // warped, ghost: m of each (Z/m)^2 orbit level
  std::optional<MeasureSpec> measure;
  Params params;
  OutputSpec output;
  bool operator==(const ExperimentConfig&) const = default;

  bool stochastic() const { return kind == "kazhdan" || kind == "ergodic" || kind == "shrinking" || kind == "warped"; }
};

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::ordered_json to_json(const FixtureSpec& f) {
  nlohmann::ordered_json j;
  j["builder"] = f.builder;
  if (f.builder == "cyclic") j["n"] = f.size;
  if (f.builder.rfind("sl2_", 0) == 0) j["m"] = f.size;
  if (f.builder == "random") {
    j["n"] = f.size;
    j["generators"] = f.generators;
    j["seed"] = f.seed;
  }
  if (f.builder == "explicit") j["action"] = f.action;
  return j;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["kind"] = c.kind;
  if (c.fixture) j["fixture"] = to_json(*c.fixture);
  if (!c.sequence.empty()) {
    auto s = nlohmann::ordered_json::array();
    for (const auto& f : c.sequence) s.push_back(to_json(f));
    j["sequence"] = std::move(s);
  }
  if (!c.levels.empty()) j["levels"] = c.levels;
  if (c.measure) {
    nlohmann::ordered_json m;
    m["type"] = c.measure->type;
    if (c.measure->power) m["power"] = *c.measure->power;
    j["measure"] = std::move(m);
  }
  nlohmann::ordered_json p = nlohmann::ordered_json::object();
  auto put = [&p](const char* key, const auto& v) {
    if (v) p[key] = *v;
  };
  put("p", c.params.p);
  put("d", c.params.d);
  put("k_max", c.params.k_max);
  put("N", c.params.N);
  put("trials", c.params.trials);
  put("seed", c.params.seed);
  put("eps", c.params.eps);
  put("c", c.params.c);
  put("e", c.params.e);
  put("center", c.params.center);
  put("samples", c.params.samples);
  put("drift_fraction", c.params.drift_fraction);
  put("R", c.params.R);
  put("t_factor", c.params.t_factor);
  put("word_length", c.params.word_length);
  if (!p.empty()) j["params"] = std::move(p);
  nlohmann::ordered_json o = nlohmann::ordered_json::object();
  if (c.output.dir) o["dir"] = *c.output.dir;
  if (c.output.prefix) o["prefix"] = *c.output.prefix;
  if (!o.empty()) j["output"] = std::move(o);
  return j;
}

namespace detail {

inline void expect_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void only_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(path + "/" + it.key(), "unknown field");
  }
}

inline const nlohmann::json& required(const nlohmann::json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "/" + key, "required field missing");
  return j.at(key);
}

inline std::uint64_t as_count(const nlohmann::json& v, const std::string& path, std::uint64_t min = 0) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(path, "expected a non-negative integer");
  const auto x = v.get<std::uint64_t>();
  if (x < min) throw ConfigError(path, "must be at least " + std::to_string(min));
  return x;
}

inline double as_real(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline FixtureSpec parse_fixture(const nlohmann::json& j, const std::string& path) {
  expect_object(j, path);
  FixtureSpec f;
  f.builder = as_string(required(j, path, "builder"), path + "/builder");
  if (f.builder == "cyclic") {
    only_keys(j, path, {"builder", "n"});
    f.size = as_count(required(j, path, "n"), path + "/n", 1);
  } else if (f.builder == "sl2_regular" || f.builder == "sl2_torus" || f.builder == "sl2_torus_orbit") {
    only_keys(j, path, {"builder", "m"});
    f.size = as_count(required(j, path, "m"), path + "/m", 1);
  } else if (f.builder == "random") {
    only_keys(j, path, {"builder", "n", "generators", "seed"});
    f.size = as_count(required(j, path, "n"), path + "/n", 1);
    f.generators = as_count(required(j, path, "generators"), path + "/generators", 1);
    f.seed = as_count(required(j, path, "seed"), path + "/seed");
  } else if (f.builder == "explicit") {
    only_keys(j, path, {"builder", "action"});
    f.action = required(j, path, "action");
    expect_object(f.action, path + "/action");
  } else {
    throw ConfigError(path + "/builder", "unknown builder '" + f.builder + "'");
  }
  return f;
}

}  // namespace detail

/// Validates against the schema; every error names the offending field path.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (j.is_null()) throw ConfigError("/", "empty configuration");
  expect_object(j, "");
  only_keys(j, "", {"schema_version", "kind", "fixture", "sequence", "levels", "measure", "params", "output"});
  ExperimentConfig c;
  const auto version = as_count(required(j, "", "schema_version"), "/schema_version");
  if (version != static_cast<std::uint64_t>(kSchemaVersion))
    throw ConfigError("/schema_version", "unsupported version " + std::to_string(version));
  c.kind = as_string(required(j, "", "kind"), "/kind");
  static const std::vector<std::string> kinds{"markov", "kazhdan", "projection", "expander",
                                              "ergodic", "shrinking", "warped", "ghost"};
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) throw ConfigError("/kind", "unknown kind '" + c.kind + "'");

  if (j.contains("fixture")) c.fixture = parse_fixture(j["fixture"], "/fixture");
  if (j.contains("sequence")) {
    if (!j["sequence"].is_array()) throw ConfigError("/sequence", "expected an array");
    for (std::size_t i = 0; i < j["sequence"].size(); ++i)
      c.sequence.push_back(parse_fixture(j["sequence"][i], "/sequence/" + std::to_string(i)));
  }
  if (j.contains("levels")) {
    if (!j["levels"].is_array()) throw ConfigError("/levels", "expected an array");
    for (std::size_t i = 0; i < j["levels"].size(); ++i)
      c.levels.push_back(as_count(j["levels"][i], "/levels/" + std::to_string(i), 1));
  }
  if (j.contains("measure")) {
    const auto& m = j["measure"];
    expect_object(m, "/measure");
    only_keys(m, "/measure", {"type", "power"});
    MeasureSpec ms;
    ms.type = as_string(required(m, "/measure", "type"), "/measure/type");
    if (ms.type != "lazy_generators" && ms.type != "generators" && ms.type != "uniform_extended")
      throw ConfigError("/measure/type", "unknown measure type '" + ms.type + "'");
    if (m.contains("power")) ms.power = as_count(m["power"], "/measure/power", 1);
    c.measure = ms;
  }
  if (j.contains("params")) {
    const auto& p = j["params"];
    expect_object(p, "/params");
    only_keys(p, "/params",
              {"p", "d", "k_max", "N", "trials", "seed", "eps", "c", "e", "center", "samples", "drift_fraction", "R",
               "t_factor", "word_length"});
    auto real = [&](const char* key, std::optional<double>& out, double lo, double hi, bool open_lo) {
      if (!p.contains(key)) return;
      const std::string path = std::string("/params/") + key;
      const double v = as_real(p[key], path);
      if (!(open_lo ? v > lo : v >= lo) || !(v <= hi))
        throw ConfigError(path, "out of range " + std::string(open_lo ? "(" : "[") + format_number(lo) + ", " +
                                    format_number(hi) + "]");
      out = v;
    };
    auto count = [&](const char* key, std::optional<std::uint64_t>& out, std::uint64_t min) {
      if (p.contains(key)) out = as_count(p[key], std::string("/params/") + key, min);
    };
    const double big = std::numeric_limits<double>::max();
    real("p", c.params.p, 1.0, big, true);
    count("d", c.params.d, 1);
    count("k_max", c.params.k_max, 1);
    count("N", c.params.N, 1);
    count("trials", c.params.trials, 0);
    count("seed", c.params.seed, 0);
    real("eps", c.params.eps, 0.0, 1.0 - 1e-15, true);
    real("c", c.params.c, 0.0, big, true);
    real("e", c.params.e, 0.0, big, false);
    count("center", c.params.center, 0);
    count("samples", c.params.samples, 1);
    real("drift_fraction", c.params.drift_fraction, 0.0, 1.0, false);
    real("R", c.params.R, 0.0, big, false);
    real("t_factor", c.params.t_factor, 0.0, big, true);
    count("word_length", c.params.word_length, 0);
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    expect_object(o, "/output");
    only_keys(o, "/output", {"dir", "prefix"});
    if (o.contains("dir")) c.output.dir = as_string(o["dir"], "/output/dir");
    if (o.contains("prefix")) c.output.prefix = as_string(o["prefix"], "/output/prefix");
  }

  // kind-specific requirements
  const bool single = c.kind == "markov" || c.kind == "kazhdan" || c.kind == "projection" || c.kind == "ergodic" ||
                      c.kind == "shrinking";
  if (single && !c.fixture) throw ConfigError("/fixture", "required for kind '" + c.kind + "'");
  if (c.kind == "expander" && c.sequence.size() < 2)
    throw ConfigError("/sequence", "kind 'expander' needs at least two fixtures");
  if ((c.kind == "warped" || c.kind == "ghost") && c.levels.empty())
    throw ConfigError("/levels", "required for kind '" + c.kind + "'");
  if (c.kind == "shrinking" && c.fixture && c.fixture->builder != "sl2_torus" && c.fixture->builder != "sl2_torus_orbit")
    throw ConfigError("/fixture/builder", "kind 'shrinking' needs a torus fixture for its target balls");
  if (c.stochastic() && !c.params.seed) throw ConfigError("/params/seed", "required for stochastic kind '" + c.kind + "'");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", text.find_first_not_of(" \t\r\n") == std::string::npos ? "empty configuration"
                                                                                    : std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Runner.

struct RunOptions {
  std::optional<std::uint64_t> seed;     // overrides params.seed
  std::optional<std::string> out_dir;    // overrides output.dir
  unsigned jobs = 1;
  bool write_files = true;
};

struct Check {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct RunOutcome {
  int status = 0;  // 0 pass, 1 invariant failure, 2 configuration error
  std::vector<Check> checks;
  std::string message;
  nlohmann::ordered_json report;
  std::vector<std::pair<std::string, std::string>> files;  // name, content
};

namespace detail {

inline FiniteAction build_fixture(const FixtureSpec& f) {
  const auto m = static_cast<std::int64_t>(f.size);
  if (f.builder == "cyclic") return build_cyclic(f.size);
  if (f.builder == "sl2_regular") return build_sl2_regular(m);
  if (f.builder == "sl2_torus") return build_sl2_torus(m);
  if (f.builder == "sl2_torus_orbit") return build_sl2_torus_orbit(m);
  if (f.builder == "random") return build_random_action(f.size, f.generators, f.seed);
  try {
    return action_from_json(f.action);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("/fixture/action", e.what());
  }
}

inline std::vector<GroupElement> nontrivial_generators(const FiniteAction& a) {
  std::vector<GroupElement> Q;
  for (auto& g : generator_elements(a))
    if (!is_identity(g.perm) && std::find(Q.begin(), Q.end(), g) == Q.end()) Q.push_back(g);
  return Q;
}

inline DiscreteMeasure build_measure(const FiniteAction& a, const std::optional<MeasureSpec>& spec) {
  const MeasureSpec ms = spec ? *spec : MeasureSpec{};
  DiscreteMeasure mu;
  if (ms.type == "generators") {
    mu = generator_measure(a, false);
  } else if (ms.type == "uniform_extended") {
    mu = uniform_extended(nontrivial_generators(a), a.identity()).first;
  } else {
    mu = generator_measure(a, true);
  }
  if (ms.power && *ms.power > 1) mu = power(mu, *ms.power);
  return mu;
}

inline nlohmann::ordered_json quality_tagged(const RestrictedNorm& r) {
  nlohmann::ordered_json j = measured(r.lambda);
  j["quality"] = to_string(r.quality);
  j["upper"] = json_number(r.upper);
  return j;
}

inline std::vector<double> powers(double base, std::size_t K) {
  std::vector<double> v;
  for (std::size_t k = 0; k <= K; ++k) v.push_back(std::pow(base, static_cast<double>(k)));
  return v;
}

struct Context {
  const ExperimentConfig& cfg;
  RunOutcome& out;
  std::string prefix;
  std::uint64_t seed;
  unsigned jobs;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
  std::string hash_input;

  void check(const std::string& name, bool ok, const std::string& detail = "") { out.checks.push_back({name, ok, detail}); }
  void csv(const std::string& suffix, const CsvTable& t) { out.files.emplace_back(prefix + "_" + suffix + ".csv", t.str()); }
  std::shared_ptr<const FiniteAction> fixture(const FixtureSpec& f) {
    auto a = std::make_shared<const FiniteAction>(build_fixture(f));
    hash_input += to_json(*a).dump();
    return a;
  }
};

inline void run_markov(Context& cx) {
  const auto& P = cx.cfg.params;
  auto a = cx.fixture(*cx.cfg.fixture);
  const Representation rep{a, P.p.value_or(2.0), P.d.value_or(1)};
  const auto mu = build_measure(*a, cx.cfg.measure);
  const MarkovOperator A(rep, mu);
  const auto rn = restricted_norm(A);
  const std::size_t K = P.k_max.value_or(50);
  const auto curve = defect_curve(A, K);
  auto& r = cx.results;
  r["points"] = measured(static_cast<double>(a->size()));
  r["orbits"] = measured(static_cast<double>(A.decomposition().orbits()));
  r["lambda"] = quality_tagged(rn);
  r["defect"] = tag(curve.defect, Provenance::Measured);
  r["defect"]["quality"] = to_string(curve.quality);
  r["lambda_powers"] = tag(powers(rn.lambda, K), Provenance::PaperFormula);
  if (rep.p == 2.0) {
    bool ok = true;
    for (std::size_t k = 0; k <= K; ++k) ok = ok && curve.defect[k] <= std::pow(rn.lambda, static_cast<double>(k)) + 1e-9;
    cx.check("defect(k) <= lambda^k", ok);
  }
  const auto Q = nontrivial_generators(*a);
  const DiscreteMeasure nu = Q.empty() ? DiscreteMeasure::dirac(a->identity()) : DiscreteMeasure::dirac(Q.front());
  const auto ids = operator_identities_check(rep, mu, nu);
  r["identities"] = {{"convolution", measured(ids.convolution)},
                     {"translation", measured(ids.translation)},
                     {"invariants", measured(ids.invariants)},
                     {"complement", measured(ids.complement)}};
  for (const auto& v : ids.violations) cx.check("identity " + v, false);
  if (ids.ok()) cx.check("operator identities", true);
  CsvTable t({"k", "defect", "lambda_pow"});
  for (std::size_t k = 0; k <= K; ++k)
    t.row({static_cast<double>(k), curve.defect[k], std::pow(rn.lambda, static_cast<double>(k))});
  cx.csv("defect", t);
}

/// Certificate atoms with every number tagged; elements are written as
/// one-line permutations since they are identifiers, not quantities.
inline nlohmann::ordered_json tagged_certificate(const DiscreteMeasure& mu, const AdmissibilityCertificate& c) {
  auto atoms = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < mu.atoms().size(); ++i) {
    const auto& [g, w] = mu.atoms()[i];
    std::string perm;
    for (auto v : g.perm) perm += (perm.empty() ? "" : " ") + std::to_string(v);
    atoms.push_back({{"element", perm},
                     {"word_length", measured(static_cast<double>(g.word_length))},
                     {"weight", measured(w)},
                     {"alpha", measured(c.alpha[i])},
                     {"beta", measured(c.beta[i])}});
  }
  return {{"atoms", std::move(atoms)}, {"M", measured(c.M)}};
}

inline void run_kazhdan(Context& cx) {
  const auto& P = cx.cfg.params;
  auto a = cx.fixture(*cx.cfg.fixture);
  const double p = P.p.value_or(2.0);
  const Representation rep{a, p, P.d.value_or(1)};
  const auto mu = build_measure(*a, cx.cfg.measure);
  const auto Q = nontrivial_generators(*a);
  if (Q.empty()) throw std::invalid_argument("kazhdan: fixture has no nontrivial generator");
  auto& r = cx.results;
  const auto rn = restricted_norm(MarkovOperator(rep.with_p(2.0), mu));
  const double lam = rn.lambda;
  OracleOptions oo;
  oo.seed = cx.seed;
  const auto est = kazhdan_constant_oracle(rep, Q, oo);
  r["lambda"] = quality_tagged(rn);
  r["kappa_oracle"] = oracle(est.best_found);
  r["kappa_certified_lower"] = oracle(est.certified_lower);
  const auto cert = certify_admissible(mu, Q);
  if (const auto* c = std::get_if<AdmissibilityCertificate>(&cert)) {
    r["M"] = measured(c->M);
    r["certificate"] = tagged_certificate(mu, *c);
    cx.check("admissibility certificate", verify_certificate(mu, *c, 1e-9).empty());
    if (p == 2.0 && std::isfinite(est.best_found)) {
      const double kap = std::min(2.0, est.best_found);
      const double upper = norm_bound_from_kappa(c->M, 2.0, kap);
      r["sandwich"] = {{"lower", formula(1.0 - kap)}, {"upper", formula(upper)},
                       {"hilbert", formula(hilbert_improvement(lam))}};
      cx.check("1 - kappa <= lambda", 1.0 - kap <= lam + 1e-6);
      cx.check("lambda <= 1 - (2/M) delta(kappa)", lam <= upper + 1e-6);
      cx.check("sqrt(2) sqrt(1 - lambda) <= kappa", hilbert_improvement(lam) <= kap + 1e-6);
    }
  } else {
    r["admissibility_refusal"] = std::get<AdmissibilityRefusal>(cert).reason;
  }
  if (lam < 1.0 && std::isfinite(est.best_found)) {
    const auto dp = kappa_from_decay(lam);
    r["kappa_from_decay"] = formula(dp.kappa);
    r["decay_sum"] = formula(dp.S);
    cx.check("kappa_from_decay <= kappa oracle", dp.kappa <= est.best_found + 1e-6);
  }
  if (lam > 0.0 && lam < 1.0) {
    const auto b = boost_pair(lam, P.eps.value_or(0.1));
    std::vector<GroupElement> supp;
    for (const auto& [g, w] : mu.atoms()) supp.push_back(g);
    const auto boosted = kazhdan_constant_oracle(rep, boost_set(supp, b.m), oo);
    r["boost"] = {{"m", formula(static_cast<double>(b.m))},
                  {"kappa", formula(b.kappa)},
                  {"kappa_oracle", oracle(boosted.best_found)},
                  {"kappa_certified_lower", oracle(boosted.certified_lower)}};
    cx.check("boosted set oracle >= 1 - lambda^m", boosted.best_found >= b.kappa - 1e-6);
  }
}

inline void run_projection(Context& cx) {
  const auto& P = cx.cfg.params;
  auto a = cx.fixture(*cx.cfg.fixture);
  const Representation rep{a, 2.0, 1};
  const MarkovOperator A(rep, build_measure(*a, cx.cfg.measure));
  const double lam = restricted_norm(A).lambda;
  cx.results["lambda"] = measured(lam);
  const Eigen::MatrixXd Pn = neumann_projection(A, lam);
  const Eigen::MatrixXd D = A.decomposition().dense_mean();
  const double err = Pn.size() ? (Pn - D).cwiseAbs().maxCoeff() : 0.0;
  cx.results["neumann_vs_mean"] = measured(err);
  cx.check("neumann projection equals mean projector", err <= 1e-10, format_number(err));
  const std::size_t K = P.k_max.value_or(200);
  const auto it = iterate_to_projection(A, K);
  const double gap = (it.power - Pn).cwiseAbs().maxCoeff();
  cx.results["iterate_vs_neumann"] = measured(gap);
  cx.results["iterate_defect"] = measured(it.defect);
  cx.results["iterate_bound"] = formula(std::pow(lam, static_cast<double>(K)));
  CsvTable t({"row", "col", "value"});
  for (Eigen::Index i = 0; i < Pn.rows(); ++i)
    for (Eigen::Index j = 0; j < Pn.cols(); ++j)
      if (std::abs(Pn(i, j)) > 1e-15) t.row({static_cast<double>(i), static_cast<double>(j), Pn(i, j)});
  cx.csv("projection", t);
}

inline void run_expander(Context& cx) {
  const auto& P = cx.cfg.params;
  QuotientSequence seq;
  for (const auto& f : cx.cfg.sequence) seq.quotients.push_back(cx.fixture(f));
  SequenceOptions opt;
  if (P.p || P.d) opt.vector_cases.emplace_back(P.p.value_or(2.0), P.d.value_or(1));
  const auto rep = certify_sequence(seq, opt);
  auto& r = cx.results;
  r["verdict"] = rep.uniform ? "uniform" : "not uniform";
  r["epsilon0"] = measured(rep.epsilon0);
  r["max_lambda2"] = measured(rep.max_lambda2);
  r["growth_exponent"] = measured(rep.growth_exponent);
  r["growth_threshold"] = formula(rep.growth_threshold);
  r["mirho_k"] = measured(static_cast<double>(rep.mirho_k));
  r["warnings"] = rep.warnings;
  auto qs = nlohmann::ordered_json::array();
  std::vector<std::string> header{"quotient", "N", "lambda2", "kappa_P", "relation"};
  for (const auto& [p, d] : opt.vector_cases) header.push_back("vector_p" + format_number(p) + "_d" + std::to_string(d));
  header.push_back("mirho_bound");
  CsvTable t(header);
  for (std::size_t i = 0; i < rep.quotients.size(); ++i) {
    const auto& q = rep.quotients[i];
    nlohmann::ordered_json qj;
    qj["name"] = q.name;
    qj["N"] = measured(static_cast<double>(q.N));
    qj["lambda2"] = measured(q.scalar.lambda2);
    qj["kappa_P"] = measured(q.scalar.kappa);
    qj["relation"] = measured(q.relation);
    auto vb = nlohmann::ordered_json::array();
    for (const auto& v : q.vector_bounds) vb.push_back({{"case", "p=" + format_number(v.p) + " d=" + std::to_string(v.d)}, {"lower_bound", measured(v.lower_bound)}});
    qj["vector_bounds"] = std::move(vb);
    if (q.mirho) qj["mirho"] = {{"bound", formula(q.mirho->bound)}, {"spec_form", formula(q.mirho->spec_form)},
                                {"crude", formula(q.mirho->crude)}, {"defect", measured(q.mirho->defect)}};
    qs.push_back(std::move(qj));
    if (q.scalar.connected) {
      cx.check(q.name + ": kappa_P 2|Q| (1 - lambda2) = 1", std::abs(q.relation - 1.0) <= 1e-9, format_number(q.relation));
      if (q.mirho) cx.check(q.name + ": kappa_P <= mirho bound", q.scalar.kappa <= q.mirho->bound * (1 + 1e-9));
    }
    std::vector<std::string> row{q.name, std::to_string(q.N), format_number(q.scalar.lambda2),
                                 format_number(q.scalar.kappa), format_number(q.relation)};
    for (const auto& v : q.vector_bounds) row.push_back(format_number(v.lower_bound));
    row.push_back(q.mirho ? format_number(q.mirho->bound) : "");
    t.row(row);
  }
  r["quotients"] = std::move(qs);
  cx.csv("quotients", t);
}

inline void run_ergodic(Context& cx) {
  const auto& P = cx.cfg.params;
  auto a = cx.fixture(*cx.cfg.fixture);
  const Representation rep{a, P.p.value_or(2.0), P.d.value_or(1)};
  const auto mu = build_measure(*a, cx.cfg.measure);
  const std::size_t K = P.k_max.value_or(100);
  const auto c = ergodic_error_curve(rep, random_field(rep, cx.seed), mu, K);
  auto& r = cx.results;
  r["lambda"] = measured(c.lambda);
  r["lambda"]["quality"] = to_string(c.quality);
  r["errors"] = tag(c.errors, Provenance::Measured);
  r["slope"] = measured(c.slope);
  r["log_lambda"] = formula(std::log(c.lambda));
  r["warnings"] = c.warnings;
  if (c.bound_checked) cx.check("e_k <= lambda^k |f - Mf|", c.bound_holds);
  if (c.lambda > 0.0 && c.lambda < 1.0)
    cx.check("slope <= log lambda + 0.01", c.slope <= std::log(c.lambda) + 0.01, format_number(c.slope));
  const auto zero = ergodic_error_curve(rep, Field(rep.dim(), 1.0), mu, std::min<std::size_t>(K, 20));
  cx.check("constant field has zero error",
           std::all_of(zero.errors.begin(), zero.errors.end(), [](double e) { return e == 0.0; }));
  CsvTable t({"k", "error", "lambda_bound"});
  for (std::size_t k = 0; k <= K; ++k)
    t.row({static_cast<double>(k), c.errors[k], std::pow(c.lambda, static_cast<double>(k)) * c.errors[0]});
  cx.csv("errors", t);
}

inline void run_shrinking(Context& cx) {
  const auto& P = cx.cfg.params;
  auto a = cx.fixture(*cx.cfg.fixture);
  const auto mu = build_measure(*a, cx.cfg.measure);
  const std::size_t N = P.N.value_or(256);
  const auto center = P.center.value_or(0);
  if (center >= a->size()) throw ConfigError("/params/center", "point outside the fixture");
  const auto plan = ball_plan(*a, center, power_radii(P.c.value_or(0.5), P.e.value_or(0.25), N));
  const auto starts = sample_points(a->size(), P.samples.value_or(10), cx.seed);
  const auto st = shrinking_series_exact(a, mu, plan, starts);
  const double lam = restricted_norm(MarkovOperator(Representation{a, 2.0, 1}, mu)).lambda;
  auto& r = cx.results;
  r["lambda"] = measured(lam);
  r["S_N"] = measured(st.expectation());
  r["mean_identity_error"] = measured(st.mean_identity_error);
  cx.check("mean identity", st.mean_identity_error <= 1e-12, format_number(st.mean_identity_error));

  // the moment inequality needs full fields; it runs on a prefix of the plan
  ShrinkingTargetPlan head = plan;
  head.targets.resize(std::min<std::size_t>(N, 32));
  const auto hs = shrinking_series_exact(a, mu, head, {}, true);
  const double p = P.p.value_or(2.0);
  if (lam < 1.0) {
    const auto mr = moment_inequality_check(hs, p, lam);
    r["moment"] = {{"p", formula(p)}, {"constant", formula(mr.constant)}, {"ranges", measured(static_cast<double>(mr.ranges.size()))},
                   {"min_slack", measured(mr.min_slack)}, {"horizon", measured(static_cast<double>(head.horizon()))}};
    cx.check("moment inequality", mr.holds, "min slack " + format_number(mr.min_slack));
  }
  const auto env = envelope_check(st.sigma, st.expectation(), starts);
  r["envelope"] = {{"exponent", formula(env.exponent)}, {"fraction_within", measured(env.fraction_within)},
                   {"max_ratio", measured(env.max_ratio)}};
  std::vector<double> sig;
  for (auto x : starts) sig.push_back(st.sigma[x]);
  r["sigma_at_starts"] = tag(sig, Provenance::Measured);

  std::optional<McStatistics> mc;
  const std::size_t trials = P.trials.value_or(0);
  if (trials > 0) {
    mc = shrinking_series_mc(*a, mu, plan, starts, {trials, cx.seed, cx.jobs});
    const auto b = compare_bands(st, *mc);
    r["monte_carlo"] = {{"trials", measured(static_cast<double>(trials))},
                        {"mean_sigma", tag(mc->mean_sigma, Provenance::Measured)},
                        {"stderr_sigma", tag(mc->stderr_sigma, Provenance::Measured)},
                        {"max_z", measured(b.max_z)},
                        {"within_3_sigma", b.within}};
  }
  if (P.drift_fraction) {
    const auto cs = conditioned_series(*a, mu, plan, *P.drift_fraction, starts,
                                       {trials > 0 ? trials : 1000, cx.seed, cx.jobs});
    r["conditioned"] = {{"drift", measured(cs.drift)},
                        {"a", measured(cs.a)},
                        {"degenerate", cs.degenerate},
                        {"joint_sigma", tag(cs.joint_sigma, Provenance::Measured)},
                        {"eta_sigma", tag(cs.eta_sigma, Provenance::Measured)},
                        {"envelope_fraction", measured(envelope_check(
                                                  [&] {
                                                    Field f(a->size(), 0.0);
                                                    for (std::size_t s = 0; s < starts.size(); ++s) f[starts[s]] = cs.joint_sigma[s];
                                                    return f;
                                                  }(),
                                                  st.expectation(), starts)
                                                  .fraction_within)},
                        {"warnings", cs.warnings}};
  }

  std::vector<std::string> header{"n", "nu", "S_n"};
  for (auto x : starts) header.push_back("f_n(" + std::to_string(x) + ")");
  if (mc)
    for (auto x : starts) header.push_back("freq(" + std::to_string(x) + ")");
  header.push_back("S_N");
  CsvTable t(header);
  for (std::size_t n = 1; n <= N; ++n) {
    std::vector<double> row{static_cast<double>(n), st.nu[n - 1], st.S[n - 1]};
    for (std::size_t s = 0; s < starts.size(); ++s) row.push_back(st.f_at_start[s][n - 1]);
    if (mc)
      for (std::size_t s = 0; s < starts.size(); ++s) row.push_back(mc->frequency(s, n));
    row.push_back(st.expectation());
    t.row(row);
  }
  cx.csv("series", t);
}

inline std::vector<WarpedLevel> build_levels(Context& cx) {
  std::vector<WarpedLevel> cone;
  const double tf = cx.cfg.params.t_factor.value_or(1.0);
  for (auto m : cx.cfg.levels) {
    auto a = cx.fixture(FixtureSpec{"sl2_torus_orbit", m, 0, 0, {}});
    const double t = tf * static_cast<double>(m);
    if (t < 1.0) throw ConfigError("/params/t_factor", "t = t_factor * m must be at least 1");
    cone.push_back(build_warped_level(a, t));
  }
  return cone;
}

inline void run_warped(Context& cx) {
  const auto& P = cx.cfg.params;
  const auto cone = build_levels(cx);
  const double R = P.R.value_or(3.0);
  const std::size_t wl = P.word_length.value_or(2);
  auto levels = nlohmann::ordered_json::array();
  CsvTable t({"m", "t", "vertices", "points", "R", "max_ball_measure", "T", "coverage"});
  std::vector<double> maxima;
  for (const auto& L : cone) {
    const std::string tagm = "m=" + std::to_string(L.m);
    const auto prof = ball_measure_profile(L, R);
    double worst_jump = 0.0;
    for (const auto& j : L.jumps)
      for (std::uint32_t x = 0; x < L.vertices(); ++x) {
        const auto d = warped_distances(L, {x}, 1.0);
        worst_jump = std::max(worst_jump, d[j[x]]);
      }
    cx.check(tagm + ": dist(x, s x) <= 1", worst_jump <= 1.0, format_number(worst_jump));
    cx.check(tagm + ": ball coverage", prof.coverage_holds);
    detail::CounterRng rng(cx.seed, static_cast<std::uint64_t>(L.m));
    std::vector<std::pair<Support, Support>> pairs;
    for (int i = 0; i < 24; ++i) {
      const auto u = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      const auto v = static_cast<std::uint32_t>(rng.next_u64() % L.vertices());
      pairs.push_back({{u}, {v}});
    }
    std::size_t separated = 0, violations = 0;
    std::vector<std::vector<std::size_t>> frontier{{}};
    for (std::size_t len = 0; len <= wl; ++len) {
      std::vector<std::vector<std::size_t>> next;
      for (const auto& w : frontier) {
        const auto pr = propagation_check(L, w, pairs);
        separated += pr.separated_pairs;
        violations += pr.violations;
        if (len < wl)
          for (std::size_t s = 0; s < L.jumps.size(); ++s) {
            auto w2 = w;
            w2.push_back(s);
            next.push_back(std::move(w2));
          }
      }
      frontier = std::move(next);
    }
    cx.check(tagm + ": finite propagation", violations == 0, std::to_string(violations) + " violations");
    maxima.push_back(prof.max_measure);
    levels.push_back({{"m", measured(static_cast<double>(L.m))},
                      {"t", formula(L.t)},
                      {"max_ball_measure", measured(prof.max_measure)},
                      {"T", formula(prof.T)},
                      {"coverage", prof.coverage_holds},
                      {"worst_jump", measured(worst_jump)},
                      {"separated_pairs", measured(static_cast<double>(separated))}});
    t.row({static_cast<double>(L.m), L.t, static_cast<double>(L.vertices()), static_cast<double>(L.space->size()), R,
           prof.max_measure, prof.T, prof.coverage_holds ? 1.0 : 0.0});
    CsvTable e({"from", "to", "length"});
    for (const auto& ed : edge_list(L)) e.row({static_cast<double>(ed.from), static_cast<double>(ed.to), ed.length});
    cx.csv("edges_m" + std::to_string(L.m), e);
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < maxima.size(); ++i) decreasing = decreasing && maxima[i] < maxima[i - 1];
  cx.results["levels"] = std::move(levels);
  cx.results["ball_measure_decreasing"] = decreasing;
  cx.csv("levels", t);
}

inline void run_ghost(Context& cx) {
  const auto& P = cx.cfg.params;
  const auto cone = build_levels(cx);
  const std::size_t K = P.k_max.value_or(30);
  const double R = P.R.value_or(3.0);
  const auto gr = ghost_defect(cone, K);
  std::vector<std::vector<std::size_t>> centers;
  for (const auto& L : cone) {
    centers.emplace_back();
    for (std::size_t p = 0; p < L.space->size(); ++p) centers.back().push_back(p);
  }
  const auto loc = ghost_locality(cone, R, centers);
  auto& r = cx.results;
  r["sup_lambda"] = measured(gr.sup_lambda);
  r["gapped"] = gr.gapped;
  r["defect"] = tag(gr.defect, Provenance::Measured);
  r["bound"] = tag(powers(gr.sup_lambda, K), Provenance::PaperFormula);
  r["locality_decreasing"] = loc.decreasing;
  r["warnings"] = gr.warnings;
  cx.check("ghost defect(k) <= sup lambda^k", gr.bound_holds);
  cx.check("levels gapped", gr.gapped, "sup lambda " + format_number(gr.sup_lambda));
  cx.check("locality |Gf|^2 <= slice |f|^2", loc.bound_holds);
  std::vector<std::string> header{"m", "t", "lambda"};
  for (std::size_t k = 0; k <= K; ++k) header.push_back("defect_" + std::to_string(k));
  header.insert(header.end(), {"max_ball_measure", "max_norm", "point_norm", "point_slice"});
  CsvTable t(header);
  auto lv = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < cone.size(); ++i) {
    const auto& g = gr.levels[i];
    const auto& l = loc.levels[i];
    std::vector<double> row{static_cast<double>(g.m), g.t, g.lambda};
    row.insert(row.end(), g.defect.begin(), g.defect.end());
    row.insert(row.end(), {l.max_ball_measure, l.max_norm, l.point_norm, l.point_slice});
    t.row(row);
    cx.check("m=" + std::to_string(g.m) + ": point indicator equality",
             std::abs(l.point_norm * l.point_norm - l.point_slice) <= 1e-12);
    lv.push_back({{"m", measured(static_cast<double>(g.m))},
                  {"t", formula(g.t)},
                  {"lambda", measured(g.lambda)},
                  {"max_ball_measure", measured(l.max_ball_measure)},
                  {"max_norm", measured(l.max_norm)},
                  {"worst_excess", measured(l.worst_excess)}});
  }
  r["levels"] = std::move(lv);
  cx.csv("levels", t);
}

}  // namespace detail

/// Executes a validated configuration. Files are only collected here; they are
/// written by write_outcome so that report writing stays serial.
inline RunOutcome run_experiment(ExperimentConfig cfg, const RunOptions& opt = {}) {
  RunOutcome out;
  if (opt.seed) cfg.params.seed = opt.seed;
  // the echo omits --out-dir so identical runs into different directories stay byte-identical
  const auto echo = to_json(cfg);
  if (opt.out_dir) cfg.output.dir = opt.out_dir;
  detail::Context cx{cfg, out, cfg.output.prefix.value_or(cfg.kind), cfg.params.seed.value_or(0), std::max(1u, opt.jobs), nlohmann::ordered_json::object(), {}};
  try {
    if (cfg.stochastic() && !cfg.params.seed) throw ConfigError("/params/seed", "required for stochastic kind '" + cfg.kind + "'");
    if (cfg.kind == "markov") detail::run_markov(cx);
    else if (cfg.kind == "kazhdan") detail::run_kazhdan(cx);
    else if (cfg.kind == "projection") detail::run_projection(cx);
    else if (cfg.kind == "expander") detail::run_expander(cx);
    else if (cfg.kind == "ergodic") detail::run_ergodic(cx);
    else if (cfg.kind == "shrinking") detail::run_shrinking(cx);
    else if (cfg.kind == "warped") detail::run_warped(cx);
    else if (cfg.kind == "ghost") detail::run_ghost(cx);
    else throw ConfigError("/kind", "unknown kind '" + cfg.kind + "'");
  } catch (const ConfigError& e) {
    out.status = 2;
    out.message = e.what();
    out.files.clear();
    return out;
  } catch (const InvariantViolation& e) {
    out.status = 1;
    out.checks.push_back({e.invariant(), false, e.what()});
    out.message = std::string("invariant failed: ") + e.invariant() + " (" + e.what() + ")";
  } catch (const std::invalid_argument& e) {
    out.status = 2;
    out.message = std::string("/: rejected by the pipeline: ") + e.what();
    out.files.clear();
    return out;
  } catch (const std::domain_error& e) {
    out.status = 1;
    out.checks.push_back({"domain", false, e.what()});
    out.message = std::string("invariant failed: domain (") + e.what() + ")";
  }

  if (out.status == 0) {
    for (const auto& c : out.checks)
      if (!c.passed) {
        out.status = 1;
        out.message = "invariant failed: " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")");
        break;
      }
  }
  auto& rep = out.report;
  rep["schema_version"] = kSchemaVersion;
  rep["kind"] = cfg.kind;
  rep["fixture_hash"] = "fnv1a64:" + hex64(fnv1a(cx.hash_input));
  rep["config"] = echo;
  rep["results"] = std::move(cx.results);
  auto checks = nlohmann::ordered_json::array();
  for (const auto& c : out.checks) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["passed"] = c.passed;
    if (!c.detail.empty()) cj["detail"] = c.detail;
    checks.push_back(std::move(cj));
  }
  rep["checks"] = std::move(checks);
  rep["status"] = out.status;
  auto files = nlohmann::ordered_json::array();
  for (const auto& f : out.files) files.push_back(f.first);
  rep["series"] = std::move(files);
  out.files.emplace_back(cx.prefix + ".json", rep.dump(2) + "\n");
  return out;
}

/// Writes the collected files into the configured directory, one at a time.
inline std::vector<std::string> write_outcome(const RunOutcome& out, const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const std::filesystem::path dir = opt.out_dir ? *opt.out_dir : cfg.output.dir.value_or(".");
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (const auto& [name, content] : out.files) {
    const auto path = (dir / name).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
    written.push_back(path);
  }
  return written;
}

}  // namespace gaplab
