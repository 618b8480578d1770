#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gaplab/acceptance.hpp"

namespace {

int run_config(const std::string& path, const gaplab::RunOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << '\n';
    return 2;
  }
  std::stringstream text;
  text << in.rdbuf();
  gaplab::ExperimentConfig cfg;
  try {
    cfg = gaplab::parse_config_text(text.str());
  } catch (const gaplab::ConfigError& e) {
    std::cerr << "config error at " << e.path() << ": " << e.what() << '\n';
    return 2;
  }
  const auto out = gaplab::run_experiment(cfg, opt);
  for (const auto& c : out.checks) std::cout << (c.passed ? "ok    " : "FAIL  ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
  if (out.status == 2) {
    std::cerr << "config error: " << out.message << '\n';
    return 2;
  }
  for (const auto& f : gaplab::write_outcome(out, cfg, opt)) std::cout << "wrote " << f << '\n';
  if (out.status != 0) std::cerr << "error: " << out.message << '\n';
  return out.status;
}

int selftest(const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out_dir, unsigned jobs) {
  gaplab::AcceptanceOptions opt;
  if (seed) opt.seed = *seed;
  opt.jobs = jobs;
  const auto run = gaplab::run_acceptance(opt, [](const gaplab::CriterionResult& r) { std::cout << gaplab::format_line(r) << std::endl; });
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    gaplab::write_json((std::filesystem::path(*out_dir) / "selftest.json").string(), gaplab::acceptance_report(run, opt));
  }
  std::cout << (run.passed() ? "selftest: all criteria passed" : "selftest: failures present") << '\n';
  return run.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaplab: spectral gaps, Kazhdan constants, expanders and warped cones"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  unsigned jobs = 1;
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out-dir", out_dir, "override the output directory");
  app.add_option("--jobs", jobs, "worker threads for Monte Carlo stages")->check(CLI::PositiveNumber);

  std::string config;
  auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
  run->add_option("config", config, "config file")->required();
  auto* self = app.add_subcommand("selftest", "run the acceptance criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (run->parsed()) {
      gaplab::RunOptions opt;
      opt.seed = seed;
      opt.out_dir = out_dir;
      opt.jobs = jobs;
      return run_config(config, opt);
    }
    if (self->parsed()) return selftest(seed, out_dir, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
