// kzlab: experiment runner.
//
//   kzlab quadruplets --d 2 --L 1 --K 3 --oracle
//   kzlab quadruplets --d 2 --K 2 --L 1..6 --scaling
//   kzlab simulate --config run.ini --set sim.rho=0.1 --out runs/a
//   kzlab moments --dir runs/a --test chain2
//   kzlab kinetic scan --config kinetic.ini
//
// Exit codes: 0 pass, 1 usage error, 2 numerical failure, 3 statistical test
// failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kzlab/commands.hpp"
#include "kzlab/io.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "key = value config file ([section] headers allowed)");
  app->add_option("-s,--set", c.overrides, "override a parameter, key=value (repeatable)");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("-o,--out", c.out, "output directory (default $KZLAB_OUT_DIR or ./kzlab_out)");
}

kzlab::CommandContext make_context(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  kzlab::CommandContext ctx;
  if (!c.config.empty()) ctx.params = kzlab::load_config(c.config);
  for (const auto& [key, value] : flags) ctx.params[key] = value;
  for (const auto& o : c.overrides) kzlab::apply_override(ctx.params, o);
  ctx.seed = c.seed;
  ctx.threads = c.threads;
  ctx.out_dir = c.out;
  ctx.log = &std::cout;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kzlab: resonant wave-turbulence experiments"};
  app.require_subcommand(1);

  Common common;

  auto* quads = app.add_subcommand("quadruplets", "enumerate resonant quadruplets");
  add_common(quads, common);
  std::string q_d, q_L, q_K, q_k, q_probe;
  bool q_oracle = false, q_scaling = false;
  quads->add_option("--d", q_d, "dimension");
  quads->add_option("--L", q_L, "box scale, or a list / range a..b with --scaling");
  quads->add_option("--K", q_K, "cutoff |k| <= K");
  quads->add_option("--k", q_k, "restrict to one mode, integer components separated by ';'");
  quads->add_option("--probe", q_probe, "physical probe wavevector for --scaling, e.g. 1,0");
  quads->add_flag("--oracle", q_oracle, "compare against brute-force enumeration");
  quads->add_flag("--scaling", q_scaling, "count scaling over the L list");

  auto* sim = app.add_subcommand("simulate", "run an ensemble of the effective or full system");
  add_common(sim, common);
  std::string s_mode;
  sim->add_option("--mode", s_mode, "effective or full")->check(CLI::IsMember({"effective", "full"}));

  auto* mom = app.add_subcommand("moments", "moment-chain and closure tests on a simulate output");
  add_common(mom, common);
  std::string m_dir, m_test;
  mom->add_option("--dir", m_dir, "simulate output directory");
  mom->add_option("--test", m_test, "chain2, chain4, closure or ou")
      ->check(CLI::IsMember({"chain2", "chain4", "closure", "ou"}));

  auto* kin = app.add_subcommand("kinetic", "continuum kinetic equation");
  add_common(kin, common);
  std::string k_action;
  kin->add_option("action", k_action, "scan, evolve, rj-check or kz-exponents")
      ->required()
      ->check(CLI::IsMember({"scan", "evolve", "rj-check", "kz-exponents"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kzlab::kExitUsage;
  }

  return kzlab::run_guarded(std::cerr, [&]() -> int {
    std::vector<std::pair<std::string, std::string>> flags;
    auto put = [&flags](const char* key, const std::string& v) {
      if (!v.empty()) flags.emplace_back(key, v);
    };
    if (*quads) {
      put("d", q_d);
      put("L", q_L);
      put("K", q_K);
      put("k", q_k);
      put("probe", q_probe);
      if (q_oracle) flags.emplace_back("oracle", "true");
      if (q_scaling) flags.emplace_back("scaling", "true");
      return kzlab::cmd_quadruplets(make_context(common, flags));
    }
    if (*sim) {
      put("sim.mode", s_mode);
      return kzlab::cmd_simulate(make_context(common, flags));
    }
    if (*mom) {
      put("dir", m_dir);
      put("test", m_test);
      return kzlab::cmd_moments(make_context(common, flags));
    }
    return kzlab::cmd_kinetic(make_context(common, flags), k_action);
  });
}
